"""Shared helpers: seeded RNG streams, deterministic file IO, small numerics."""

from __future__ import annotations

import hashlib
import os
import tempfile

import numpy as np


def rng_stream(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for (seed, key).

    Streams with distinct keys are statistically independent and do not
    depend on the order in which they are created, so per-unit work
    (players, trees, permutations) is schedule-independent under any
    thread count.
    """
    return np.random.default_rng(np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, *map(int, key)]))


def trapezoid(y, x) -> float:
    """Trapezoidal integral of samples y over grid x."""
    y = np.asarray(y, dtype=float)
    x = np.asarray(x, dtype=float)
    if y.shape != x.shape or y.ndim != 1:
        raise ValueError("y and x must be 1-D arrays of equal length")
    if len(x) < 2:
        return 0.0
    return float(np.sum(np.diff(x) * (y[1:] + y[:-1]) * 0.5))


def fmt_float(x) -> str:
    """Shortest round-trip decimal form, bit-stable across runs."""
    return repr(float(x))


def atomic_write_text(path, text: str) -> None:
    """Write-temp-then-rename so readers never observe partial files."""
    path = os.fspath(path)
    d = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix="~")
    try:
        with os.fdopen(fd, "w", newline="") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()
