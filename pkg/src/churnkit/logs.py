"""Typed access to per-player action-log CSV files.

A dataset directory holds one header-less CSV per player (``players/<id>.csv``
or flat ``<id>.csv``) with rows

    ``YYYY-MM-DD HH:MM:SS.mmm,<action name>,key=value,key=value,...``

plus a ``labels.csv`` sidecar that parsing never reads.  Row vocabulary and
detail-field semantics come from an :class:`ActionTaxonomy` loaded from a JSON
config; the packaged default has 82 actions in 6 categories and 8 action
groups.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import date, datetime, timedelta
from importlib import resources
from pathlib import Path

CATEGORIES = ("connection", "character", "item", "skill", "quest", "guild")
DETAIL_KINDS = ("count", "amount", "id", "level", "score")

# Per-file fraction of rows that may be rejected before the file is refused.
REJECTION_BUDGET = 0.01


class TaxonomyError(ValueError):
    pass


class ParseError(ValueError):
    pass


@dataclass(frozen=True)
class ActionSpec:
    """One action type: its category and the detail fields it carries."""

    name: str
    category: str
    details: dict[str, str] = field(default_factory=dict)  # field name -> kind


@dataclass(frozen=True)
class ActionTaxonomy:
    """Validated action vocabulary, detail schemas, and action groups."""

    actions: tuple[ActionSpec, ...]
    groups: dict[str, tuple[str, ...]]
    login_actions: frozenset[str]
    guild_membership_actions: frozenset[str]

    def __post_init__(self):
        names = [a.name for a in self.actions]
        if len(names) != len(set(names)):
            dupes = sorted({n for n in names if names.count(n) > 1})
            raise TaxonomyError(f"duplicate action names: {dupes}")
        known = set(names)
        for a in self.actions:
            if a.category not in CATEGORIES:
                raise TaxonomyError(f"unknown category {a.category!r} for action {a.name!r}")
            for f_name, kind in a.details.items():
                if kind not in DETAIL_KINDS:
                    raise TaxonomyError(f"unknown detail kind {kind!r} on {a.name!r}.{f_name}")
        for group, members in self.groups.items():
            for m in members:
                if m not in known:
                    raise TaxonomyError(f"group {group!r} references unknown action {m!r}")
        for n in self.login_actions | self.guild_membership_actions:
            if n not in known:
                raise TaxonomyError(f"marker action {n!r} not in taxonomy")
        for n in self.login_actions:
            if self.category_of(n) != "connection":
                raise TaxonomyError(f"login action {n!r} is not connection-category")

    def index_of(self, name: str) -> int:
        return self._index()[name]

    def _index(self) -> dict[str, int]:
        idx = self.__dict__.get("_index_cache")
        if idx is None:
            idx = {a.name: i for i, a in enumerate(self.actions)}
            object.__setattr__(self, "_index_cache", idx)
        return idx

    def __contains__(self, name: str) -> bool:
        return name in self._index()

    def category_of(self, name: str) -> str:
        return self.actions[self.index_of(name)].category

    def is_login(self, name: str) -> bool:
        return name in self.login_actions

    def detail_kind(self, action: str, field_name: str) -> str | None:
        return self.actions[self.index_of(action)].details.get(field_name)

    @property
    def n_actions(self) -> int:
        return len(self.actions)

    @property
    def categories_used(self) -> tuple[str, ...]:
        return tuple(c for c in CATEGORIES if any(a.category == c for a in self.actions))


def resolve_taxonomy(path=None) -> ActionTaxonomy:
    """Load and validate a taxonomy config; ``None`` loads the packaged default."""
    if path is None:
        raw = resources.files("churnkit.data").joinpath("default_taxonomy.json").read_text()
    else:
        raw = Path(path).read_text()
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as e:
        raise TaxonomyError(f"taxonomy config is not valid JSON: {e}") from e
    if doc.get("format") != "churnkit-taxonomy":
        raise TaxonomyError("not a churnkit taxonomy config (missing format tag)")
    actions = tuple(
        ActionSpec(name=a["name"], category=a["category"], details=dict(a.get("details", {})))
        for a in doc["actions"]
    )
    return ActionTaxonomy(
        actions=actions,
        groups={g: tuple(members) for g, members in doc.get("groups", {}).items()},
        login_actions=frozenset(doc.get("login_actions", [])),
        guild_membership_actions=frozenset(doc.get("guild_membership_actions", [])),
    )


@dataclass(slots=True)
class LogRecord:
    """One timestamped action with its parsed detail fields."""

    timestamp: datetime
    action: str
    details: dict

    def detail_date(self) -> date:
        return self.timestamp.date()


@dataclass(slots=True)
class PlayerLog:
    """Time-ordered action records for one player."""

    player_id: str
    records: list
    rejected_rows: int = 0

    def __len__(self) -> int:
        return len(self.records)


@dataclass(frozen=True)
class DataPeriod:
    """Inclusive calendar-day range of observable logs."""

    start: date
    end: date

    def __post_init__(self):
        if self.end < self.start:
            raise ValueError("period end precedes start")

    @property
    def n_days(self) -> int:
        return (self.end - self.start).days + 1

    def day_index(self, d: date) -> int:
        return (d - self.start).days

    def contains(self, d: date) -> bool:
        return self.start <= d <= self.end

    def day(self, index: int) -> date:
        return self.start + timedelta(days=index)


def format_timestamp(ts: datetime) -> str:
    ms = ts.microsecond // 1000
    return (
        f"{ts.year:04d}-{ts.month:02d}-{ts.day:02d} "
        f"{ts.hour:02d}:{ts.minute:02d}:{ts.second:02d}.{ms:03d}"
    )


def parse_timestamp(text: str) -> datetime:
    # Fixed-width "YYYY-MM-DD HH:MM:SS.mmm"; manual slicing is ~10x faster
    # than strptime, which matters at millions of rows.
    if len(text) != 23 or text[4] != "-" or text[7] != "-" or text[10] != " " \
            or text[13] != ":" or text[16] != ":" or text[19] != ".":
        raise ValueError(f"malformed timestamp {text!r}")
    try:
        return datetime(
            int(text[0:4]), int(text[5:7]), int(text[8:10]),
            int(text[11:13]), int(text[14:16]), int(text[17:19]),
            int(text[20:23]) * 1000,
        )
    except ValueError as e:
        raise ValueError(f"malformed timestamp {text!r}") from e


def _parse_row(line: str, taxonomy: ActionTaxonomy) -> LogRecord:
    parts = line.split(",")
    if len(parts) < 2:
        raise ValueError("row has fewer than two columns")
    ts = parse_timestamp(parts[0])
    action = parts[1]
    if action not in taxonomy:
        raise ValueError(f"unknown action {action!r}")
    details = {}
    for chunk in parts[2:]:
        if not chunk:
            continue
        key, sep, value = chunk.partition("=")
        if not sep:
            raise ValueError(f"detail column {chunk!r} is not key=value")
        kind = taxonomy.detail_kind(action, key)
        if kind is not None and kind != "id":
            details[key] = float(value)  # ValueError rejects the row
        else:
            details[key] = value
    return LogRecord(ts, action, details)


def parse_player_file(path, taxonomy: ActionTaxonomy) -> PlayerLog:
    """Parse one per-player CSV into a time-sorted :class:`PlayerLog`.

    Malformed rows (bad timestamp, unknown action, broken detail pair) are
    dropped and counted on ``rejected_rows``; the file is refused outright
    when more than :data:`REJECTION_BUDGET` of its rows are bad, or when no
    valid rows remain.
    """
    path = Path(path)
    records: list[LogRecord] = []
    rejected = 0
    total = 0
    with open(path, "r", newline="") as f:
        for line in f:
            line = line.rstrip("\r\n")
            if not line:
                continue
            total += 1
            try:
                records.append(_parse_row(line, taxonomy))
            except ValueError:
                rejected += 1
    if total == 0:
        raise ParseError(f"{path}: empty log file")
    if rejected > REJECTION_BUDGET * total:
        raise ParseError(f"{path}: {rejected}/{total} rows rejected (budget {REJECTION_BUDGET:.0%})")
    if not records:
        raise ParseError(f"{path}: no parseable rows")
    records.sort(key=lambda r: r.timestamp)  # stable: equal stamps keep file order
    return PlayerLog(player_id=path.stem, records=records, rejected_rows=rejected)


RESERVED_FILES = ("labels.csv", "dataset.json")


def player_files(directory) -> list[Path]:
    """Player CSV paths for a dataset directory, sorted by player id."""
    directory = Path(directory)
    root = directory / "players" if (directory / "players").is_dir() else directory
    files = [p for p in root.glob("*.csv") if p.name not in RESERVED_FILES]
    files.sort(key=lambda p: p.stem)
    stems = [p.stem for p in files]
    if len(stems) != len(set(stems)):
        dupes = sorted({s for s in stems if stems.count(s) > 1})
        raise ParseError(f"duplicate player ids in {root}: {dupes}")
    if not files:
        raise ParseError(f"no player files in {root}")
    return files


def iter_dataset(directory, taxonomy: ActionTaxonomy):
    """Yield PlayerLogs one at a time, ordered by player id (memory-flat)."""
    for p in player_files(directory):
        yield parse_player_file(p, taxonomy)


def load_dataset(directory, taxonomy: ActionTaxonomy, threads: int = 1) -> list[PlayerLog]:
    """Parse every player file; result is ordered by player id regardless of
    thread count."""
    files = player_files(directory)
    if threads <= 1:
        return [parse_player_file(p, taxonomy) for p in files]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda p: parse_player_file(p, taxonomy), files))
