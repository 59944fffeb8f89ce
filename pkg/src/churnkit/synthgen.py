"""Synthetic per-player action-log datasets with known churn ground truth.

Players are drawn from behavioral archetypes.  Each archetype fixes a daily
session intensity (Poisson), an action budget per session, and a per-day quit
hazard; a player's quit day is an exponential lifetime under that hazard.  A
global hazard scale is calibrated by bisection so the realized churn fraction
hits the configured target.  Everything downstream is derived from the
simulated log itself, so stored labels always agree with
:func:`derive_ground_truth` replayed over the full-horizon log.

Churn label: no connection-category login in days (28, 56] after the last
data-period day.  Week boundaries follow the convention that "week k after
the period" covers days (7(k-1), 7k].

Activity rules that keep the labels clean:

* every player gets a session on day 0, so logs are nonempty in-period;
* gaps between active days are capped at 13 days while a player is alive,
  so anyone alive past the churn window necessarily logged in inside it
  (hence ``censored`` implies ``not churned``);
* the quit day itself always carries a final session, which makes the
  bisection target exact: a player churns iff their lifetime ends before
  day ``period_days + 28``.

Under ``free_to_play`` the level curve (and with it target levels, equipment
scores, and experience amounts) is scaled up relative to ``subscription``,
mirroring a billing-model shift; action-count distributions stay put.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from datetime import date, datetime, timedelta
from pathlib import Path

import numpy as np

from ._util import atomic_write_text, fmt_float, rng_stream
from .logs import ActionTaxonomy, DataPeriod, LogRecord, PlayerLog, format_timestamp, resolve_taxonomy

_TAG = 1  # stream namespace for player simulation

LABELS_FILENAME = "labels.csv"
META_FILENAME = "dataset.json"
LABELS_HEADER = "player_id,churned,survival_days,censored"

CHURN_WINDOW_OPEN = 28   # exclusive, days after period end
CHURN_WINDOW_CLOSE = 56  # inclusive, days after period end

# Monday..Sunday session-intensity factors (weekends run hotter).
DOW_FACTOR = (1.0, 0.95, 0.95, 1.0, 1.1, 1.45, 1.35)

_LEVEL_COEF = 6.0
_FREE_TO_PLAY_LEVEL_MULT = 1.6
_FREE_TO_PLAY_XP_MULT = 2.5
_WIND_DOWN_DAYS = 10      # activity tapers this many days before quitting
_MAX_IDLE_DAYS = 13       # forced login after this many silent days
_SESSION_CAP_SECONDS = 10800


@dataclass(frozen=True)
class Archetype:
    """Behavioral profile a simulated player is drawn from."""

    name: str
    sessions_per_day: float
    actions_per_session: float
    quit_hazard: float                 # per-day; 0 means never quits
    intensity_halflife_days: float | None = None
    start_level: int = 1

    def intensity(self, day: int) -> float:
        lam = self.sessions_per_day
        if self.intensity_halflife_days:
            lam *= 0.5 ** (day / self.intensity_halflife_days)
        return lam


DEFAULT_ARCHETYPES: dict[str, Archetype] = {
    "hardcore": Archetype("hardcore", 2.6, 18.0, 0.003, None, 10),
    "regular": Archetype("regular", 1.4, 13.0, 0.010, None, 5),
    "casual": Archetype("casual", 0.55, 8.0, 0.028, None, 2),
    "lapsing": Archetype("lapsing", 1.0, 10.0, 0.055, 30.0, 4),
}

DEFAULT_MIX = (("hardcore", 0.20), ("regular", 0.35), ("casual", 0.30), ("lapsing", 0.15))

BUSINESS_MODELS = ("subscription", "free_to_play")


class GeneratorError(ValueError):
    pass


@dataclass(frozen=True)
class GeneratorConfig:
    n_players: int
    data_weeks: int = 6
    label_weeks: int = 8
    target_churn_rate: float = 0.30
    business_model: str = "subscription"
    archetype_mix: tuple = DEFAULT_MIX
    seed: int = 0
    start_date: date = date(2017, 4, 1)
    archetypes: dict = field(default_factory=lambda: dict(DEFAULT_ARCHETYPES))

    def __post_init__(self):
        if self.n_players <= 0:
            raise GeneratorError("n_players must be positive")
        if self.data_weeks <= 0:
            raise GeneratorError("data_weeks must be positive")
        if self.label_weeks != 8:
            raise GeneratorError("label_weeks is fixed at 8")
        if not 0.0 <= self.target_churn_rate <= 1.0:
            raise GeneratorError("target_churn_rate must lie in [0, 1]")
        if self.business_model not in BUSINESS_MODELS:
            raise GeneratorError(f"business_model must be one of {BUSINESS_MODELS}")
        total = sum(frac for _, frac in self.archetype_mix)
        if abs(total - 1.0) > 1e-9:
            raise GeneratorError(f"archetype fractions sum to {total}, expected 1")
        for name, frac in self.archetype_mix:
            if name not in self.archetypes:
                raise GeneratorError(f"archetype_mix references unknown archetype {name!r}")
            if frac < 0:
                raise GeneratorError("archetype fractions must be nonnegative")

    @property
    def period(self) -> DataPeriod:
        days = self.data_weeks * 7
        return DataPeriod(self.start_date, self.start_date + timedelta(days=days - 1))

    @property
    def horizon_days(self) -> int:
        """Last simulated day index (period + 8-week label horizon)."""
        return self.data_weeks * 7 - 1 + CHURN_WINDOW_CLOSE


@dataclass(frozen=True)
class GroundTruth:
    player_id: str
    churned: bool
    true_survival_days: int
    censored: bool


@dataclass
class Dataset:
    """In-memory generated population: full-horizon logs plus labels."""

    logs: list
    truths: list
    period: DataPeriod
    config: GeneratorConfig


def derive_ground_truth(full_log: PlayerLog, data_period: DataPeriod,
                        taxonomy: ActionTaxonomy) -> GroundTruth:
    """Label one player from their untruncated log.

    The taxonomy identifies connection-category logins; only those count for
    the churn window test.
    """
    last_in: date | None = None
    last_any: date | None = None
    login_in_window = False
    end = data_period.end
    for rec in full_log.records:
        d = rec.timestamp.date()
        if d <= end:
            last_in = d if last_in is None or d > last_in else last_in
        if last_any is None or d > last_any:
            last_any = d
        if not login_in_window and taxonomy.is_login(rec.action):
            offset = (d - end).days
            if CHURN_WINDOW_OPEN < offset <= CHURN_WINDOW_CLOSE:
                login_in_window = True
    if last_in is None:
        raise GeneratorError(f"{full_log.player_id}: no in-period actions")
    return GroundTruth(
        player_id=full_log.player_id,
        churned=not login_in_window,
        true_survival_days=(last_any - last_in).days,
        censored=(last_any - end).days >= CHURN_WINDOW_CLOSE,
    )


def _assign_archetypes(config: GeneratorConfig) -> list[Archetype]:
    """Deterministic largest-remainder allocation of players to archetypes."""
    n = config.n_players
    names = [name for name, _ in config.archetype_mix]
    fracs = np.array([frac for _, frac in config.archetype_mix])
    ideal = fracs * n
    counts = np.floor(ideal).astype(int)
    remainder = ideal - counts
    for i in np.argsort(-remainder, kind="stable")[: n - counts.sum()]:
        counts[i] += 1
    out: list[Archetype] = []
    for name, c in zip(names, counts):
        out.extend([config.archetypes[name]] * int(c))
    return out


def _lifetime_uniforms(config: GeneratorConfig) -> np.ndarray:
    """First uniform draw of every player stream (reused by the simulator)."""
    return np.array([rng_stream(config.seed, _TAG, i).random() for i in range(config.n_players)])


def calibrate_hazard_scale(config: GeneratorConfig) -> float:
    """Bisect the global hazard scale so the churn fraction hits the target.

    A player churns iff their exponential lifetime ends before
    ``period_days + CHURN_WINDOW_OPEN`` days; that predicate is monotone in
    the scale, so 80 bisection steps pin the achievable fraction to within
    one player of the target.
    """
    u = _lifetime_uniforms(config)
    hazards = np.array([a.quit_hazard for a in _assign_archetypes(config)])
    cutoff = config.data_weeks * 7 + CHURN_WINDOW_OPEN
    base = -np.log1p(-u)  # Exp(1) lifetimes before hazard scaling

    def frac(scale: float) -> float:
        with np.errstate(divide="ignore"):
            life = np.where(hazards > 0, base / np.maximum(hazards * scale, 1e-300), np.inf)
        return float(np.mean(life < cutoff))

    lo, hi = 1e-9, 1e9
    target = config.target_churn_rate
    if frac(hi) <= target:
        return hi
    if frac(lo) >= target:
        return lo
    for _ in range(80):
        mid = math.sqrt(lo * hi)  # hazard scales live on a log axis
        if frac(mid) < target:
            lo = mid
        else:
            hi = mid
    return hi


def _action_pool(taxonomy: ActionTaxonomy):
    """Indices and draw probabilities for in-session action picks."""
    structural = set(taxonomy.login_actions) | {"Leave world"}
    base_by_category = {
        "connection": 0.6, "character": 1.2, "item": 1.4,
        "skill": 1.6, "quest": 1.8, "guild": 0.25,
    }
    overrides = {
        "Gain experience": 4.5, "Use attack skill": 3.0, "Complete a quest": 2.2,
        "Save equipped item": 1.2, "Accept a quest": 2.0, "Pick up item": 2.2,
        "Use item": 1.8, "Die": 0.5, "Create a guild": 0.05, "Join a guild": 0.08,
        "Disband a guild": 0.02, "Delete character": 0.02, "Create character": 0.05,
    }
    idx, w = [], []
    for i, a in enumerate(taxonomy.actions):
        if a.name in structural:
            continue
        idx.append(i)
        w.append(overrides.get(a.name, base_by_category.get(a.category, 1.0)))
    if not idx:  # degenerate taxonomy: sessions are login-only
        return np.array([], dtype=int), np.array([])
    w = np.array(w, dtype=float)
    return np.array(idx, dtype=int), w / w.sum()


def _make_details(rng, action, taxonomy, state) -> dict:
    out = {}
    spec = taxonomy.actions[taxonomy.index_of(action)]
    for f_name, kind in spec.details.items():
        if f_name == "actor_id":
            out[f_name] = state["actor"]
        elif f_name == "character_level":
            out[f_name] = float(state["level"])
        elif f_name == "target_level":
            out[f_name] = float(max(1, state["level"] + int(rng.integers(-3, 4))))
        elif f_name == "equipment_score":
            out[f_name] = float(state["level"] * 10 + int(rng.integers(0, 10)))
        elif f_name == "experience":
            out[f_name] = round(float((20.0 + rng.exponential(60.0)) * state["xp_mult"]), 1)
        elif f_name == "money_earned" or f_name == "money_spent":
            out[f_name] = round(float(rng.lognormal(3.0, 0.9)), 2)
        elif kind == "id":
            out[f_name] = f"{f_name[:1]}{int(rng.integers(0, 400)):03d}"
        elif kind == "level":
            out[f_name] = float(max(1, state["level"] + int(rng.integers(-2, 3))))
        elif kind == "score":
            out[f_name] = float(int(rng.integers(0, 1000)))
        elif kind == "count":
            out[f_name] = float(int(rng.integers(1, 6)))
        else:  # amount
            out[f_name] = round(float(rng.exponential(50.0)), 2)
    return out


def simulate_player(player_index: int, config: GeneratorConfig, taxonomy: ActionTaxonomy,
                    archetype: Archetype, hazard_scale: float) -> PlayerLog:
    """Deterministically simulate one player's full-horizon log.

    Draws come from the stream ``(seed, player_index)`` only, so population
    results are independent of scheduling.
    """
    rng = rng_stream(config.seed, _TAG, player_index)
    u = rng.random()
    hazard = archetype.quit_hazard * hazard_scale
    lifetime = math.inf if hazard <= 0 else -math.log1p(-u) / hazard
    last_day = min(int(lifetime), config.horizon_days) if math.isfinite(lifetime) else config.horizon_days

    player_id = f"p{player_index:05d}"
    n_actors = int(rng.choice(3, p=[0.6, 0.3, 0.1])) + 1
    actors = [f"{player_id}_c{j}" for j in range(n_actors)]
    personal = rng.uniform(0.9, 1.1)
    level_mult = _FREE_TO_PLAY_LEVEL_MULT if config.business_model == "free_to_play" else 1.0
    xp_mult = _FREE_TO_PLAY_XP_MULT if config.business_model == "free_to_play" else 1.0
    server = f"s{int(rng.integers(0, 20)):02d}"
    pool_idx, pool_p = _action_pool(taxonomy)
    login = sorted(taxonomy.login_actions)[0] if taxonomy.login_actions else None
    has_leave = "Leave world" in taxonomy

    state = {"actor": actors[0], "level": archetype.start_level, "xp_mult": xp_mult}
    records: list[LogRecord] = []
    idle = 0
    wind_down_start = last_day - _WIND_DOWN_DAYS if math.isfinite(lifetime) else math.inf

    for d in range(last_day + 1):
        day_date = config.start_date + timedelta(days=d)
        lam = archetype.intensity(d) * DOW_FACTOR[day_date.weekday()]
        act_mean = archetype.actions_per_session
        if d >= wind_down_start:
            lam *= 0.5
            act_mean *= 0.6
        k = int(rng.poisson(min(lam, 8.0)))
        if d == 0 or d == last_day or idle >= _MAX_IDLE_DAYS:
            k = max(k, 1)
        if k == 0:
            idle += 1
            continue
        idle = 0
        starts = np.sort(rng.uniform(21600.0, 84600.0, size=k))
        day_base = datetime(day_date.year, day_date.month, day_date.day)
        state["level"] = archetype.start_level + int(_LEVEL_COEF * level_mult * personal * math.sqrt(d + 1))
        for s_i in range(k):
            state["actor"] = actors[int(rng.choice(n_actors, p=None))] if n_actors > 1 else actors[0]
            cap = starts[s_i] + _SESSION_CAP_SECONDS
            if s_i + 1 < k:
                cap = min(cap, starts[s_i + 1] - 60.0)
            t = starts[s_i]
            if login is not None:
                records.append(LogRecord(
                    day_base + timedelta(milliseconds=int(t * 1000)), login,
                    {"actor_id": state["actor"], "server_id": server,
                     "character_level": float(state["level"])},
                ))
            n_act = 1 + int(rng.poisson(min(act_mean, 60.0)))
            if len(pool_idx):
                choices = rng.choice(pool_idx, size=n_act, p=pool_p)
                gaps = np.clip(rng.exponential(20.0, size=n_act) + 1.0, 1.0, 600.0)
                for a_i in range(n_act):
                    t += gaps[a_i]
                    if t > cap:
                        break
                    name = taxonomy.actions[int(choices[a_i])].name
                    records.append(LogRecord(
                        day_base + timedelta(milliseconds=int(t * 1000)), name,
                        _make_details(rng, name, taxonomy, state),
                    ))
            if has_leave:
                records.append(LogRecord(
                    day_base + timedelta(milliseconds=int((t + 30.0) * 1000)), "Leave world",
                    {"actor_id": state["actor"]},
                ))
    return PlayerLog(player_id=player_id, records=records)


def generate_dataset(config: GeneratorConfig, taxonomy: ActionTaxonomy | None = None,
                     threads: int = 1) -> Dataset:
    """Simulate the whole population in memory.

    Use :func:`generate_to_dir` for large populations; it streams players to
    disk instead of holding every log at once.
    """
    taxonomy = taxonomy or resolve_taxonomy()
    scale = calibrate_hazard_scale(config)
    archetypes = _assign_archetypes(config)
    period = config.period

    def build(i: int) -> PlayerLog:
        return simulate_player(i, config, taxonomy, archetypes[i], scale)

    if threads <= 1:
        logs = [build(i) for i in range(config.n_players)]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            logs = list(pool.map(build, range(config.n_players)))
    truths = [derive_ground_truth(log, period, taxonomy) for log in logs]
    return Dataset(logs=logs, truths=truths, period=period, config=config)


def truncate_to_period(log: PlayerLog, period: DataPeriod) -> PlayerLog:
    kept = [r for r in log.records if r.timestamp.date() <= period.end]
    return PlayerLog(player_id=log.player_id, records=kept)


def _log_to_csv(log: PlayerLog, period: DataPeriod) -> str:
    rows = []
    for r in log.records:
        if r.timestamp.date() > period.end:
            continue
        parts = [format_timestamp(r.timestamp), r.action]
        for k, v in r.details.items():
            parts.append(f"{k}={v if isinstance(v, str) else fmt_float(v)}")
        rows.append(",".join(parts))
    return "\n".join(rows) + "\n"


def _labels_csv(truths) -> str:
    lines = [LABELS_HEADER]
    for t in sorted(truths, key=lambda t: t.player_id):
        lines.append(f"{t.player_id},{int(t.churned)},{t.true_survival_days},{int(t.censored)}")
    return "\n".join(lines) + "\n"


def _meta_json(config: GeneratorConfig, period: DataPeriod) -> str:
    doc = {
        "format": "churnkit-dataset",
        "version": 1,
        "start_date": period.start.isoformat(),
        "end_date": period.end.isoformat(),
        "data_weeks": config.data_weeks,
        "label_weeks": config.label_weeks,
        "business_model": config.business_model,
        "n_players": config.n_players,
        "seed": config.seed,
    }
    return json.dumps(doc, indent=2) + "\n"


def write_dataset(dataset: Dataset, directory) -> None:
    """Write one in-period CSV per player plus the labels sidecar.

    The sidecar is evaluation-only input; fitting code never reads it.
    """
    directory = Path(directory)
    players_dir = directory / "players"
    os.makedirs(players_dir, exist_ok=True)
    ids = [log.player_id for log in dataset.logs]
    if len(ids) != len(set(ids)):
        raise GeneratorError("duplicate player ids in dataset")
    for log in dataset.logs:
        atomic_write_text(players_dir / f"{log.player_id}.csv", _log_to_csv(log, dataset.period))
    atomic_write_text(directory / LABELS_FILENAME, _labels_csv(dataset.truths))
    atomic_write_text(directory / META_FILENAME, _meta_json(dataset.config, dataset.period))


def generate_to_dir(config: GeneratorConfig, directory, taxonomy: ActionTaxonomy | None = None,
                    threads: int = 1) -> list[GroundTruth]:
    """Stream-generate a dataset directory without holding all logs in memory."""
    taxonomy = taxonomy or resolve_taxonomy()
    scale = calibrate_hazard_scale(config)
    archetypes = _assign_archetypes(config)
    period = config.period
    directory = Path(directory)
    players_dir = directory / "players"
    os.makedirs(players_dir, exist_ok=True)

    def build(i: int) -> GroundTruth:
        log = simulate_player(i, config, taxonomy, archetypes[i], scale)
        atomic_write_text(players_dir / f"{log.player_id}.csv", _log_to_csv(log, period))
        return derive_ground_truth(log, period, taxonomy)

    if threads <= 1:
        truths = [build(i) for i in range(config.n_players)]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            truths = list(pool.map(build, range(config.n_players)))
    atomic_write_text(directory / LABELS_FILENAME, _labels_csv(truths))
    atomic_write_text(directory / META_FILENAME, _meta_json(config, period))
    return truths


def read_labels(path) -> list[GroundTruth]:
    """Load the sidecar written by :func:`write_dataset`, ordered by player id."""
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0] != LABELS_HEADER:
        raise GeneratorError(f"{path}: not a labels sidecar")
    out = []
    for line in lines[1:]:
        if not line:
            continue
        pid, churned, days, censored = line.split(",")
        out.append(GroundTruth(pid, bool(int(churned)), int(days), bool(int(censored))))
    out.sort(key=lambda t: t.player_id)
    return out


def read_period(directory) -> DataPeriod:
    """Recover the data period from a dataset directory's metadata file."""
    meta = json.loads((Path(directory) / META_FILENAME).read_text())
    return DataPeriod(date.fromisoformat(meta["start_date"]), date.fromisoformat(meta["end_date"]))
