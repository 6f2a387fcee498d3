"""Synthetic cohorts with planted flexibility structure, plus test oracles.

Each household gets its own generator seeded from ``(seed, household index)``
so results do not depend on generation order.
"""

from __future__ import annotations

import csv
import itertools
import json
import math
from dataclasses import asdict, dataclass, fields
from datetime import date
from importlib import resources
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import ConfigError, ContractError
from .ingest import HEADER, HouseholdReadings
from .timegrid import DAY_SECONDS, GRID_STEP, PEAK_START_MINUTE, day_number, working_mask

DEFAULT_START = date(2011, 1, 3)  # a Monday
WINDOW_MARGIN_MIN = 60  # evening-only emission covers 15:00-21:00


@dataclass(frozen=True)
class GroupSpec:
    name: str
    n_households: int
    base_power: float
    peak_power: float
    peak_time_mean: float
    peak_time_jitter_sd: float
    noise_sd: float
    reading_interval_jitter: float = 60.0
    peak_width_sd: float = 20.0
    trough_depth: float = 0.0
    trough_time_mean: float = 30.0
    trough_time_jitter_sd: float = 0.0
    trough_width_sd: float = 10.0

    def validate(self) -> None:
        if not self.name:
            raise ConfigError("group name must not be empty")
        if self.n_households < 1:
            raise ConfigError(f"{self.name}: n_households must be >= 1")
        for attr in ("base_power", "peak_power", "peak_time_jitter_sd", "noise_sd",
                     "trough_depth", "trough_time_jitter_sd"):
            v = getattr(self, attr)
            if not math.isfinite(v) or v < 0:
                raise ConfigError(f"{self.name}: {attr} must be finite and >= 0, got {v}")
        for attr in ("peak_width_sd", "trough_width_sd"):
            if not getattr(self, attr) > 0:
                raise ConfigError(f"{self.name}: {attr} must be > 0")
        for attr in ("peak_time_mean", "trough_time_mean"):
            if not 0 <= getattr(self, attr) <= 235:
                raise ConfigError(f"{self.name}: {attr} must lie in [0, 235]")
        if not 0 <= self.reading_interval_jitter < GRID_STEP / 2:
            raise ConfigError(f"{self.name}: reading_interval_jitter must lie in [0, 150) seconds")


@dataclass(frozen=True)
class SynthCohort:
    readings: dict[str, HouseholdReadings]
    truth: dict[str, str]
    spec: tuple[GroupSpec, ...]
    seed: int

    @property
    def n_readings(self) -> int:
        return sum(len(r) for r in self.readings.values())


def parse_spec(doc: Sequence[Mapping]) -> list[GroupSpec]:
    if isinstance(doc, Mapping):
        doc = doc.get("groups", [])
    known = {f.name for f in fields(GroupSpec)}
    groups = []
    for entry in doc:
        unknown = set(entry) - known
        if unknown:
            raise ConfigError(f"unknown group fields: {sorted(unknown)}")
        try:
            group = GroupSpec(**entry)
        except TypeError as exc:
            raise ConfigError(f"invalid group spec: {exc}") from None
        group.validate()
        groups.append(group)
    if not groups:
        raise ConfigError("spec defines no groups")
    if len({g.name for g in groups}) != len(groups):
        raise ConfigError("group names must be unique")
    return groups


def load_spec(path: str | Path | None = None) -> list[GroupSpec]:
    """Read a JSON group spec; ``None`` loads the bundled four-group default."""
    if path is None:
        text = resources.files("flexclust").joinpath("default_spec.json").read_text(encoding="utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"spec is not valid JSON: {exc}") from None
    return parse_spec(doc)


def dump_spec(spec: Sequence[GroupSpec]) -> str:
    return json.dumps({"groups": [asdict(g) for g in spec]}, indent=2)


def _household(
    g: GroupSpec, rng: np.random.Generator, days: np.ndarray, working: np.ndarray, full_day: bool
) -> tuple[np.ndarray, np.ndarray]:
    if full_day:
        lo, hi = 0, DAY_SECONDS
    else:
        lo = (PEAK_START_MINUTE - WINDOW_MARGIN_MIN) * 60
        hi = (PEAK_START_MINUTE + 240 + WINDOW_MARGIN_MIN) * 60 + GRID_STEP
    nominal = np.arange(lo, hi, GRID_STEP, dtype=np.int64)
    n_day, n_slot = len(days), len(nominal)

    j = int(g.reading_interval_jitter)
    offsets = rng.integers(-j, j + 1, size=(n_day, n_slot)) if j else np.zeros((n_day, n_slot), np.int64)
    tod = nominal[None, :] + offsets  # seconds since midnight
    minutes = tod / 60.0

    peak_centre = PEAK_START_MINUTE + g.peak_time_mean + rng.normal(0.0, 1.0, n_day) * g.peak_time_jitter_sd
    trough_centre = (
        PEAK_START_MINUTE + g.trough_time_mean + rng.normal(0.0, 1.0, n_day) * g.trough_time_jitter_sd
    )
    bump = g.peak_power * np.exp(-0.5 * ((minutes - peak_centre[:, None]) / g.peak_width_sd) ** 2)
    dip = g.trough_depth * np.exp(-0.5 * ((minutes - trough_centre[:, None]) / g.trough_width_sd) ** 2)
    activity = np.where(working[:, None], bump - dip, 0.0)
    noise = rng.normal(0.0, 1.0, (n_day, n_slot)) * g.noise_sd
    watts = np.round(np.maximum(g.base_power + activity + noise, 0.0), 1)

    # jitter < 150 s keeps neighbouring readings strictly ordered, even across midnight
    times = days[:, None] * DAY_SECONDS + tod
    return times.ravel(), watts.ravel()


def generate(
    spec: Sequence[GroupSpec],
    days: int,
    seed: int = 0,
    start: date = DEFAULT_START,
    full_day: bool = False,
    holidays: Sequence[date] = (),
) -> SynthCohort:
    """Generate readings for every household in ``spec`` over ``days`` calendar days.

    On working days each household shows one Gaussian activity bump around
    ``16:00 + peak_time_mean + N(0, jitter)``, plus an optional trough; other
    days carry only the base load. Readings fall near every 5-minute mark with
    uniform integer-second jitter. By default only 15:00-21:00 is emitted;
    ``full_day`` emits all 288 readings per day.
    """
    if days < 1:
        raise ConfigError("days must be >= 1")
    for g in spec:
        g.validate()
    if not spec:
        raise ConfigError("spec defines no groups")
    day_nums = day_number(start) + np.arange(days, dtype=np.int64)
    working = working_mask(day_nums, holidays)

    readings: dict[str, HouseholdReadings] = {}
    truth: dict[str, str] = {}
    total = sum(g.n_households for g in spec)
    width = max(3, len(str(total)))
    index = 0
    for g in spec:
        for _ in range(g.n_households):
            hid = f"h{index + 1:0{width}d}"
            rng = np.random.default_rng([seed & 0xFFFFFFFFFFFFFFFF, index])
            t, w = _household(g, rng, day_nums, working, full_day)
            readings[hid] = HouseholdReadings(hid, t, w)
            truth[hid] = g.name
            index += 1
    return SynthCohort(readings, truth, tuple(spec), seed)


def write_readings_csv(cohort: SynthCohort, path: str | Path) -> int:
    """Write readings in the ingest format; returns the number of data lines."""
    n = 0
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(HEADER + "\n")
        for hid in sorted(cohort.readings):
            r = cohort.readings[hid]
            stamps = np.datetime_as_string(r.times.astype("datetime64[s]"), unit="s").tolist()
            fh.write("".join([f"{hid},{ts},{w!r}\n" for ts, w in zip(stamps, r.watts.tolist())]))
            n += len(stamps)
    return n


def write_truth_csv(cohort: SynthCohort, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["household_id", "group"])
        for hid in sorted(cohort.truth):
            writer.writerow([hid, cohort.truth[hid]])


def read_truth_csv(path: str | Path) -> dict[str, str]:
    with open(path, encoding="utf-8", newline="") as fh:
        return {row["household_id"]: row["group"] for row in csv.DictReader(fh)}


# --- oracles -----------------------------------------------------------------

def oracle_sd(values: Sequence[float]) -> float:
    """Two-pass population standard deviation in plain Python."""
    vals = [float(v) for v in values]
    if not vals:
        raise ContractError("oracle_sd needs at least one value")
    mean = math.fsum(vals) / len(vals)
    return math.sqrt(math.fsum((v - mean) ** 2 for v in vals) / len(vals))


ORACLE_MAX_POINTS = 12
ORACLE_MAX_K = 3


def oracle_kmeans(points: Sequence[Sequence[float]], k: int) -> float:
    """Global minimum wcss by enumerating every partition into at most k parts."""
    pts = np.asarray(points, dtype=np.float64)
    n = len(pts)
    if n > ORACLE_MAX_POINTS or k > ORACLE_MAX_K:
        raise ContractError(
            f"instance too large for enumeration (n={n}, k={k}; limits {ORACLE_MAX_POINTS}, {ORACLE_MAX_K})"
        )
    if n == 0 or k < 1:
        raise ContractError("need at least one point and k >= 1")
    pts = pts - pts.mean(axis=0)  # centring keeps the sum-of-squares identity well conditioned
    # first point fixed in part 0 removes one factor of label symmetry
    tails = np.array(list(itertools.product(range(k), repeat=n - 1)), dtype=np.int64).reshape(-1, n - 1)
    labels = np.hstack([np.zeros((len(tails), 1), dtype=np.int64), tails])
    sq = (pts**2).sum(axis=1)
    cost = np.zeros(len(labels))
    for part in range(k):
        mask = (labels == part).astype(np.float64)
        count = mask.sum(axis=1)
        sums = mask @ pts
        with np.errstate(invalid="ignore", divide="ignore"):
            within = mask @ sq - np.where(count > 0, (sums**2).sum(axis=1) / count, 0.0)
        cost += within
    return float(max(cost.min(), 0.0))


def adjusted_rand_index(a: Mapping[str, object], b: Mapping[str, object]) -> float:
    """Adjusted Rand index of two assignments keyed by the same household ids."""
    if set(a) != set(b):
        raise ContractError("assignments cover different household sets")
    ids = sorted(a)
    n = len(ids)
    if n < 2:
        return 1.0
    _, ra = np.unique([str(a[h]) for h in ids], return_inverse=True)
    _, rb = np.unique([str(b[h]) for h in ids], return_inverse=True)
    table = np.zeros((ra.max() + 1, rb.max() + 1), dtype=np.int64)
    np.add.at(table, (ra, rb), 1)

    def pairs(x):
        return (x * (x - 1) // 2).sum()

    index = pairs(table)
    sum_a = pairs(table.sum(axis=1))
    sum_b = pairs(table.sum(axis=0))
    total = n * (n - 1) // 2
    expected = sum_a * sum_b / total
    max_index = (sum_a + sum_b) / 2
    if max_index == expected:
        return 1.0
    return float((index - expected) / (max_index - expected))
