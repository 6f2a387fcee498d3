"""Alignment of irregular readings onto exact 5-minute boundaries.

Also holds the working-day calendar and the insufficient-data cleaning rule,
which both operate on the 16:00-20:00 evening window.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import date, datetime, timedelta
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ContractError, DataError
from .ingest import EPOCH, HouseholdReadings, MeterReading

logger = logging.getLogger(__name__)

GRID_STEP = 300
DAY_SECONDS = 86_400
SLOTS_PER_DAY = DAY_SECONDS // GRID_STEP

PEAK_START_MINUTE = 16 * 60
PEAK_END_MINUTE = 20 * 60  # exclusive
PEAK_SLOTS = (PEAK_END_MINUTE - PEAK_START_MINUTE) // 5
PEAK_FIRST_SLOT = PEAK_START_MINUTE // 5

DEFAULT_MAX_GAP = 30 * 60
DEFAULT_MIN_VALID_DAYS = 20
DEFAULT_MIN_SLOT_FRACTION = 0.9

_EPOCH_DATE = EPOCH.date()
_SEASONS = {12: "winter", 1: "winter", 2: "winter", 3: "spring", 4: "spring", 5: "spring",
            6: "summer", 7: "summer", 8: "summer", 9: "autumn", 10: "autumn", 11: "autumn"}


@dataclass(frozen=True)
class AlignedSeries:
    """Power on consecutive grid slots starting at ``start``; NaN marks a missing slot."""

    household_id: str
    start: int  # epoch seconds of values[0], a multiple of GRID_STEP
    values: np.ndarray
    grid_step: int = GRID_STEP

    def __len__(self) -> int:
        return len(self.values)

    def times(self) -> np.ndarray:
        return self.start + GRID_STEP * np.arange(len(self.values), dtype=np.int64)

    @property
    def slots(self) -> dict[datetime, float | None]:
        return {
            EPOCH + timedelta(seconds=int(t)): (None if np.isnan(v) else float(v))
            for t, v in zip(self.times(), self.values)
        }

    @property
    def n_present(self) -> int:
        return int(np.count_nonzero(~np.isnan(self.values)))


def align(
    readings: HouseholdReadings | Sequence[MeterReading],
    max_gap: float = DEFAULT_MAX_GAP,
) -> AlignedSeries:
    """Linearly interpolate readings onto every grid boundary they cover.

    Only boundaries within [first reading, last reading] are produced. A
    boundary whose bracketing readings are more than ``max_gap`` seconds
    apart is missing, unless a reading falls exactly on it.
    """
    if not isinstance(readings, HouseholdReadings):
        readings = HouseholdReadings.from_readings(list(readings))
    if max_gap <= 0:
        raise ContractError("max_gap must be positive")
    t = np.asarray(readings.times, dtype=np.int64)
    v = np.asarray(readings.watts, dtype=np.float64)
    hid = readings.household_id
    if len(t) == 0:
        return AlignedSeries(hid, 0, np.empty(0))
    if np.any(np.diff(t) <= 0):
        raise ContractError(f"{hid}: readings are not strictly increasing in time")

    first = -(-int(t[0]) // GRID_STEP) * GRID_STEP
    last = (int(t[-1]) // GRID_STEP) * GRID_STEP
    if last < first:
        return AlignedSeries(hid, first, np.empty(0))
    grid = np.arange(first, last + 1, GRID_STEP, dtype=np.int64)

    left = np.searchsorted(t, grid, side="right") - 1
    exact = t[left] == grid
    right = np.minimum(left + 1, len(t) - 1)
    t0, t1 = t[left], t[right]
    v0, v1 = v[left], v[right]
    span = (t1 - t0).astype(np.float64)
    with np.errstate(invalid="ignore", divide="ignore"):
        frac = (grid - t0) / span
        out = v0 + frac * (v1 - v0)
    # rounding must not push a value outside its bracket
    out = np.clip(out, np.minimum(v0, v1), np.maximum(v0, v1))
    out[(t1 - t0) > max_gap] = np.nan
    out[exact] = v0[exact]
    return AlignedSeries(hid, first, out)


def align_all(
    cohort: Mapping[str, HouseholdReadings],
    max_gap: float = DEFAULT_MAX_GAP,
    threads: int = 1,
) -> dict[str, AlignedSeries]:
    ids = sorted(cohort)
    if threads > 1 and len(ids) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            series = list(pool.map(lambda h: align(cohort[h], max_gap), ids))
    else:
        series = [align(cohort[h], max_gap) for h in ids]
    return dict(zip(ids, series))


@dataclass(frozen=True)
class DayClass:
    date: date
    working: bool
    season: str


def season_of(d: date) -> str:
    return _SEASONS[d.month]


def classify_day(d: date, holidays: Iterable[date] = ()) -> DayClass:
    working = d.weekday() < 5 and d not in set(holidays)
    return DayClass(d, working, season_of(d))


def day_number(d: date) -> int:
    return (d - _EPOCH_DATE).days


def date_of(day: int) -> date:
    return _EPOCH_DATE + timedelta(days=int(day))


def working_mask(days: np.ndarray, holidays: Iterable[date] = ()) -> np.ndarray:
    """Vectorised working-day test for epoch day numbers."""
    days = np.asarray(days, dtype=np.int64)
    weekday = (days + 3) % 7  # 1970-01-01 was a Thursday; Monday = 0
    mask = weekday < 5
    hol = np.array(sorted(day_number(h) for h in holidays), dtype=np.int64)
    if len(hol):
        mask &= ~np.isin(days, hol)
    return mask


def read_holidays(path: str | Path) -> set[date]:
    out = set()
    for n, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        text = raw.strip()
        if not text or text.startswith("#"):
            continue
        try:
            out.add(date.fromisoformat(text))
        except ValueError:
            raise DataError(f"{path}:{n}: invalid holiday date {text!r}") from None
    return out


@dataclass(frozen=True)
class PeakMatrix:
    """Evening-window slots of every day that has any present peak value."""

    household_id: str
    days: np.ndarray  # epoch day numbers, ascending
    slots: np.ndarray  # shape (len(days), PEAK_SLOTS), NaN = missing

    def present_counts(self) -> np.ndarray:
        return np.count_nonzero(~np.isnan(self.slots), axis=1)


def peak_matrix(series: AlignedSeries) -> PeakMatrix:
    if len(series) == 0:
        return PeakMatrix(series.household_id, np.empty(0, np.int64), np.empty((0, PEAK_SLOTS)))
    times = series.times()
    day = times // DAY_SECONDS
    slot = (times % DAY_SECONDS) // GRID_STEP - PEAK_FIRST_SLOT
    keep = (slot >= 0) & (slot < PEAK_SLOTS) & ~np.isnan(series.values)
    day, slot, vals = day[keep], slot[keep], series.values[keep]
    days, row = np.unique(day, return_inverse=True)
    mat = np.full((len(days), PEAK_SLOTS), np.nan)
    mat[row, slot] = vals
    return PeakMatrix(series.household_id, days, mat)


def valid_rows(counts: np.ndarray, min_slot_fraction: float) -> np.ndarray:
    # small epsilon so e.g. 0.75 * 48 = 36 present slots counts as valid
    return counts >= min_slot_fraction * PEAK_SLOTS - 1e-9


@dataclass
class CleaningResult:
    retained: list[str]
    rejected: dict[str, int]
    valid_days: dict[str, int] = field(default_factory=dict)
    min_valid_days: int = DEFAULT_MIN_VALID_DAYS
    min_slot_fraction: float = DEFAULT_MIN_SLOT_FRACTION


def count_valid_days(
    series: AlignedSeries, min_slot_fraction: float, holidays: Iterable[date] = ()
) -> int:
    pm = peak_matrix(series)
    working = working_mask(pm.days, holidays)
    return int(np.count_nonzero(working & valid_rows(pm.present_counts(), min_slot_fraction)))


def clean_cohort(
    series: Iterable[AlignedSeries],
    min_valid_days: int = DEFAULT_MIN_VALID_DAYS,
    min_slot_fraction: float = DEFAULT_MIN_SLOT_FRACTION,
    holidays: Iterable[date] = (),
) -> CleaningResult:
    """Keep households with at least ``min_valid_days`` valid working-day windows.

    A window is valid when at least ``min_slot_fraction`` of its 48 slots
    are present. Rejected households are reported with their valid-day count.
    """
    if not 0 < min_slot_fraction <= 1:
        raise ContractError("min_slot_fraction must lie in (0, 1]")
    holidays = frozenset(holidays)
    result = CleaningResult([], {}, {}, min_valid_days, min_slot_fraction)
    for s in sorted(series, key=lambda s: s.household_id):
        n = count_valid_days(s, min_slot_fraction, holidays)
        result.valid_days[s.household_id] = n
        if n >= min_valid_days:
            result.retained.append(s.household_id)
        else:
            result.rejected[s.household_id] = n
    logger.info("cleaning kept %d of %d households", len(result.retained), len(result.valid_days))
    return result


def write_aligned_csv(series: Iterable[AlignedSeries], path: str | Path) -> None:
    """Debug export: ``household_id,slot_timestamp,watts``; empty watts = missing."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("household_id,slot_timestamp,watts\n")
        for s in sorted(series, key=lambda s: s.household_id):
            if len(s) == 0:
                continue
            stamps = np.datetime_as_string(s.times().astype("datetime64[s]"), unit="s")
            fh.writelines(
                f"{s.household_id},{ts},{'' if np.isnan(v) else repr(float(v))}\n"
                for ts, v in zip(stamps.tolist(), s.values.tolist())
            )
