"""Per-household flexibility features from the working-day evening window."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from datetime import date
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ContractError, DataError
from .timegrid import (
    DEFAULT_MIN_SLOT_FRACTION,
    PEAK_SLOTS,
    AlignedSeries,
    date_of,
    peak_matrix,
    valid_rows,
    working_mask,
)

TWO_ATTR = "two_attr"
THREE_ATTR = "three_attr"
MODES = (TWO_ATTR, THREE_ATTR)

FEATURES_HEADER = [
    "household_id",
    "mean_evening_power_w",
    "sd_time_of_max_min",
    "sd_time_of_min_min",
    "n_days",
    "usage_rank",
]


@dataclass(frozen=True, eq=False)
class PeakDayProfile:
    household_id: str
    date: date
    slots: np.ndarray  # 48 values for 16:00..19:55, NaN = missing
    valid: bool
    time_of_max: int | None
    time_of_min: int | None
    mean_power: float


@dataclass(frozen=True)
class FeatureVector:
    household_id: str
    mean_evening_power: float
    sd_time_of_max: float
    sd_time_of_min: float | None
    n_days: int
    usage_rank: int = 0

    def attributes(self, mode: str) -> list[float]:
        attrs = [self.mean_evening_power, self.sd_time_of_max]
        if mode == THREE_ATTR:
            if self.sd_time_of_min is None:
                raise ContractError(f"{self.household_id}: no sd_time_of_min in two-attribute features")
            attrs.append(self.sd_time_of_min)
        return attrs


def attribute_names(mode: str) -> list[str]:
    check_mode(mode)
    names = ["mean_evening_power", "sd_time_of_max"]
    if mode == THREE_ATTR:
        names.append("sd_time_of_min")
    return names


def check_mode(mode: str) -> None:
    if mode not in MODES:
        raise ContractError(f"unknown feature mode {mode!r}; expected one of {MODES}")


def _extreme_minutes(slots: np.ndarray, kind: str) -> np.ndarray:
    # nanargmax/nanargmin return the first occurrence, i.e. the earliest slot
    if kind == "max":
        idx = np.nanargmax(slots, axis=-1)
    elif kind == "min":
        idx = np.nanargmin(slots, axis=-1)
    else:
        raise ContractError(f"kind must be 'max' or 'min', not {kind!r}")
    return 5 * idx


def extract_peak_days(
    series: AlignedSeries,
    holidays: Iterable[date] = (),
    min_slot_fraction: float = DEFAULT_MIN_SLOT_FRACTION,
) -> list[PeakDayProfile]:
    """One profile per working day that has any data in the evening window."""
    pm = peak_matrix(series)
    keep = working_mask(pm.days, holidays)
    days, mat = pm.days[keep], pm.slots[keep]
    valid = valid_rows(np.count_nonzero(~np.isnan(mat), axis=1), min_slot_fraction)
    tmax = np.full(len(days), -1)
    tmin = np.full(len(days), -1)
    if valid.any():
        tmax[valid] = _extreme_minutes(mat[valid], "max")
        tmin[valid] = _extreme_minutes(mat[valid], "min")
    means = np.nanmean(mat, axis=1) if len(days) else np.empty(0)
    out = []
    for i, d in enumerate(days.tolist()):
        row = mat[i].copy()
        row.flags.writeable = False
        out.append(
            PeakDayProfile(
                series.household_id,
                date_of(d),
                row,
                bool(valid[i]),
                int(tmax[i]) if valid[i] else None,
                int(tmin[i]) if valid[i] else None,
                float(means[i]),
            )
        )
    return out


def time_of_extreme(profile: PeakDayProfile, kind: str = "max") -> int:
    """Minutes after 16:00 of the extreme present slot; earliest slot wins ties."""
    if not profile.valid:
        raise ContractError(f"{profile.household_id} {profile.date}: profile is not valid")
    slots = np.asarray(profile.slots, dtype=np.float64)
    if slots.shape != (PEAK_SLOTS,):
        raise ContractError(f"expected {PEAK_SLOTS} slots, got {slots.shape}")
    return int(_extreme_minutes(slots, kind))


def flexibility_sd(times: Sequence[float], ddof: int = 0) -> float:
    """Standard deviation of per-day extreme times (population by default)."""
    arr = np.asarray(times, dtype=np.float64)
    if arr.size == 0:
        raise ContractError("flexibility_sd needs at least one value")
    if arr.size <= ddof:
        raise ContractError(f"need more than {ddof} values for ddof={ddof}")
    dev = arr - arr.mean()
    return float(math.sqrt(np.dot(dev, dev) / (arr.size - ddof)))


def household_features(
    profiles: Sequence[PeakDayProfile], mode: str = TWO_ATTR, ddof: int = 0
) -> FeatureVector:
    check_mode(mode)
    valid = [p for p in profiles if p.valid]
    if not valid:
        hid = profiles[0].household_id if profiles else "?"
        raise DataError(f"{hid}: no valid peak-window days")
    hid = valid[0].household_id
    mean_power = float(np.mean([p.mean_power for p in valid]))
    sd_max = flexibility_sd([p.time_of_max for p in valid], ddof)
    sd_min = flexibility_sd([p.time_of_min for p in valid], ddof) if mode == THREE_ATTR else None
    return FeatureVector(hid, mean_power, sd_max, sd_min, len(valid))


def rank_by_usage(features: Iterable[FeatureVector]) -> list[FeatureVector]:
    """Assign usage_rank (1 = highest mean evening power, ties by id); sorted by id."""
    ordered = sorted(features, key=lambda f: (-f.mean_evening_power, f.household_id))
    ranked = [
        FeatureVector(f.household_id, f.mean_evening_power, f.sd_time_of_max, f.sd_time_of_min, f.n_days, rank)
        for rank, f in enumerate(ordered, start=1)
    ]
    return sorted(ranked, key=lambda f: f.household_id)


def build_features(
    profiles: Mapping[str, Sequence[PeakDayProfile]],
    mode: str = TWO_ATTR,
    ddof: int = 0,
) -> list[FeatureVector]:
    per_household = [household_features(profiles[h], mode, ddof) for h in sorted(profiles)]
    return rank_by_usage(per_household)


def write_features_csv(features: Iterable[FeatureVector], path: str | Path) -> None:
    # repr keeps full float precision so the cluster step reproduces a full run
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(FEATURES_HEADER)
        for f in sorted(features, key=lambda f: f.household_id):
            writer.writerow([
                f.household_id,
                repr(f.mean_evening_power),
                repr(f.sd_time_of_max),
                "" if f.sd_time_of_min is None else repr(f.sd_time_of_min),
                f.n_days,
                f.usage_rank,
            ])


def read_features_csv(path: str | Path) -> list[FeatureVector]:
    out = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != FEATURES_HEADER:
            raise DataError(f"{path}: unexpected features header {header}")
        for n, row in enumerate(reader, start=2):
            if len(row) != len(FEATURES_HEADER):
                raise DataError(f"{path}:{n}: expected {len(FEATURES_HEADER)} columns")
            try:
                out.append(FeatureVector(
                    row[0],
                    float(row[1]),
                    float(row[2]),
                    float(row[3]) if row[3] else None,
                    int(row[4]),
                    int(row[5]),
                ))
            except ValueError as exc:
                raise DataError(f"{path}:{n}: {exc}") from None
    return out


def features_mode(features: Sequence[FeatureVector]) -> str:
    """Infer the mode of a loaded feature set from the sd_time_of_min column."""
    has_min = {f.sd_time_of_min is not None for f in features}
    if len(has_min) > 1:
        raise DataError("features mix two- and three-attribute rows")
    return THREE_ATTR if has_min == {True} else TWO_ATTR
