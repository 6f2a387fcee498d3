"""Raw meter-reading ingestion.

Input files are UTF-8 CSV with the header ``household_id,timestamp,watts``.
Timestamps are naive local wall-clock times; internally they are stored as
integer seconds since 1970-01-01T00:00:00 with no zone or DST handling.

Bad lines never abort a load. They are counted per reason in the
:class:`LoadReport`, and the first few are kept with their line numbers.
"""

from __future__ import annotations

import logging
import math
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np
import polars as pl

from .errors import (
    ContractError,
    DataError,
    ReadingFormatError,
    ReadingParseError,
    ReadingValidationError,
)

logger = logging.getLogger(__name__)

HEADER = "household_id,timestamp,watts"
TIMESTAMP_FORMAT = "%Y-%m-%dT%H:%M:%S"
EPOCH = datetime(1970, 1, 1)

_TS_PATTERN = r"^[0-9]{4}-[0-9]{2}-[0-9]{2}T[0-9]{2}:[0-9]{2}:[0-9]{2}$"
_NUM_PATTERN = r"^[+-]?(?:[0-9]+(?:\.[0-9]*)?|\.[0-9]+)(?:[eE][+-]?[0-9]+)?$"
_TS_RE = re.compile(_TS_PATTERN)
_NUM_RE = re.compile(_NUM_PATTERN)

# reason codes used by the bulk loader; 0 = accepted
_REASONS = {1: "format", 2: "parse", 3: "validation"}
_MAX_SAMPLE_ERRORS = 20


@dataclass(frozen=True)
class MeterReading:
    household_id: str
    timestamp: datetime
    power: float


def to_epoch_seconds(ts: datetime) -> int:
    return int((ts - EPOCH) // timedelta(seconds=1))


def from_epoch_seconds(seconds: int) -> datetime:
    return EPOCH + timedelta(seconds=int(seconds))


def parse_reading(line: str, lineno: int | None = None) -> MeterReading:
    """Parse one CSV record (without header) into a :class:`MeterReading`.

    Raises ReadingFormatError for a wrong column count, ReadingParseError
    for a bad timestamp and ReadingValidationError for a bad power value or
    empty household id. Error messages carry ``lineno`` when given.
    """
    where = f"line {lineno}: " if lineno is not None else ""
    fields = line.rstrip("\r\n").split(",")
    if len(fields) != 3:
        raise ReadingFormatError(f"{where}expected 3 columns, found {len(fields)}")
    hid, ts_text, watts_text = fields
    if not _TS_RE.match(ts_text):
        raise ReadingParseError(f"{where}malformed timestamp {ts_text!r}")
    try:
        ts = datetime.strptime(ts_text, TIMESTAMP_FORMAT)
    except ValueError as exc:
        raise ReadingParseError(f"{where}invalid timestamp {ts_text!r}: {exc}") from None
    if not hid:
        raise ReadingValidationError(f"{where}empty household_id")
    if not _NUM_RE.match(watts_text):
        raise ReadingValidationError(f"{where}non-numeric power {watts_text!r}")
    power = float(watts_text)
    if not math.isfinite(power):
        raise ReadingValidationError(f"{where}non-finite power {watts_text!r}")
    if power < 0:
        raise ReadingValidationError(f"{where}negative power {watts_text!r}")
    return MeterReading(hid, ts, power)


@dataclass(frozen=True)
class HouseholdReadings:
    """Time-ordered readings of one household as parallel arrays."""

    household_id: str
    times: np.ndarray  # int64 epoch seconds, strictly increasing
    watts: np.ndarray  # float64

    def __len__(self) -> int:
        return len(self.times)

    def __iter__(self) -> Iterator[MeterReading]:
        for t, w in zip(self.times.tolist(), self.watts.tolist()):
            yield MeterReading(self.household_id, from_epoch_seconds(t), w)

    @classmethod
    def from_readings(cls, readings: Sequence[MeterReading]) -> "HouseholdReadings":
        if not readings:
            raise ContractError("cannot build a series from zero readings")
        ids = {r.household_id for r in readings}
        if len(ids) != 1:
            raise ContractError(f"readings span several households: {sorted(ids)}")
        times = np.array([to_epoch_seconds(r.timestamp) for r in readings], dtype=np.int64)
        watts = np.array([r.power for r in readings], dtype=np.float64)
        return cls(readings[0].household_id, times, watts)


@dataclass
class LoadReport:
    files: list[str] = field(default_factory=list)
    lines: int = 0
    accepted: int = 0
    rejected: int = 0
    rejected_by_reason: dict[str, int] = field(
        default_factory=lambda: {"format": 0, "parse": 0, "validation": 0}
    )
    duplicates: int = 0
    readings_per_household: dict[str, int] = field(default_factory=dict)
    sample_errors: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "files": self.files,
            "lines": self.lines,
            "accepted": self.accepted,
            "rejected": self.rejected,
            "rejected_by_reason": self.rejected_by_reason,
            "duplicates_collapsed": self.duplicates,
            "readings_kept": self.accepted - self.duplicates,
            "households": len(self.readings_per_household),
            "readings_per_household": self.readings_per_household,
            "sample_errors": self.sample_errors,
            "warnings": self.warnings,
        }


@dataclass(frozen=True)
class RawCohort:
    readings: dict[str, HouseholdReadings]
    source_files: list[str]
    report: LoadReport

    @property
    def household_ids(self) -> list[str]:
        return sorted(self.readings)

    def __len__(self) -> int:
        return len(self.readings)


@dataclass
class _FileResult:
    path: str
    frame: pl.DataFrame  # accepted rows: hid, t, w, order
    lines: int
    rejected_by_reason: dict[str, int]
    sample_errors: list[str]
    warning: str | None = None


def _check_header(path: Path) -> bool:
    """Return whether data lines follow the header; raise DataError for a bad header."""
    with open(path, "rb") as fh:
        first = fh.readline()
        more = bool(fh.read(1))
    if not first:
        return False
    header = first.decode("utf-8", errors="replace").lstrip("\ufeff").rstrip("\r\n")
    if header != HEADER:
        raise DataError(f"{path}: expected header {HEADER!r}, found {header!r}")
    return more


def _read_file(path: Path) -> _FileResult:
    if not _check_header(path):
        return _FileResult(str(path), _empty_frame(), 0, _zero_reasons(), [], f"{path}: empty file, no records")

    lines = pl.scan_csv(
        path,
        has_header=False,
        skip_rows=1,
        separator="\x1f",
        quote_char=None,
        schema={"line": pl.Utf8},
        truncate_ragged_lines=True,
        encoding="utf8-lossy",
    )
    line = pl.col("line").str.strip_chars_end("\r")
    df = (
        lines.with_row_index("lineno", offset=2)
        .with_columns(
            line.str.count_matches(",", literal=True).alias("ncomma"),
            line.str.split_exact(",", 2).alias("f"),
        )
        .unnest("f")
        .with_columns(
            pl.col("field_1")
            .str.strptime(pl.Datetime("us"), TIMESTAMP_FORMAT, strict=False)
            .alias("ts"),
            pl.col("field_2").cast(pl.Float64, strict=False).alias("w"),
        )
        .with_columns(
            pl.when(pl.col("line").is_null() | (pl.col("ncomma") != 2))
            .then(1)
            .when(~pl.col("field_1").str.contains(_TS_PATTERN) | pl.col("ts").is_null())
            .then(2)
            .when(
                (pl.col("field_0") == "")
                | ~pl.col("field_2").str.contains(_NUM_PATTERN)
                | ~pl.col("w").is_finite()
                | (pl.col("w") < 0)
            )
            .then(3)
            .otherwise(0)
            .cast(pl.UInt8)
            .alias("reason")
        )
        .select(
            pl.col("field_0").alias("hid"),
            pl.col("ts").dt.epoch("s").alias("t"),
            "w",
            "reason",
            "lineno",
        )
        .collect(engine="streaming")
    )
    n_lines = df.height

    counts = dict(df.group_by("reason").len().iter_rows())
    reasons = {name: int(counts.get(code, 0)) for code, name in _REASONS.items()}
    bad = df.filter(pl.col("reason") != 0).head(_MAX_SAMPLE_ERRORS)
    samples = [
        f"{path}:{lineno}: {_REASONS[reason]} error" for reason, lineno in bad.select("reason", "lineno").iter_rows()
    ]
    accepted = (
        df.filter(pl.col("reason") == 0)
        .select("hid", "t", "w", pl.col("lineno").cast(pl.Int64).alias("order"))
    )
    warning = f"{path}: no valid records" if accepted.height == 0 else None
    return _FileResult(str(path), accepted, n_lines, reasons, samples, warning)


def _empty_frame() -> pl.DataFrame:
    return pl.DataFrame(
        schema={"hid": pl.Utf8, "t": pl.Int64, "w": pl.Float64, "order": pl.Int64}
    )


def _zero_reasons() -> dict[str, int]:
    return {name: 0 for name in _REASONS.values()}


def _has_reading_header(path: Path) -> bool:
    try:
        _check_header(path)
        return True
    except DataError:
        return False


def expand_inputs(paths: Iterable[str | Path]) -> list[Path]:
    """Expand directories to the ``*.csv`` reading files they contain.

    Inside a directory, CSVs with a different header (for example a truth
    file written next to synthetic readings) are skipped with a warning.
    """
    out: list[Path] = []
    for p in map(Path, paths):
        if not p.is_dir():
            out.append(p)
            continue
        for f in sorted(p.glob("*.csv")):
            if _has_reading_header(f):
                out.append(f)
            else:
                logger.warning("skipping %s: not a readings file", f)
    return out


def load_cohort(paths: Sequence[str | Path], threads: int = 1) -> RawCohort:
    """Load and merge reading files into a :class:`RawCohort`.

    Files are processed in sorted path order, so the result does not depend
    on the order ``paths`` are given in. Exact duplicate
    ``(household_id, timestamp)`` pairs keep the first occurrence.
    """
    files = sorted({str(Path(p)) for p in paths})
    for f in files:
        if not Path(f).is_file():
            raise DataError(f"cannot read input file {f}")

    workers = max(1, min(threads, len(files)))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_read_file, map(Path, files)))
    else:
        results = [_read_file(Path(f)) for f in files]

    report = LoadReport(files=files)
    frames = []
    for file_index, res in enumerate(results):
        report.lines += res.lines
        for name, n in res.rejected_by_reason.items():
            report.rejected_by_reason[name] += n
        report.sample_errors.extend(res.sample_errors)
        if res.warning:
            report.warnings.append(res.warning)
            logger.warning(res.warning)
        frames.append(res.frame.with_columns(pl.lit(file_index, dtype=pl.Int64).alias("file")))
    report.rejected = sum(report.rejected_by_reason.values())
    report.sample_errors = report.sample_errors[:_MAX_SAMPLE_ERRORS]

    merged = pl.concat(frames) if frames else _empty_frame()
    del frames, results
    report.accepted = merged.height
    parts = merged.partition_by("hid", as_dict=True)
    del merged

    readings: dict[str, HouseholdReadings] = {}
    for (hid,), part in parts.items():
        t = part["t"].to_numpy()
        # sort by time, then by (file, line) so the first occurrence leads each duplicate run
        idx = np.lexsort((part["order"].to_numpy(), part["file"].to_numpy(), t))
        t = t[idx]
        first = np.ones(len(t), dtype=bool)
        first[1:] = t[1:] != t[:-1]
        times = np.ascontiguousarray(t[first], dtype=np.int64)
        watts = np.ascontiguousarray(part["w"].to_numpy()[idx][first], dtype=np.float64)
        report.duplicates += len(t) - len(times)
        times.flags.writeable = False
        watts.flags.writeable = False
        readings[hid] = HouseholdReadings(hid, times, watts)
    del parts
    readings = dict(sorted(readings.items()))
    report.readings_per_household = {hid: len(r) for hid, r in readings.items()}

    if report.accepted + report.rejected != report.lines:
        raise DataError("line accounting mismatch during load")
    logger.info(
        "loaded %d files: %d lines, %d accepted, %d rejected, %d duplicates, %d households",
        len(files), report.lines, report.accepted, report.rejected, report.duplicates, len(readings),
    )
    return RawCohort(readings, files, report)
