"""Run configuration: built-in defaults < config file < command-line flags."""

from __future__ import annotations

import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Mapping

from . import cluster, timegrid
from .errors import ConfigError
from .features import THREE_ATTR, TWO_ATTR

MODE_FLAGS = {"2attr": TWO_ATTR, "3attr": THREE_ATTR}
PEAK_WINDOW = "16:00-20:00"


@dataclass
class RunConfig:
    input: list[str] = field(default_factory=list)
    holidays: str | None = None
    max_gap_min: float = timegrid.DEFAULT_MAX_GAP / 60
    min_valid_days: int = timegrid.DEFAULT_MIN_VALID_DAYS
    min_slot_fraction: float = timegrid.DEFAULT_MIN_SLOT_FRACTION
    mode: str = "2attr"
    k: int = cluster.DEFAULT_K
    restarts: int = cluster.DEFAULT_RESTARTS
    seed: int = 0
    standardize: bool = True
    max_iter: int = cluster.DEFAULT_MAX_ITER
    tol: float = cluster.DEFAULT_TOL
    sd_ddof: int = 0
    out: str = "out"
    threads: int = field(default_factory=lambda: os.cpu_count() or 1)

    @property
    def feature_mode(self) -> str:
        return MODE_FLAGS[self.mode]

    @property
    def max_gap_seconds(self) -> float:
        return self.max_gap_min * 60

    def validate(self) -> "RunConfig":
        if self.mode not in MODE_FLAGS:
            raise ConfigError(f"mode must be one of {sorted(MODE_FLAGS)}, got {self.mode!r}")
        if not self.max_gap_min > 0:
            raise ConfigError("max-gap-min must be > 0")
        if self.min_valid_days < 1:
            raise ConfigError("min-valid-days must be >= 1")
        if not 0 < self.min_slot_fraction <= 1:
            raise ConfigError("min-slot-fraction must lie in (0, 1]")
        if self.k < 1:
            raise ConfigError("k must be >= 1")
        if self.restarts < 1:
            raise ConfigError("restarts must be >= 1")
        if self.max_iter < 1:
            raise ConfigError("max-iter must be >= 1")
        if not self.tol >= 0:
            raise ConfigError("tol must be >= 0")
        if self.sd_ddof not in (0, 1):
            raise ConfigError("sd-ddof must be 0 (population) or 1 (sample)")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        return self

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["peak_window"] = PEAK_WINDOW
        d["grid_step_s"] = timegrid.GRID_STEP
        return d


_BOOL = {"true": True, "yes": True, "1": True, "false": False, "no": False, "0": False}


def _convert(name: str, raw: str) -> Any:
    kinds = {f.name: f.type for f in fields(RunConfig)}
    kind = kinds[name]
    try:
        if name == "input":
            return [p.strip() for p in raw.split(",") if p.strip()]
        if kind == "bool":
            return _BOOL[raw.strip().lower()]
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
    except (KeyError, ValueError):
        raise ConfigError(f"invalid value for {name}: {raw!r}") from None
    return raw.strip()


def read_config_file(path: str | Path) -> dict[str, Any]:
    """Parse flat ``key = value`` lines; keys use the flag spelling (``max-gap-min``)."""
    known = {f.name for f in fields(RunConfig)}
    values: dict[str, Any] = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None
    for n, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{n}: expected 'key = value'")
        key, raw = (s.strip() for s in line.split("=", 1))
        name = key.lstrip("-").replace("-", "_")
        if name == "no_standardize":
            values["standardize"] = not _convert("standardize", raw)
            continue
        if name not in known:
            raise ConfigError(f"{path}:{n}: unknown key {key!r}")
        values[name] = _convert(name, raw)
    return values


def build_config(file_values: Mapping[str, Any], flag_values: Mapping[str, Any]) -> RunConfig:
    """Merge layers; flags set to ``None`` count as not given."""
    cfg = RunConfig()
    for layer in (file_values, flag_values):
        for key, value in layer.items():
            if value is not None:
                setattr(cfg, key, value)
    return cfg.validate()
