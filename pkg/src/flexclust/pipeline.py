"""End-to-end orchestration shared by the CLI subcommands."""

from __future__ import annotations

import json
import logging
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

from . import cluster, features, ingest, timegrid
from .config import RunConfig
from .errors import ConfigError, DataError, FlexclustError
from .features import FeatureVector
from .plot import write_scatter_svg

logger = logging.getLogger(__name__)

FEATURES_FILE = "features.csv"
CLUSTERS_FILE = "clusters.json"
REPORT_FILE = "run_report.json"
SCATTER_FILE = "scatter.svg"
ALIGNED_FILE = "aligned.csv"


class StageError(Exception):
    """Wraps a pipeline failure with the name of the stage it came from."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"{stage}: {cause}")
        self.stage = stage
        self.cause = cause
        self.exit_code = getattr(cause, "exit_code", 4)


@contextmanager
def stage(name: str, timings: dict[str, float]) -> Iterator[None]:
    t0 = time.perf_counter()
    try:
        yield
    except StageError:
        raise
    except (FlexclustError, OSError) as exc:
        raise StageError(name, exc) from exc
    finally:
        timings[name] = round(time.perf_counter() - t0, 3)


@dataclass
class RunResult:
    features: list[FeatureVector]
    report: dict
    model: cluster.ClusterModel | None = None
    params: cluster.StandardizationParams | None = None
    timings: dict[str, float] = field(default_factory=dict)


def compute_features(cfg: RunConfig, export_aligned: Path | None = None) -> RunResult:
    """ingest -> align -> clean -> features, with conservation counts."""
    timings: dict[str, float] = {}
    with stage("ingest", timings):
        paths = ingest.expand_inputs(cfg.input)
        if not paths:
            raise DataError(f"no input files found in {cfg.input}")
        cohort = ingest.load_cohort(paths, threads=cfg.threads)
        if len(cohort) == 0:
            raise DataError("no valid readings in the input files")
        holidays = timegrid.read_holidays(cfg.holidays) if cfg.holidays else set()

    with stage("align", timings):
        aligned = timegrid.align_all(cohort.readings, cfg.max_gap_seconds, threads=cfg.threads)
        if export_aligned is not None:
            timegrid.write_aligned_csv(aligned.values(), export_aligned)

    with stage("clean", timings):
        cleaning = timegrid.clean_cohort(
            aligned.values(), cfg.min_valid_days, cfg.min_slot_fraction, holidays
        )

    with stage("features", timings):
        profiles = {
            hid: features.extract_peak_days(aligned[hid], holidays, cfg.min_slot_fraction)
            for hid in cleaning.retained
        }
        feats = features.build_features(profiles, cfg.feature_mode, cfg.sd_ddof)

    per_household = cohort.report.readings_per_household
    kept = cohort.report.accepted - cohort.report.duplicates
    retained_readings = sum(per_household[h] for h in cleaning.retained)
    rejected_readings = sum(per_household[h] for h in cleaning.rejected)
    conservation = {
        "input_lines": cohort.report.lines,
        "accepted_lines": cohort.report.accepted,
        "rejected_lines": cohort.report.rejected,
        "duplicates_collapsed": cohort.report.duplicates,
        "readings_kept": kept,
        "readings_in_retained_households": retained_readings,
        "readings_in_rejected_households": rejected_readings,
        "balanced": (
            cohort.report.accepted + cohort.report.rejected == cohort.report.lines
            and retained_readings + rejected_readings == kept
        ),
    }
    if not conservation["balanced"]:
        raise StageError("clean", DataError("reading conservation check failed"))

    load = cohort.report.to_dict()
    load.pop("readings_per_household")
    report = {
        "config": cfg.to_dict(),
        "load": load,
        "cleaning": {
            "households_loaded": len(cohort),
            "households_retained": len(cleaning.retained),
            "households_rejected": len(cleaning.rejected),
            "rejected": cleaning.rejected,
            "min_valid_days": cleaning.min_valid_days,
            "min_slot_fraction": cleaning.min_slot_fraction,
        },
        "conservation": conservation,
        "features": {
            "mode": cfg.feature_mode,
            "households": len(feats),
            "sd": "population" if cfg.sd_ddof == 0 else "sample",
        },
    }
    return RunResult(feats, report, timings=timings)


def cluster_features(
    feats: Sequence[FeatureVector], cfg: RunConfig, mode: str, timings: dict[str, float]
) -> tuple[cluster.ClusterModel, cluster.StandardizationParams]:
    with stage("cluster", timings):
        if len(feats) < cfg.k:
            raise ConfigError(f"only {len(feats)} households retained; need at least k={cfg.k}")
        points, ids, params = cluster.standardize(feats, mode, cfg.k, cfg.standardize)
        model = cluster.kmeans_best(
            points, cfg.k, cfg.restarts, cfg.seed, cfg.max_iter, cfg.tol, ids=ids, threads=cfg.threads
        )
    with stage("label", timings):
        model = cluster.label_clusters(model, params)
    return model, params


def cluster_summary(model: cluster.ClusterModel, params: cluster.StandardizationParams) -> dict:
    sizes = {}
    for c in model.labels_.tolist():
        sizes[c] = sizes.get(c, 0) + 1
    return {
        "k": model.k,
        "wcss": model.wcss,
        "best_seed": model.seed,
        "restarts": model.restarts,
        "iterations_used": model.iterations_used,
        "standardized": params.enabled,
        "constant_attributes": [n for n, c in zip(params.names, params.constant) if c],
        "cluster_sizes": {str(c): sizes.get(c, 0) for c in range(model.k)},
        "labels": {str(c): name for c, name in model.labels.items()},
    }


def write_outputs(
    out: Path,
    feats: Sequence[FeatureVector] | None,
    model: cluster.ClusterModel | None,
    params: cluster.StandardizationParams | None,
    report: dict,
) -> None:
    out.mkdir(parents=True, exist_ok=True)
    if feats is not None:
        features.write_features_csv(feats, out / FEATURES_FILE)
    if model is not None and params is not None:
        cluster.write_clusters_json(model, params, out / CLUSTERS_FILE)
        doc = cluster.read_clusters_json(out / CLUSTERS_FILE)
        write_scatter_svg(doc, feats, out / SCATTER_FILE)
    (out / REPORT_FILE).write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")


def run(cfg: RunConfig, export_aligned: bool = False) -> RunResult:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    result = compute_features(cfg, out / ALIGNED_FILE if export_aligned else None)
    model, params = cluster_features(result.features, cfg, cfg.feature_mode, result.timings)
    result.model, result.params = model, params
    result.report["cluster"] = cluster_summary(model, params)
    result.report["timings_s"] = result.timings
    with stage("write", result.timings):
        write_outputs(out, result.features, model, params, result.report)
    return result
