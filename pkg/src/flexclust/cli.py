"""flexclust command-line interface.

Subcommands::

    flexclust synth    --out DIR [--spec FILE] [--days N] [--seed S] [--full-day]
    flexclust run      --input PATH... --out DIR [options]
    flexclust features --input PATH... --out DIR [options]
    flexclust cluster  --features FILE --out DIR [options]
    flexclust plot     --clusters FILE --features FILE --out FILE

Exit codes: 0 success, 2 configuration error, 3 data error, 4 internal failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from datetime import date
from pathlib import Path

from . import cluster, features, pipeline, synth
from .config import MODE_FLAGS, RunConfig, build_config, read_config_file
from .errors import ConfigError, DataError, FlexclustError
from .pipeline import StageError
from .plot import write_scatter_svg

logger = logging.getLogger("flexclust")


def _pipeline_flags(p: argparse.ArgumentParser, with_input: bool = True, with_cluster: bool = True) -> None:
    # defaults are None so that unset flags fall through to the config file
    p.add_argument("--config", help="flat 'key = value' file mirroring the flag names")
    if with_input:
        p.add_argument("--input", nargs="+", action="extend", help="reading CSV files or directories")
        p.add_argument("--holidays", help="text file with one ISO date per line")
        p.add_argument("--max-gap-min", type=float, help="longest gap bridged by interpolation (default 30)")
        p.add_argument("--min-valid-days", type=int, help="valid working days needed to keep a household (default 20)")
        p.add_argument("--min-slot-fraction", type=float, help="present share of 48 peak slots for a valid day (default 0.9)")
        p.add_argument("--sd-ddof", type=int, choices=[0, 1], help="0 = population sd (default), 1 = sample sd")
    p.add_argument("--mode", choices=sorted(MODE_FLAGS), help="2attr (default) or 3attr")
    if with_cluster:
        p.add_argument("--k", type=int, help="number of clusters (default 4)")
        p.add_argument("--restarts", type=int, help="k-means restarts (default 50)")
        p.add_argument("--seed", type=int, help="base seed (default 0)")
        p.add_argument("--max-iter", type=int, help="Lloyd iteration cap (default 300)")
        p.add_argument("--tol", type=float, help="relative wcss change to stop at (default 1e-9)")
        p.add_argument("--no-standardize", dest="standardize", action="store_false", default=None,
                       help="cluster in raw units instead of z-scores")
    p.add_argument("--out", help="output directory (default ./out)")
    p.add_argument("--threads", type=int, help="worker threads (default: CPU count)")


def _config(args: argparse.Namespace) -> RunConfig:
    return build_config(_file_values(args), _flag_values(args))


def _file_values(args: argparse.Namespace) -> dict:
    return read_config_file(args.config) if args.config else {}


def _flag_values(args: argparse.Namespace) -> dict:
    names = set(RunConfig.__dataclass_fields__)
    return {k: v for k, v in vars(args).items() if k in names}


def cmd_run(args: argparse.Namespace) -> int:
    cfg = _config(args)
    if not cfg.input:
        raise StageError("ingest", DataError("no --input given"))
    result = pipeline.run(cfg, export_aligned=args.export_aligned)
    print(
        f"{len(result.features)} households clustered into {cfg.k} groups "
        f"(wcss {result.model.wcss:.6g}); outputs in {cfg.out}"
    )
    return 0


def cmd_features(args: argparse.Namespace) -> int:
    cfg = _config(args)
    if not cfg.input:
        raise StageError("ingest", DataError("no --input given"))
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    result = pipeline.compute_features(cfg, out / pipeline.ALIGNED_FILE if args.export_aligned else None)
    result.report["timings_s"] = result.timings
    pipeline.write_outputs(out, result.features, None, None, result.report)
    print(f"{len(result.features)} feature rows written to {out / pipeline.FEATURES_FILE}")
    return 0


def cmd_cluster(args: argparse.Namespace) -> int:
    file_values = _file_values(args)
    cfg = build_config(file_values, _flag_values(args))
    timings: dict[str, float] = {}
    with pipeline.stage("features", timings):
        feats = features.read_features_csv(args.features)
        available = features.features_mode(feats)
    # an explicit mode may drop the third attribute; otherwise use what the file has
    explicit = args.mode is not None or "mode" in file_values
    mode = cfg.feature_mode if explicit else available
    if mode == features.THREE_ATTR and available != features.THREE_ATTR:
        raise StageError("cluster", ConfigError("3attr mode needs features with sd_time_of_min"))
    cfg.mode = {v: k for k, v in MODE_FLAGS.items()}[mode]
    model, params = pipeline.cluster_features(feats, cfg, mode, timings)
    if mode == features.TWO_ATTR and available == features.THREE_ATTR:
        feats = [features.FeatureVector(f.household_id, f.mean_evening_power, f.sd_time_of_max, None,
                                        f.n_days, f.usage_rank) for f in feats]
    report = {
        "config": cfg.to_dict(),
        "features_file": str(args.features),
        "cluster": pipeline.cluster_summary(model, params),
        "timings_s": timings,
    }
    pipeline.write_outputs(Path(cfg.out), feats, model, params, report)
    print(f"{len(feats)} households clustered (wcss {model.wcss:.6g}); outputs in {cfg.out}")
    return 0


def cmd_plot(args: argparse.Namespace) -> int:
    timings: dict[str, float] = {}
    with pipeline.stage("plot", timings):
        doc = cluster.read_clusters_json(args.clusters)
        feats = features.read_features_csv(args.features)
        out = Path(args.out)
        if out.is_dir():
            out = out / pipeline.SCATTER_FILE
        write_scatter_svg(doc, feats, out)
    print(f"plot written to {out}")
    return 0


def cmd_synth(args: argparse.Namespace) -> int:
    timings: dict[str, float] = {}
    with pipeline.stage("synth", timings):
        spec = synth.load_spec(args.spec)
        start = date.fromisoformat(args.start) if args.start else synth.DEFAULT_START
        cohort = synth.generate(spec, args.days, args.seed, start=start, full_day=args.full_day)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        n = synth.write_readings_csv(cohort, out / "readings.csv")
        synth.write_truth_csv(cohort, out / "truth.csv")
        (out / "spec.json").write_text(synth.dump_spec(spec) + "\n", encoding="utf-8")
    print(f"{len(cohort.truth)} households, {n} readings written to {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="flexclust",
        description="Cluster households by the regularity of their evening electricity use.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", metavar="command")

    p = sub.add_parser("run", help="full pipeline: readings to labelled clusters")
    _pipeline_flags(p)
    p.add_argument("--export-aligned", action="store_true", help="also write the aligned 5-minute series")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("features", help="readings to features CSV")
    _pipeline_flags(p, with_cluster=False)
    p.add_argument("--export-aligned", action="store_true", help="also write the aligned 5-minute series")
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("cluster", help="features CSV to clusters JSON and plot")
    p.add_argument("--features", required=True, help="features CSV from 'run' or 'features'")
    _pipeline_flags(p, with_input=False)
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("plot", help="redraw the scatter SVG from run artifacts")
    p.add_argument("--clusters", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--out", required=True, help="SVG path or directory")
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("synth", help="generate a synthetic cohort with ground truth")
    p.add_argument("--spec", help="JSON group spec (default: bundled four-group spec)")
    p.add_argument("--days", type=int, default=365, help="calendar days to simulate (default 365)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--start", help="first simulated date, ISO format (default 2011-01-03)")
    p.add_argument("--full-day", action="store_true", help="emit all 288 readings per day, not just 15:00-21:00")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    if not args.command:
        parser.print_help()
        return 2
    try:
        return args.func(args)
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except FlexclustError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (OSError, ValueError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        logger.exception("internal failure")
        print(f"internal error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
