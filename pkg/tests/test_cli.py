import csv
import json
import xml.etree.ElementTree as ET

import pytest

from flexclust.cli import main
from flexclust.config import RunConfig, build_config, read_config_file
from flexclust.errors import ConfigError


def run_ok(args):
    assert main(args) == 0


@pytest.fixture(scope="module")
def run_dir(small_cohort_dir, tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    run_ok(["run", "--input", str(small_cohort_dir), "--out", str(out), "--restarts", "10", "--threads", "1"])
    return out


def test_run_writes_all_artifacts(run_dir):
    for name in ("features.csv", "clusters.json", "run_report.json", "scatter.svg"):
        assert (run_dir / name).is_file()
    doc = json.loads((run_dir / "clusters.json").read_text())
    assert doc["k"] == 4
    assert sorted(doc["labels"].values()) == ["high_usage", "high_variability", "mid", "stable_low"]


def test_each_household_once_everywhere(run_dir):
    with open(run_dir / "features.csv") as fh:
        feat_ids = [row["household_id"] for row in csv.DictReader(fh)]
    doc = json.loads((run_dir / "clusters.json").read_text())
    cl_ids = [a["household_id"] for a in doc["assignments"]]
    svg = ET.parse(run_dir / "scatter.svg").getroot()
    svg_ids = [c.get("data-household") for c in svg.iter("{http://www.w3.org/2000/svg}circle")
               if c.get("class") == "point"]
    report = json.loads((run_dir / "run_report.json").read_text())
    assert len(feat_ids) == len(set(feat_ids)) == report["cleaning"]["households_retained"]
    assert sorted(feat_ids) == sorted(cl_ids) == sorted(svg_ids)


def test_report_echoes_effective_config(run_dir, small_cohort_dir):
    report = json.loads((run_dir / "run_report.json").read_text())
    cfg = report["config"]
    expected = RunConfig(input=[str(small_cohort_dir)], restarts=10, threads=1, out=str(run_dir)).to_dict()
    assert cfg == expected
    assert cfg["peak_window"] == "16:00-20:00"
    assert report["conservation"]["balanced"]
    assert report["cluster"]["restarts"] == 10


def test_features_then_cluster_matches_run(run_dir, small_cohort_dir, tmp_path):
    f_dir, c_dir = tmp_path / "f", tmp_path / "c"
    run_ok(["features", "--input", str(small_cohort_dir), "--out", str(f_dir), "--threads", "1"])
    assert (f_dir / "features.csv").read_bytes() == (run_dir / "features.csv").read_bytes()
    run_ok(["cluster", "--features", str(f_dir / "features.csv"), "--out", str(c_dir), "--restarts", "10",
            "--threads", "1"])
    assert (c_dir / "clusters.json").read_bytes() == (run_dir / "clusters.json").read_bytes()


def test_cluster_mode_from_features(small_cohort_dir, tmp_path):
    f_dir = tmp_path / "f"
    run_ok(["features", "--input", str(small_cohort_dir), "--out", str(f_dir), "--mode", "3attr"])
    run_ok(["cluster", "--features", str(f_dir / "features.csv"), "--out", str(tmp_path / "c3"), "--restarts", "3"])
    doc = json.loads((tmp_path / "c3" / "clusters.json").read_text())
    assert len(doc["centroids"]["original"][0]) == 3
    run_ok(["cluster", "--features", str(f_dir / "features.csv"), "--out", str(tmp_path / "c2"), "--restarts", "3",
            "--mode", "2attr"])
    doc = json.loads((tmp_path / "c2" / "clusters.json").read_text())
    assert len(doc["centroids"]["original"][0]) == 2


def test_three_attr_needs_min_column(run_dir, tmp_path, capsys):
    code = main(["cluster", "--features", str(run_dir / "features.csv"), "--out", str(tmp_path), "--mode", "3attr"])
    assert code == 2
    assert "cluster:" in capsys.readouterr().err


def test_empty_input_directory(tmp_path, capsys):
    (tmp_path / "in").mkdir()
    code = main(["run", "--input", str(tmp_path / "in"), "--out", str(tmp_path / "out")])
    assert code == 3
    assert capsys.readouterr().err.startswith("error: ingest:")


def test_fewer_households_than_k(small_cohort_dir, tmp_path, capsys):
    code = main(["run", "--input", str(small_cohort_dir), "--out", str(tmp_path), "--k", "40"])
    assert code == 2
    assert "cluster:" in capsys.readouterr().err


def test_all_households_cleaned_away(small_cohort_dir, tmp_path, capsys):
    code = main(["run", "--input", str(small_cohort_dir), "--out", str(tmp_path), "--min-valid-days", "500"])
    assert code == 2
    assert "only 0 households" in capsys.readouterr().err


def test_invalid_flag_values(small_cohort_dir, tmp_path):
    assert main(["run", "--input", str(small_cohort_dir), "--out", str(tmp_path), "--min-slot-fraction", "1.5"]) == 2
    with pytest.raises(SystemExit) as exc:
        main(["run", "--mode", "4attr"])
    assert exc.value.code == 2


def test_config_file_precedence(tmp_path):
    cfg_file = tmp_path / "run.cfg"
    cfg_file.write_text("# defaults for this study\nrestarts = 7\nk = 3\nno-standardize = true\n"
                        "input = a.csv, b.csv\nmax-gap-min = 15\n")
    values = read_config_file(cfg_file)
    assert values == {"restarts": 7, "k": 3, "standardize": False, "input": ["a.csv", "b.csv"], "max_gap_min": 15.0}
    cfg = build_config(values, {"restarts": 9, "k": None})
    assert (cfg.restarts, cfg.k, cfg.standardize, cfg.max_gap_min, cfg.min_valid_days) == (9, 3, False, 15.0, 20)
    cfg_file.write_text("colour = red\n")
    with pytest.raises(ConfigError):
        read_config_file(cfg_file)


def test_config_file_used_by_run(small_cohort_dir, tmp_path):
    cfg_file = tmp_path / "run.cfg"
    cfg_file.write_text(f"input = {small_cohort_dir}\nrestarts = 4\nseed = 5\n")
    run_ok(["run", "--config", str(cfg_file), "--out", str(tmp_path / "o"), "--seed", "6"])
    report = json.loads((tmp_path / "o" / "run_report.json").read_text())
    assert report["config"]["restarts"] == 4
    assert report["config"]["seed"] == 6


def test_holidays_and_aligned_export(small_cohort_dir, tmp_path):
    hol = tmp_path / "hol.txt"
    hol.write_text("2011-01-03\n2011-01-04\n")
    run_ok(["run", "--input", str(small_cohort_dir / "readings.csv"), "--holidays", str(hol), "--out",
            str(tmp_path / "o"), "--restarts", "2", "--export-aligned"])
    with open(tmp_path / "o" / "features.csv") as fh:
        days = {int(r["n_days"]) for r in csv.DictReader(fh)}
    assert days == {40 - 2}
    header = (tmp_path / "o" / "aligned.csv").open().readline().strip()
    assert header == "household_id,slot_timestamp,watts"


def test_synth_subcommand_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    run_ok(["synth", "--out", str(a), "--days", "1", "--seed", "3"])
    run_ok(["synth", "--out", str(b), "--days", "1", "--seed", "3"])
    assert (a / "readings.csv").read_bytes() == (b / "readings.csv").read_bytes()
    with open(a / "truth.csv") as fh:
        assert len(list(csv.DictReader(fh))) == 180


def test_synth_invalid_spec(tmp_path):
    spec = tmp_path / "bad.json"
    spec.write_text('[{"name": "a", "n_households": -1, "base_power": 1, "peak_power": 1, '
                    '"peak_time_mean": 1, "peak_time_jitter_sd": 1, "noise_sd": 1}]')
    assert main(["synth", "--spec", str(spec), "--out", str(tmp_path / "o")]) == 2


def test_no_subcommand_prints_help(capsys):
    assert main([]) == 2
    assert "usage" in capsys.readouterr().out
