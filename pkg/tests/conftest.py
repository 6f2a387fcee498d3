from pathlib import Path

import pytest

from flexclust.ingest import HEADER


@pytest.fixture
def write_csv(tmp_path):
    """Write reading lines (header added) to a file under tmp_path."""

    def _write(name: str, lines, header: str = HEADER, newline: str = "\n") -> Path:
        path = tmp_path / name
        body = newline.join([header, *lines]) + newline if header is not None else newline.join(lines)
        path.write_bytes(body.encode("utf-8"))
        return path

    return _write


def small_spec(n=6, trough=False):
    from flexclust.synth import GroupSpec

    extra = lambda j: dict(trough_depth=150.0, trough_time_mean=60.0, trough_time_jitter_sd=j) if trough else {}
    return [
        GroupSpec("low_regular", n, 200.0, 500.0, 120.0, 10.0, 20.0, **extra(5.0)),
        GroupSpec("low_irregular", n, 200.0, 500.0, 120.0, 60.0, 20.0, **extra(40.0)),
        GroupSpec("high_regular", n, 700.0, 1000.0, 120.0, 10.0, 20.0, **extra(40.0)),
        GroupSpec("high_irregular", n, 700.0, 1000.0, 120.0, 60.0, 20.0, **extra(5.0)),
    ]


@pytest.fixture(scope="session")
def small_cohort_dir(tmp_path_factory):
    """Synthetic readings + truth for 24 households over 8 weeks."""
    from flexclust import synth

    d = tmp_path_factory.mktemp("cohort")
    cohort = synth.generate(small_spec(trough=True), days=56, seed=11)
    synth.write_readings_csv(cohort, d / "readings.csv")
    synth.write_truth_csv(cohort, d / "truth.csv")
    return d


ACCEPTANCE_RESULTS: list[str] = []


@pytest.fixture
def criterion(request):
    """Record a one-line pass/fail verdict for an acceptance criterion.

    The test calls the returned function with a detail string once its checks
    have run; the verdict is taken from the test outcome itself.
    """
    details: list[str] = []
    yield details.append
    rep = getattr(request.node, "rep_call", None)
    ok = rep is not None and rep.passed
    line = f"{request.node.name}: {'PASS' if ok else 'FAIL'}" + (f" ({details[-1]})" if details else "")
    ACCEPTANCE_RESULTS.append(line)
    print("\n" + line)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if rep.when == "call":
        item.rep_call = rep


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_RESULTS:
            terminalreporter.write_line(line)
