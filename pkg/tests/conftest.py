"""Shared fixtures and the acceptance-line reporter.

The heavy Monte Carlo artifacts (the shipped scenario and its studies,
the null-calibration study, the synthetic stratified cohort) are built
once per session and shared between the module tests and the acceptance
gate in test_acceptance.py. The terminal summary prints one PASS/FAIL
line per acceptance criterion.
"""

import time
from contextlib import contextmanager

import pytest

from survquack import (
    Measure,
    ScenarioConfig,
    SubgroupSpec,
    build_section3_scenario,
    generate_prognostic_sample,
    load_oak_analog_spec,
    realize_scenario,
    run_study,
    stratified_audit,
)

_ACCEPTANCE_LINES = []


@contextmanager
def _criterion_cm(num, name):
    try:
        yield
    except BaseException:
        _ACCEPTANCE_LINES.append((num, name, False))
        raise
    _ACCEPTANCE_LINES.append((num, name, True))


@pytest.fixture
def criterion():
    """Context manager recording a criterion's verdict for the summary."""
    return _criterion_cm


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for num, name, passed in sorted(_ACCEPTANCE_LINES):
        terminalreporter.write_line(
            f"[criterion {num:02d}] {name}: {'PASS' if passed else 'FAIL'}"
        )


@pytest.fixture(scope="session")
def section3():
    return realize_scenario(build_section3_scenario())


@pytest.fixture(scope="session")
def study_1k(section3):
    """(report, elapsed seconds) for the shipped scenario at its default reps.

    Run sequentially so the elapsed time is meaningful for the runtime
    budget assertion.
    """
    t0 = time.perf_counter()
    report = run_study(section3)
    return report, time.perf_counter() - t0


@pytest.fixture(scope="session")
def study_10k(section3):
    return run_study(section3, replications=10_000, workers=4)


@pytest.fixture(scope="session")
def null_scenario():
    cfg = ScenarioConfig(
        subgroups=(SubgroupSpec("all", 1.0, 1.0, rx_median=8.0, c_median=8.0),),
        replications=10_000,
    )
    return realize_scenario(cfg)


@pytest.fixture(scope="session")
def null_study_10k(null_scenario):
    return run_study(null_scenario, workers=4)


@pytest.fixture(scope="session")
def oak_spec():
    return load_oak_analog_spec()


@pytest.fixture(scope="session")
def oak_sample(oak_spec):
    return generate_prognostic_sample(oak_spec)


@pytest.fixture(scope="session")
def oak_audit(oak_sample, oak_spec):
    factors = [f.name for f in oak_spec.factors]
    return stratified_audit(oak_sample, factors, measure=Measure.HR)
