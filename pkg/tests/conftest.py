"""Shared fixtures and the acceptance-criterion summary hook.

Tests marked ``@pytest.mark.criterion(n, "...")`` are collected into a
one-line-per-criterion verdict table printed after the run, so the
acceptance gate is readable at a glance.
"""

import math

import pytest

from qvol.model import PopulationSpec, ZipfParams
from qvol.sampling import build_population

# Simulation population used across the suite: the synthetic setup all the
# published simulation figures are built on.
SIM_C = 1e5
SIM_BETA = 0.7745
SIM_N = 10**6

# Headline total volume of that population (sum of c/i^beta over all ranks),
# good to +-1.
TOTAL_VOLUME_TRUTH = 9_609_224.0

# Published reference fits of a year of real query data: one from a
# continuous-volume tool, one from a binned-volume tool, each with the
# reported parameter standard errors.
CONTINUOUS_REFERENCE_FIT = {
    "c": math.exp(17.5189),
    "beta": 0.7745,
    "delta_c": 199_263.0,
    "delta_beta": 0.0025,
}
BINNED_REFERENCE_FIT = {
    "c": math.exp(14.9551),
    "beta": 0.5545,
    "delta_c": 549_134.0,
    "delta_beta": 0.0352,
}

REPORT_THRESHOLDS = (12.0, 120.0, 1_200.0, 12_000.0, 120_000.0, 600_000.0)


@pytest.fixture(scope="session")
def sim_spec() -> PopulationSpec:
    return PopulationSpec(ZipfParams(c=SIM_C, beta=SIM_BETA), n_queries=SIM_N)


@pytest.fixture(scope="session")
def sim_population(sim_spec):
    return build_population(sim_spec)


# --- acceptance criterion reporting ----------------------------------------

_criterion_results: dict[int, tuple[str, str]] = {}
_criteria_collected: dict[int, str] = {}


def pytest_configure(config):
    config.addinivalue_line(
        "markers",
        "criterion(num, description): tag a test as one acceptance criterion",
    )


def pytest_collection_modifyitems(items):
    for item in items:
        marker = item.get_closest_marker("criterion")
        if marker is not None:
            num, desc = marker.args
            _criteria_collected[int(num)] = str(desc)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    num = int(marker.args[0])
    desc = str(marker.args[1])
    if report.when == "call":
        _criterion_results[num] = ("PASS" if report.passed else "FAIL", desc)
    elif report.when == "setup" and not report.passed:
        _criterion_results[num] = ("FAIL", desc)


def pytest_terminal_summary(terminalreporter):
    if not _criteria_collected:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for num in sorted(_criteria_collected):
        verdict, desc = _criterion_results.get(
            num, ("FAIL", _criteria_collected[num] + " (did not run)")
        )
        terminalreporter.write_line(f"CRITERION {num:2d}: {verdict} - {desc}")
