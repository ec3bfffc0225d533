import os

import pytest
from hypothesis import HealthCheck, settings

from flexclinch.model import make_instance

settings.register_profile(
    "default", deadline=None, max_examples=60,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.register_profile("thorough", deadline=None, max_examples=500)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

# acceptance test name -> (passed, detail); filled while test_acceptance runs
ACCEPTANCE: dict[str, tuple[bool, str]] = {}


@pytest.fixture
def two_identical():
    """Two users with omega 0.1; caps never bind, L = 75."""
    return make_instance([0.1, 0.1], [37.5, 37.5], ids=["u1", "u2"])


@pytest.fixture
def single_user():
    return make_instance([0.1], [50.0], ids=["u1"])


@pytest.fixture
def asymmetric_caps():
    """10 kWh and 50 kWh loads, both with omega 0.1."""
    return make_instance([0.1, 0.1], [10.0, 50.0], ids=["u1", "u2"])


def pytest_runtest_logreport(report):
    if "test_acceptance.py::test_criterion_" not in report.nodeid:
        return
    if report.when == "call" or (report.when == "setup" and report.failed):
        name = report.nodeid.split("::")[-1]
        _, detail = ACCEPTANCE.get(name, (None, ""))
        if report.failed and not detail:
            detail = str(report.longrepr).strip().splitlines()[-1][:200]
        ACCEPTANCE[name] = (report.passed, detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(ACCEPTANCE, key=lambda s: (int(s.split("_")[2]), s)):
        ok, detail = ACCEPTANCE[name]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}  {detail}")
