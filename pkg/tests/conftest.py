import pytest

from conic_yamabe.bubble_core import make_context, sphere_volume
from conic_yamabe.cone_geometry import ZonalConformalFamily
from conic_yamabe.expansion_verifier import verify_expansion


def round_ctx(n, k=1.0):
    return make_context(n, sphere_volume(n - 1) / k)


@pytest.fixture(scope="session")
def ctx5():
    return round_ctx(5)


@pytest.fixture(scope="session")
def ctx4():
    return round_ctx(4)


@pytest.fixture(scope="session")
def flagship_family():
    return ZonalConformalFamily(5, ((2, 0.1),))


@pytest.fixture(scope="session")
def flagship_report(ctx5, flagship_family):
    return verify_expansion(ctx5, flagship_family, (0.04, 0.02, 0.01, 0.005), 0.25)


@pytest.fixture(scope="session")
def n4_family():
    return ZonalConformalFamily(4, ((2, 0.1),))


@pytest.fixture(scope="session")
def n4_report(ctx4, n4_family):
    return verify_expansion(ctx4, n4_family, delta=0.25)


# filled by test_acceptance.py, one line per criterion
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
