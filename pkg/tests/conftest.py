import numpy as np
import pytest

from hmaplab.geometry import build_ball_grid, build_icosphere

# criterion lines collected by test_acceptance, echoed at the end of the run
CRITERIA: dict[int, str] = {}


@pytest.fixture(scope="session")
def sphere3():
    return build_icosphere(3)


@pytest.fixture(scope="session")
def sphere4():
    return build_icosphere(4)


@pytest.fixture(scope="session")
def sphere5():
    return build_icosphere(5)


@pytest.fixture(scope="session")
def ball16(sphere4):
    return build_ball_grid(16, sphere4)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(CRITERIA):
        terminalreporter.write_line(CRITERIA[k])
