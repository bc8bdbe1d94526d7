import numpy as np
import pytest

from swarmlearn.domain import Domain, make_grid

L = 2 * np.pi


@pytest.fixture
def grid1d():
    return make_grid(Domain(1, np.pi), 101)


@pytest.fixture
def grid2d():
    return make_grid(Domain(2, np.pi), 32)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[0].lstrip("#"))):
            terminalreporter.write_line(line)
