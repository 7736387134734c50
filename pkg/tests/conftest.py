import numpy as np
import pytest

from pladelay.channel import square_grid_deployment
from pladelay.config import UPPER_RIGHT


@pytest.fixture(scope="session")
def grid():
    return square_grid_deployment()


@pytest.fixture(scope="session")
def d12(grid):
    return grid.stats("D12")


@pytest.fixture(scope="session")
def sybil_pool(grid):
    return [d for d in grid.ids if d not in UPPER_RIGHT and d != "D4"]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_CRITERIA = {}


@pytest.fixture
def report_criterion():
    """Record one acceptance line; printed together at the end of the run."""

    def report(number, title, passed, detail=""):
        _CRITERIA[number] = f"criterion {number:>2} {'PASS' if passed else 'FAIL'}  {title}  {detail}".rstrip()
        print(_CRITERIA[number])

    return report


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for key in sorted(_CRITERIA):
            terminalreporter.write_line(_CRITERIA[key])
