import pytest

from ratchet.models.graphical import GraphicalElements
from ratchet.schemas.params import Params


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run slow Monte Carlo checks")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def small_params():
    """N = 10 with s_N = 1 and m_N = 0.5"""
    return Params(N=10, alpha=1.0, mu=0.5, f_of_N=1.0)


@pytest.fixture
def two_line_elements():
    """
    Line 0 is marked at 0.5, line 1 copies line 0 at 1.0 and is marked at 2.0.
    Forward from (0, 0): one click at 1.0, final types (1, 2).
    """
    return GraphicalElements.build(
        2,
        (0.0, 3.0),
        neutral=[(0, 1, 1.0)],
        marks=[(0, 0.5), (1, 2.0)],
    )


@pytest.fixture
def selective_elements():
    """A single selective arrow from line 0 to line 1 at t = 1."""
    return GraphicalElements.build(2, (0.0, 2.0), selective=[(0, 1, 1.0)])
