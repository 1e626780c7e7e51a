import numpy as np
import pytest

from jitterlab.landscape import BuiltinField, Region, build_cell_grid

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def field():
    return BuiltinField()


@pytest.fixture(scope="session")
def region():
    return Region()


@pytest.fixture(scope="session")
def grid(field, region):
    return build_cell_grid(field, region)


@pytest.fixture
def region_points(region):
    """1000 uniform points in the default region, fixed seed."""
    rng = np.random.default_rng(20261018)
    x = rng.uniform(region.x_min, region.x_max, 1000)
    y = rng.uniform(region.y_min, region.y_max, 1000)
    return x, y


def central_difference(fn, x, y, h=1e-5):
    gx = (fn(x + h, y) - fn(x - h, y)) / (2 * h)
    gy = (fn(x, y + h) - fn(x, y - h)) / (2 * h)
    return gx, gy


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
