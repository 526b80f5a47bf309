import pytest

from choquard.constants import ProblemParams
from choquard.radial import make_grid
from choquard.riesz import build_kernel


@pytest.fixture(scope="session")
def grid5():
    return make_grid(5)


@pytest.fixture(scope="session")
def grid4():
    return make_grid(4)


@pytest.fixture(scope="session")
def kernel5(grid5):
    return build_kernel(grid5, 2.0)


@pytest.fixture(scope="session")
def kernel4(grid4):
    return build_kernel(grid4, 2.0)


@pytest.fixture(scope="session")
def params5():
    return ProblemParams(5, 2.0, 3.0)


@pytest.fixture(scope="session")
def params4():
    return ProblemParams(4, 2.0, 3.5)


@pytest.fixture(scope="session")
def small_grid5():
    return make_grid(5, 1e-4, 1e2, 256)
