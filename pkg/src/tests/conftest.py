import pytest

from eulerncl.config import Config, configured
from eulerncl.euler2d import covering_system, equation_system
from eulerncl.exprlang import parse
from eulerncl.onshell import Variant


@pytest.fixture
def config():
    return Config(order_cap=10, gcd_threshold=256)


@pytest.fixture
def active(config):
    with configured(config):
        yield config


@pytest.fixture
def d_system():
    return equation_system(Variant.D)


@pytest.fixture
def laplace_system():
    return equation_system(Variant.LAPLACE)


@pytest.fixture
def d_covering():
    return covering_system(Variant.D)


@pytest.fixture
def laplace_covering():
    return covering_system(Variant.LAPLACE)


@pytest.fixture
def P():
    """Shorthand for parsing expressions in assertions."""
    return parse
