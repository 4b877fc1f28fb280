"""Integration test configuration."""

import pytest
from energy.benchmarks import SCALAR_EXAMPLE_ETA, build_scalar_example
from energy.dae_reduction import reduce_system


@pytest.fixture
def scalar_system():
    """The two-state example with one constraint."""
    return build_scalar_example()


@pytest.fixture
def scalar_reduced(scalar_system):
    return reduce_system(scalar_system)


@pytest.fixture
def scalar_eta():
    return SCALAR_EXAMPLE_ETA
