"""
Pytest configuration and shared fixtures for the space-time Ising engine tests.
"""

import copy
import numpy as np
import pytest
import sys
from pathlib import Path

# Add project root to path for imports
PROJECT_ROOT = Path(__file__).parent.parent
sys.path.insert(0, str(PROJECT_ROOT))

from domain import Lattice, Params, Point, Region, TimeDomain
from logger import reset_logger
from tests.fixtures.sample_data import (
    SAMPLE_CONFIG,
    PARAM_POINTS,
    SINGLE_SITE_CASES,
    RHO_C_ACCEPT,
)


@pytest.fixture
def sample_config():
    """Provide sample configuration for tests."""
    return copy.deepcopy(SAMPLE_CONFIG)


@pytest.fixture
def rng():
    """Deterministic generator."""
    return np.random.default_rng(20240611)


@pytest.fixture
def params():
    """Balanced parameter point with a field."""
    return Params(*PARAM_POINTS['balanced'])


@pytest.fixture
def zero_field_params():
    return Params(*PARAM_POINTS['zero_field'])


@pytest.fixture
def single_site():
    """One vertex on a circle of circumference 1."""
    return Region.box(Lattice.chain(1), TimeDomain(1.0))


@pytest.fixture
def two_site():
    """Two vertices joined by one edge, circle of circumference 1."""
    return Region.box(Lattice.chain(2), TimeDomain(1.0))


@pytest.fixture
def ring3():
    """Periodic ring of three vertices, circle of circumference 1."""
    return Region.box(Lattice(1, 1), TimeDomain(1.0))


@pytest.fixture
def single_site_cases():
    return list(SINGLE_SITE_CASES)


@pytest.fixture
def rho_c_accept():
    return RHO_C_ACCEPT


@pytest.fixture(autouse=True)
def fresh_logger():
    """Each test starts with an unconfigured global logger."""
    reset_logger()
    yield
    reset_logger()

