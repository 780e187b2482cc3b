"""Shared fixtures for expanderlab tests."""

import math

import numpy as np
import pytest

from expanderlab import calibration
from expanderlab.models import MissingConstant, RadialGrid
from expanderlab.profile_solver import cached_profile, critical_params


@pytest.fixture(scope="session")
def constants():
    """Lookup of calibrated regression constants from constants.json.

    A test that needs a constant the file lacks is marked xfail until
    `expanderlab calibrate` has been run and its output committed.
    """

    def lookup(name):
        try:
            return calibration.constant(name)
        except MissingConstant as e:
            pytest.xfail(str(e))

    return lookup


@pytest.fixture(scope="session")
def critical_d3():
    return critical_params(3)


@pytest.fixture(scope="session")
def profile_d3():
    """North profile for d = 3, alpha = 0.5 (below the equator)."""
    return cached_profile(3, 0.5)


@pytest.fixture(scope="session")
def pde_grid():
    return RadialGrid.graded(3.0)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture
def half_pi():
    return math.pi / 2
