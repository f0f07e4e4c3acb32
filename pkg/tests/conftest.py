import numpy as np
import pytest

from nlslab.branch import Branch, solve_branch_point
from nlslab.grid import RadialGrid
from nlslab.hamiltonian import build_spectral, tune_depth_one_bound_state
from nlslab.nonlinearity import NonlinearitySpec


@pytest.fixture(scope="session")
def grid():
    return RadialGrid(2048, 120.0)


@pytest.fixture(scope="session")
def spectral(grid):
    return build_spectral(tune_depth_one_bound_state(grid), grid)


@pytest.fixture(scope="session")
def cubic():
    return NonlinearitySpec(1.0, 1.0, -1.0, 0.0)


@pytest.fixture(scope="session")
def bp_small(spectral, cubic):
    """Branch point at a = 0.01 on the default well."""
    return solve_branch_point(0.01, spectral, cubic)


@pytest.fixture(scope="session")
def branch_ctx(spectral, cubic):
    return Branch(spectral, cubic)


@pytest.fixture(scope="session")
def coarse_grid():
    return RadialGrid(256, 40.0)


@pytest.fixture(scope="session")
def coarse_spectral(coarse_grid):
    return build_spectral(tune_depth_one_bound_state(coarse_grid), coarse_grid)
