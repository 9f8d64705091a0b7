import numpy as np
import pytest

from manevkit.ground_state import SolverOptions, solve_ground_state
from manevkit.phase_space import ModelParams, PowerLaw, RadialDensity, RadialGrid

# small grids keep the suite fast; accuracy claims at full size live in ``manev-kit verify``
SMALL = SolverOptions(size=400, energy_nodes=200)


@pytest.fixture(scope="session")
def options():
    return SMALL


@pytest.fixture(scope="session")
def j4():
    return PowerLaw(4.0)


@pytest.fixture(scope="session")
def manev_state(j4):
    return solve_ground_state(ModelParams(0.0, 1.0), j4, None, SMALL)


@pytest.fixture(scope="session")
def poisson_state(j4):
    return solve_ground_state(ModelParams(1.0, 0.0), j4, None, SMALL)


@pytest.fixture(scope="session")
def mixed_state(j4):
    return solve_ground_state(ModelParams(1.0, 1.0), j4, None, SMALL)


@pytest.fixture(scope="session")
def unit_ball():
    grid = RadialGrid(2.0, 2000, 1.0)
    return RadialDensity(grid, (grid.nodes <= 1.0).astype(float))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
