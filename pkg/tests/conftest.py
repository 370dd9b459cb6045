# Soliton Lab - shared test fixtures
# Coarse grids keep the suite fast; slow end-to-end checks are marked separately

from pathlib import Path

import numpy as np
import pytest

from solitonlab.physics.ground_state import GroundState, solve_ground_state
from solitonlab.physics.linearization import linearize
from solitonlab.physics.model import NonlinearitySpec, RadialGrid
from solitonlab.shared.config import ConfigLoader

# omega for the cubic-quintic fixtures, below the plateau limit 3 a^2 / (16 b) = 0.9375
CQ_OMEGA = 0.8


@pytest.fixture(scope="session")
def cubic():
    return NonlinearitySpec.pure_power(3.0)


@pytest.fixture(scope="session")
def cubic_quintic():
    return NonlinearitySpec.cubic_quintic(1.0, 0.2)


@pytest.fixture(scope="session")
def coarse_grid():
    return RadialGrid(3, 20.0, 800)


@pytest.fixture(scope="session")
def cq_grid():
    return RadialGrid(3, 30.0, 1200)


@pytest.fixture(scope="session")
def cubic_state(cubic, coarse_grid):
    return solve_ground_state(cubic, 1.0, coarse_grid)


@pytest.fixture(scope="session")
def cq_state(cubic_quintic, cq_grid):
    return solve_ground_state(cubic_quintic, CQ_OMEGA, cq_grid)


@pytest.fixture(scope="session")
def cq_system(cq_state):
    """Linearized cubic-quintic system; the reference state carries an internal mode."""
    system = linearize(cq_state, require_mode=False)
    assert system.has_mode, f"no internal mode at omega={CQ_OMEGA} on the cubic-quintic grid"
    return system


@pytest.fixture(scope="session")
def free_system(coarse_grid):
    """beta = 0 with omega = 1: H = sigma3 (-Delta + 1)."""
    zeros = np.zeros(coarse_grid.points)
    state = GroundState(NonlinearitySpec.linear(), coarse_grid, 1.0, zeros, zeros, zeros, 0.0)
    return linearize(state, require_mode=False)


@pytest.fixture()
def reference_ini(tmp_path) -> Path:
    """A copy of the bundled reference config in a scratch directory."""
    target = tmp_path / "reference.ini"
    target.write_text(ConfigLoader().default_config_path("reference").read_text())
    return target


def gaussian(grid: RadialGrid, width: float = 1.0) -> np.ndarray:
    return np.exp(-0.5 * (grid.nodes / width) ** 2)
