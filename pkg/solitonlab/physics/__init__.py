# Soliton Lab - Physics Module

from .model import NonlinearitySpec, RadialGrid, eval_beta, taylor_nonlinearity
from .ground_state import GroundState, GroundStateBranch, check_H5, continue_branch, solve_ground_state
from .linearization import LinearizedSystem, discrete_spectrum, linearize
from .resolvent import solve_gap, solve_outgoing
from .normal_form import NormalFormPackage, build_sources
from .fgr import FgrParameters, FgrReport, compute_gamma, gamma_scan
from .dynamics import EvolutionConfig, Trajectory, evolve, make_initial_data
from .tracker import ModulationState, SystemFamily, TrajectoryDiagnostics, decompose, fit_damping, track

__all__ = [
    'NonlinearitySpec', 'RadialGrid', 'eval_beta', 'taylor_nonlinearity',
    'GroundState', 'GroundStateBranch', 'check_H5', 'continue_branch', 'solve_ground_state',
    'LinearizedSystem', 'discrete_spectrum', 'linearize',
    'solve_gap', 'solve_outgoing',
    'NormalFormPackage', 'build_sources',
    'FgrParameters', 'FgrReport', 'compute_gamma', 'gamma_scan',
    'EvolutionConfig', 'Trajectory', 'evolve', 'make_initial_data',
    'ModulationState', 'SystemFamily', 'TrajectoryDiagnostics', 'decompose', 'fit_damping', 'track',
]
