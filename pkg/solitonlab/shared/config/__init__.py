# Soliton Lab - Config Module

from .loader import ConfigLoader
from .settings import (
    RunConfig,
    NonlinearitySettings,
    GridSettings,
    ContinuumSettings,
    BranchSettings,
    NormalFormSettings,
    ResolventSettings,
    FgrSettings,
    EvolutionSettings,
    TrackerSettings,
    ToleranceSettings,
    OutputSettings,
)

__all__ = [
    'ConfigLoader',
    'RunConfig',
    'NonlinearitySettings',
    'GridSettings',
    'ContinuumSettings',
    'BranchSettings',
    'NormalFormSettings',
    'ResolventSettings',
    'FgrSettings',
    'EvolutionSettings',
    'TrackerSettings',
    'ToleranceSettings',
    'OutputSettings',
]
