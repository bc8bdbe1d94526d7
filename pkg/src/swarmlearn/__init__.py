"""Cucker-Smale swarms at particle and density scale, and learning of
screened-Poisson interaction kernels from density time series."""

from .domain import Domain, Grid, ScalarField, StateField, make_grid
from .estimator import EmpiricalDensityTransformer, KernelParameterEstimator
from .kernels import (
    CuckerSmale,
    FreeSpaceExp,
    RadialBessel,
    ScreenedPoisson1D,
    ScreenedPoisson2DSeries,
    kernel_from_dict,
    kernel_to_dict,
)
from .learning import LearnConfig, LearnState, kl_divergence, newton_learn, objective
from .macro import (
    DensitySeries,
    MacroConfig,
    initial_conditions_1d,
    initial_conditions_2d,
    simulate_macro,
    simulate_macro_general_kernel,
)
from .micro import ParticleEnsemble, simulate_micro

__version__ = "0.1.0"

__all__ = [
    "CuckerSmale",
    "DensitySeries",
    "Domain",
    "EmpiricalDensityTransformer",
    "FreeSpaceExp",
    "Grid",
    "KernelParameterEstimator",
    "LearnConfig",
    "LearnState",
    "MacroConfig",
    "ParticleEnsemble",
    "RadialBessel",
    "ScalarField",
    "ScreenedPoisson1D",
    "ScreenedPoisson2DSeries",
    "StateField",
    "kernel_from_dict",
    "kernel_to_dict",
    "kl_divergence",
    "initial_conditions_1d",
    "initial_conditions_2d",
    "make_grid",
    "newton_learn",
    "objective",
    "simulate_macro",
    "simulate_macro_general_kernel",
    "simulate_micro",
]
