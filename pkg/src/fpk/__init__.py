"""Pointwise Fokker-Planck solutions from stationary densities and Feynman-Kac averages."""

from .errors import (
    ConfigError,
    DegenerateEstimateError,
    EscapeError,
    FPKError,
    InvalidArgumentError,
    OutOfDomainError,
    SimulationError,
)
from .fk_solver import DensityEstimate, EscapePolicy, solve_grid, solve_h_point, solve_point
from .grids import Box, RegularGrid
from .stationary import GaussianAnalytic, GradientAnalytic, GridTabulated, hsde_drift
from .systems import SystemSpec, get_system
from .trajectories import EmConfig, simulate_batch

__all__ = [
    "Box",
    "ConfigError",
    "DegenerateEstimateError",
    "DensityEstimate",
    "EmConfig",
    "EscapeError",
    "EscapePolicy",
    "FPKError",
    "GaussianAnalytic",
    "GradientAnalytic",
    "GridTabulated",
    "InvalidArgumentError",
    "OutOfDomainError",
    "RegularGrid",
    "SimulationError",
    "SystemSpec",
    "get_system",
    "hsde_drift",
    "simulate_batch",
    "solve_grid",
    "solve_h_point",
    "solve_point",
]
