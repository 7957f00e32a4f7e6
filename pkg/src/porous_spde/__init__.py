"""Numerical study of the stochastic porous media equation ``dX - Delta beta(X) dt = X dW``.

Finite differences on the unit interval (or square) with Dirichlet
conditions, the Yosida-regularized drift solved by damped Newton, and
multiplicative Q-Wiener noise on the discrete Laplacian eigenbasis.
"""
from importlib.metadata import PackageNotFoundError, version

from .errors import (
    ConfigurationError,
    DomainError,
    ExtrapolationError,
    InvalidExperimentError,
    NumericalError,
    SolverError,
    SPDEError,
    StepError,
)
from .geometry import Field, Grid, SpectralBasis, build_basis
from .nonlinearity import Nonlinearity, power_law, power_plus_linear
from .noise import NoiseModel, default_mu, generate_path
from .resolvent import ResolventConfig, resolvent, resolvent_solve
from .stepper import SimConfig, Trajectory, simulate_ensemble, simulate_path

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.1.0"

__all__ = [
    "ConfigurationError",
    "DomainError",
    "ExtrapolationError",
    "Field",
    "Grid",
    "InvalidExperimentError",
    "NoiseModel",
    "Nonlinearity",
    "NumericalError",
    "ResolventConfig",
    "SPDEError",
    "SimConfig",
    "SolverError",
    "SpectralBasis",
    "StepError",
    "Trajectory",
    "build_basis",
    "default_mu",
    "generate_path",
    "power_law",
    "power_plus_linear",
    "resolvent",
    "resolvent_solve",
    "simulate_ensemble",
    "simulate_path",
]
