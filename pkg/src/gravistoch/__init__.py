"""Stochastic quantization of the linearized gravitational field.

Simulates the per-mode diffusion of the transverse-traceless field and checks
its statistics against closed-form covariances, spectra and identities.
"""

from ._version import __version__
from .constants import (
    PhysicalConstants,
    natural_units,
    nelson_diffusion,
    nu_from_beta,
    z_from_beta,
)
from .exceptions import (
    ConfigError,
    DomainError,
    GravistochError,
    InsufficientDataError,
    NumericalGuardError,
)
from .lattice import ModeGrid, ModeState, enumerate_modes, single_mode_grid
from .polarization import PolarizationTensor, basis_for
from .sde import Ensemble, Trajectory, simulate_ensemble

__all__ = [
    "__version__",
    "PhysicalConstants",
    "natural_units",
    "nelson_diffusion",
    "nu_from_beta",
    "z_from_beta",
    "ConfigError",
    "DomainError",
    "GravistochError",
    "InsufficientDataError",
    "NumericalGuardError",
    "ModeGrid",
    "ModeState",
    "enumerate_modes",
    "single_mode_grid",
    "PolarizationTensor",
    "basis_for",
    "Ensemble",
    "Trajectory",
    "simulate_ensemble",
]
