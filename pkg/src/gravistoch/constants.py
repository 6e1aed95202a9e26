"""Physical constants and the beta/nu/z parameter family of the diffusion model.

Natural units are ``hbar = 1``, ``c = 1`` and ``16 pi G = 1``. In these units
Nelson's diffusion parameter is 1 and the ground-state process of a mode of
frequency ``omega`` is an Ornstein-Uhlenbeck process with stationary
variance ``1/omega`` and relaxation rate ``nu * omega``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .exceptions import DomainError

__all__ = [
    "PhysicalConstants",
    "natural_units",
    "nelson_diffusion",
    "nu_from_beta",
    "z_from_beta",
]

NATURAL_G = 1.0 / (16.0 * math.pi)


def _check_beta(beta: float) -> None:
    if not beta < 2.0:
        raise DomainError(f"beta must satisfy beta < 2 (got beta={beta!r})")


def z_from_beta(beta: float) -> float:
    """Complex-weight parameter ``z = (1 - beta/2)**-0.5``."""
    _check_beta(beta)
    return 1.0 / math.sqrt(1.0 - beta / 2.0)


def nelson_diffusion(c: "PhysicalConstants") -> float:
    """Nelson's diffusion parameter ``16 pi G hbar``."""
    return 16.0 * math.pi * c.G * c.hbar


def nu_from_beta(beta: float, c: "PhysicalConstants") -> float:
    """Diffusion parameter belonging to ``beta``.

    The per-mode oscillator carries mass ``f = 1/(32 pi G)``, so the
    unit-mass relation ``nu = hbar / (2 sqrt(1 - beta/2))`` becomes
    ``nu = 16 pi G hbar / sqrt(1 - beta/2)``; ``beta = 0`` gives Nelson's value.
    """
    return nelson_diffusion(c) * z_from_beta(beta)


@dataclass(frozen=True)
class PhysicalConstants:
    """Immutable set of constants defining one stochastic model.

    ``nu=None`` resolves to ``nu_from_beta(beta)``. Passing both ``nu`` and a
    ``beta`` that disagree is allowed; ``beta`` then only enters the
    mean-acceleration law and ``nu`` drives the dynamics.
    """

    hbar: float = 1.0
    G: float = NATURAL_G
    nu: float | None = None
    beta: float = 0.0

    def __post_init__(self) -> None:
        if not (math.isfinite(self.hbar) and self.hbar > 0):
            raise DomainError(f"hbar must be > 0 (got {self.hbar!r})")
        if not (math.isfinite(self.G) and self.G > 0):
            raise DomainError(f"G must be > 0 (got {self.G!r})")
        _check_beta(self.beta)
        if self.nu is None:
            nu = nu_from_beta(self.beta, self)
        else:
            nu = float(self.nu)
            if not (math.isfinite(nu) and nu >= 0):
                raise DomainError(f"nu must be >= 0 (got {self.nu!r})")
        object.__setattr__(self, "nu", nu)

    @property
    def f(self) -> float:
        """Oscillator mass ``1/(32 pi G)``."""
        return 1.0 / (32.0 * math.pi * self.G)

    @property
    def nu_N(self) -> float:
        return nelson_diffusion(self)

    @property
    def kappa(self) -> float:
        """Fluctuation scale ``16 pi G hbar``; mode variance is ``kappa/omega``."""
        return 16.0 * math.pi * self.G * self.hbar

    @property
    def time_scale(self) -> float:
        """Ratio ``nu / (16 pi G hbar)`` by which stochastic times are rescaled."""
        return self.nu / self.kappa

    def gamma(self, omega):
        """Per-mode decay rate ``nu * omega / (16 pi G hbar)``."""
        return self.time_scale * omega

    def with_nu(self, nu: float) -> "PhysicalConstants":
        return PhysicalConstants(hbar=self.hbar, G=self.G, nu=nu, beta=self.beta)

    def as_dict(self) -> dict:
        return {"hbar": self.hbar, "G": self.G, "nu": self.nu, "beta": self.beta}


def natural_units(nu: float | None = None, beta: float = 0.0) -> PhysicalConstants:
    return PhysicalConstants(hbar=1.0, G=NATURAL_G, nu=nu, beta=beta)
