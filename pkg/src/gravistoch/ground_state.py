"""Closed-form ground-state quantities of the free TT field.

Per representative mode the ground state is a product of two independent
real Ornstein-Uhlenbeck components (``Re Q`` and ``Im Q``) with

* stationary variance ``kappa / omega`` where ``kappa = 16 pi G hbar``,
* relaxation rate ``gamma = nu omega / kappa``,
* drift ``b(Q) = -gamma Q``.

The stored per-mode exponent of the ground-state wavefunction is twice the
printed one because the product over ``(lam, k)`` visits every amplitude
once as ``Q(k)`` and once as ``Q(-k) = conj(Q(k))``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .constants import PhysicalConstants
from .exceptions import DomainError
from .lattice import ModeGrid
from .polarization import polarization_sum_closed_form

__all__ = [
    "ModeLaw",
    "Continuum",
    "mode_law",
    "drift",
    "stationary_log_density",
    "stochastic_mode_covariance",
    "quantum_mode_propagator",
    "schwinger_check",
    "field_covariance",
    "mode_energy",
    "lattice_vacuum_energy",
]


def _check_omega(omega):
    w = np.asarray(omega, dtype=float)
    if np.any(~(w > 0)):
        raise DomainError("omega must be > 0")
    return omega


@dataclass(frozen=True)
class ModeLaw:
    omega: float
    variance: float
    gamma: float


def mode_law(omega: float, c: PhysicalConstants) -> ModeLaw:
    _check_omega(omega)
    return ModeLaw(omega=omega, variance=c.kappa / omega, gamma=c.gamma(omega))


def stationary_log_density(Q, omega: float, c: PhysicalConstants):
    """``ln rho`` of one stored mode, up to normalization.

    ``rho = |psi|**2`` with ``psi`` the ground-state wavefunction restricted to
    this mode (both members of the pair included).
    """
    _check_omega(omega)
    Q = np.asarray(Q)
    # psi = exp(-2 |Q|^2 omega / (128 pi G hbar)), rho = psi^2
    return -4.0 * np.abs(Q) ** 2 * omega / (128.0 * math.pi * c.G * c.hbar)


def drift(Q, omega: float, c: PhysicalConstants):
    """Forward drift ``-gamma Q`` of the ground-state process."""
    _check_omega(omega)
    return -c.gamma(omega) * np.asarray(Q)


def stochastic_mode_covariance(omega, tau, c: PhysicalConstants):
    """``E[Re Q(t) Re Q(t + tau)] = (kappa/omega) exp(-gamma |tau|)``."""
    _check_omega(omega)
    tau = np.asarray(tau, dtype=float)
    return c.kappa / omega * np.exp(-c.gamma(omega) * np.abs(tau))


def quantum_mode_propagator(omega, tau, c: PhysicalConstants):
    """Per-component vacuum two-point function ``(kappa/omega) exp(-i omega tau)``.

    This is the positive-frequency residue of the ``k0`` integral of the
    time-ordered propagator for ``t_x > t_y``. ``tau`` may be complex, which
    evaluates the analytic continuation of the closed form.
    """
    _check_omega(omega)
    return c.kappa / omega * np.exp(-1j * omega * np.asarray(tau))


def schwinger_check(omega, tau, c: PhysicalConstants):
    """Distance between the continued quantum kernel and the stochastic one.

    Times are continued as ``t -> -i (nu / kappa) t``; the result must vanish
    for every ``nu > 0``.
    """
    if c.nu == 0:
        raise DomainError("the continuation needs nu > 0")
    tau = np.asarray(tau, dtype=float)
    if np.any(tau < 0):
        raise DomainError("tau must be >= 0")
    continued = quantum_mode_propagator(omega, -1j * c.time_scale * tau, c)
    return np.abs(continued - stochastic_mode_covariance(omega, tau, c))


@dataclass(frozen=True)
class Continuum:
    """Infinite-volume mode source with an exponential ultraviolet regulator.

    Wavevectors are weighted by ``exp(-|k| cutoff_length)``, which equals the
    kernel itself at an extra imaginary time shift and keeps the equal-time
    covariance finite.
    """

    cutoff_length: float = 0.05
    polar_nodes: int = 256
    azimuthal_nodes: int = 16


def _lattice_covariance(dx, tau, grid: ModeGrid, c: PhysicalConstants) -> np.ndarray:
    k = grid.k
    kern = stochastic_mode_covariance(grid.omega, tau, c)
    delta = polarization_sum_closed_form(k)  # (R, 3,3,3,3)
    # k and -k contribute complex-conjugate phases; delta(-k) = delta(k)
    weight = 2.0 * np.cos(k @ dx) * kern / grid.volume
    return np.einsum("r,rijkl->ijkl", weight, delta)


def _frame(d: np.ndarray):
    D = float(np.linalg.norm(d))
    axis = d / D if D > 0 else np.array([0.0, 0.0, 1.0])
    seed = np.eye(3)[np.argmin(np.abs(axis))]
    e1 = seed - (seed @ axis) * axis
    e1 /= np.linalg.norm(e1)
    return D, axis, e1, np.cross(axis, e1)


def _continuum_covariance(dx, tau, src: Continuum, c: PhysicalConstants) -> np.ndarray:
    # radial part in closed form: int_0^inf k e^{-kb} cos(kp) dk = Re (b - ip)^-2,
    # with p = khat.dx and b the regulator plus the rescaled lag
    b = src.cutoff_length + c.time_scale * abs(float(tau))
    if b <= 0:
        raise DomainError("continuum covariance needs cutoff_length > 0 or tau > 0")
    D, axis, e1, e2 = _frame(dx)
    x, wx = np.polynomial.legendre.leggauss(src.polar_nodes)
    if D > b:
        # mu = (b/D) tan(theta) flattens the peak of Re (b - iDmu)^-2 at mu = 0
        tmax = math.atan(D / b)
        theta = tmax * x
        mu = (b / D) * np.tan(theta)
        radial_dmu = np.cos(2 * theta) / (b * D) * tmax * wx
    else:
        mu = x
        radial_dmu = ((b * b - (D * mu) ** 2) / (b * b + (D * mu) ** 2) ** 2) * wx
    n_phi = src.azimuthal_nodes
    phi = 2 * np.pi * (np.arange(n_phi) + 0.5) / n_phi
    st = np.sqrt(np.clip(1 - mu ** 2, 0.0, None))
    khat = (mu[:, None, None] * axis
            + st[:, None, None] * (np.cos(phi)[None, :, None] * e1
                                   + np.sin(phi)[None, :, None] * e2)).reshape(-1, 3)
    weight = np.repeat(radial_dmu, n_phi) * (2 * np.pi / n_phi) * c.kappa / (2 * np.pi) ** 3
    delta = polarization_sum_closed_form(khat)
    return np.einsum("a,aijkl->ijkl", weight, delta)


def field_covariance(dx, tau, source, c: PhysicalConstants) -> np.ndarray:
    """``E[h_ij(x, t) h_kl(x + dx, t + tau)]`` as a ``(3, 3, 3, 3)`` array.

    ``source`` is a :class:`~gravistoch.lattice.ModeGrid` (finite box, sum over
    all ``k`` with the ``1/L**3`` normalization of the mode expansion) or a
    :class:`Continuum` (regulated ``d^3k / (2 pi)^3`` quadrature).
    """
    dx = np.asarray(dx, dtype=float)
    if isinstance(source, ModeGrid):
        return _lattice_covariance(dx, tau, source, c)
    if isinstance(source, Continuum):
        return _continuum_covariance(dx, tau, source, c)
    raise TypeError(f"unsupported mode source {type(source).__name__}")


def mode_energy(omega, c: PhysicalConstants):
    """Ground-state energy of one ``(lam, k)`` degree of freedom.

    Twice the mean potential term ``f k^2 E|Q|^2 / 4`` (virial theorem), with
    ``E|Q|^2`` the sum of both component variances.
    """
    law = mode_law(omega, c)
    potential = c.f * 0.25 * np.asarray(omega) ** 2 * (2.0 * law.variance)
    return 2.0 * potential


def lattice_vacuum_energy(grid: ModeGrid, c: PhysicalConstants) -> float:
    """Zero-point energy of the box: every ``(lam, k)``, both ``k`` and ``-k``."""
    return float(2.0 * np.sum(mode_energy(grid.mode_omega, c)))
