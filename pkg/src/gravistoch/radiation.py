"""Random classical radiation: plane waves with uniformly random phases.

Each stored mode carries two phases; its amplitude is

    Q(t) = A (cos(omega t + theta1) + i cos(omega t + theta2)),
    A = sqrt(32 pi G hbar / omega),

so that ``E[(Re Q)^2] = A^2 / 2`` equals the ground-state mode variance.
The partner at ``-k`` has phases ``(theta1, theta2 + pi)``, which makes its
amplitude the complex conjugate and the assembled field real.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import rng
from .constants import PhysicalConstants
from .exceptions import DomainError
from .ground_state import quantum_mode_propagator
from .lattice import ModeGrid, enumerate_modes, field_map, single_mode_grid
from .moments import symmetrize
from .stats import excess_kurtosis, jackknife

__all__ = [
    "PhaseAssignment",
    "amplitude",
    "sample_phases",
    "sample_phase_ensemble",
    "evaluate_Q",
    "field_from_phases",
    "theta_mode_covariance",
    "symmetrized_quantum_covariance",
    "theta_covariance_mc",
    "KurtosisPoint",
    "gaussianity_scan",
]

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class PhaseAssignment:
    """Phases ``theta[m] = (theta1, theta2)`` of every stored mode."""

    theta: np.ndarray  # (n_modes, 2)

    def readout(self, mode: int, sign: int = +1) -> tuple[float, float]:
        """Phases of ``mode`` at ``+k`` (``sign=+1``) or at ``-k`` (``sign=-1``)."""
        t1, t2 = self.theta[mode]
        if sign > 0:
            return float(t1), float(t2)
        return float(t1), float(math.fmod(t2 + math.pi, TWO_PI))

    def partner(self) -> np.ndarray:
        return np.column_stack([self.theta[:, 0], np.fmod(self.theta[:, 1] + math.pi, TWO_PI)])


def amplitude(omega, c: PhysicalConstants):
    return np.sqrt(2.0 * c.kappa / np.asarray(omega, dtype=float))


def _stride(n_modes: int) -> int:
    # two phases per mode, padded to whole Philox blocks so members start on a block
    return 4 * math.ceil(2 * n_modes / 4)


def sample_phase_ensemble(grid: ModeGrid, seed: int, members: int, first_member: int = 0) -> np.ndarray:
    """Phases of members ``first_member ..`` as ``(members, n_modes, 2)``.

    Member ``j`` reads uniforms ``j * stride .. j * stride + 2 n_modes - 1`` of
    the ``(seed, PHASES)`` stream.
    """
    stride = _stride(grid.n_modes)
    u = rng.uniforms(rng.stream_key(seed, rng.PHASES), first_member * stride, members * stride)
    u = u.reshape(members, stride)[:, :2 * grid.n_modes]
    return TWO_PI * u.reshape(members, grid.n_modes, 2)


def sample_phases(grid: ModeGrid, seed: int, member: int = 0) -> PhaseAssignment:
    return PhaseAssignment(sample_phase_ensemble(grid, seed, 1, first_member=member)[0])


def evaluate_Q(phases, omega, t: float, c: PhysicalConstants):
    """Amplitude(s) for phases given as a :class:`PhaseAssignment` or ``(..., 2)`` array."""
    theta = phases.theta if isinstance(phases, PhaseAssignment) else np.asarray(phases, dtype=float)
    if np.any(~(np.asarray(omega) > 0)):
        raise DomainError("omega must be > 0")
    wt = np.asarray(omega) * t
    return amplitude(omega, c) * (np.cos(wt + theta[..., 0]) + 1j * np.cos(wt + theta[..., 1]))


def field_from_phases(grid: ModeGrid, phases: PhaseAssignment, x, t: float, c: PhysicalConstants):
    """Complex mode sum over ``+k`` and ``-k`` built from their own phases.

    Returns ``(h, imag_residual)``; reality of ``h`` is the content of the
    phase relation at ``-k``.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    w = grid.mode_omega
    q_plus = evaluate_Q(phases.theta, w, t, c)
    q_minus = evaluate_Q(phases.partner(), w, t, c)
    phase = np.exp(1j * (x @ grid.mode_k.T))
    coeff = phase * q_plus + np.conj(phase) * q_minus
    h = np.einsum("pm,mij->pij", coeff, grid.eps) / (math.sqrt(2.0) * grid.box_length ** 1.5)
    return h, float(np.max(np.abs(h.imag)))


def theta_mode_covariance(omega, tau, c: PhysicalConstants):
    """``E_theta[Re Q(t) Re Q(t + tau)] = (kappa/omega) cos(omega tau)``."""
    if np.any(~(np.asarray(omega) > 0)):
        raise DomainError("omega must be > 0")
    return c.kappa / np.asarray(omega) * np.cos(np.asarray(omega) * np.asarray(tau))


def symmetrized_quantum_covariance(omega, tau, c: PhysicalConstants):
    """Vacuum two-point function averaged over both operator orderings."""
    def ordered(t_x, t_y):
        return quantum_mode_propagator(omega, t_x - t_y, c)

    return np.real(symmetrize(ordered, [np.asarray(tau, dtype=float), 0.0]))


def theta_covariance_mc(omega: float, taus, samples: int, seed: int, c: PhysicalConstants,
                        t0: float = 0.0):
    """Monte Carlo ``E[Re Q(t0) Re Q(t0 + tau)]`` over uniform phases.

    Returns ``(estimate, stderr)`` arrays over ``taus``; draws are independent.
    """
    grid = single_mode_grid(TWO_PI / omega if omega > 0 else 1.0)
    theta = sample_phase_ensemble(grid, seed, samples)[:, 0, :]
    x0 = evaluate_Q(theta, omega, t0, c).real
    taus = np.atleast_1d(np.asarray(taus, dtype=float))
    prods = np.stack([x0 * evaluate_Q(theta, omega, t0 + tau, c).real for tau in taus])
    est = prods.mean(axis=1)
    se = prods.std(axis=1, ddof=1) / math.sqrt(samples)
    return est, se


@dataclass(frozen=True)
class KurtosisPoint:
    n_max: int  # 0 stands for a single mode
    n_modes: int
    excess_kurtosis: float
    stderr: float
    variance: float
    fourth_moment: float
    fourth_moment_se: float

    @property
    def wick_fourth_moment(self) -> float:
        return 3.0 * self.variance ** 2


def _h11_weights(grid: ModeGrid) -> np.ndarray:
    A, _ = field_map(grid, np.zeros(3))  # at x = 0 the Im Q weights vanish
    return A[0, :, 0, 0]


def _observable_samples(n_max: int, samples: int, seed: int, c: PhysicalConstants,
                        box_length: float, t: float, chunk: int = 10000) -> tuple[np.ndarray, int]:
    if n_max == 0:
        grid = single_mode_grid(box_length)
        weights = np.zeros(grid.n_modes)
        weights[0] = 1.0  # Re Q of one mode
    else:
        grid = enumerate_modes(box_length, n_max)
        weights = _h11_weights(grid)
    active = np.flatnonzero(weights)
    w = grid.mode_omega
    out = np.empty(samples)
    for start in range(0, samples, chunk):
        n = min(chunk, samples - start)
        theta = sample_phase_ensemble(grid, seed, n, first_member=start)
        q = evaluate_Q(theta[:, active], w[active], t, c).real
        out[start:start + n] = q @ weights[active]
    return out, (1 if n_max == 0 else grid.n_modes)


def gaussianity_scan(n_max_values, samples: int, seed: int, c: PhysicalConstants, *,
                     box_length: float = TWO_PI, t: float = 0.0) -> list[KurtosisPoint]:
    """Excess kurtosis of ``h_11(0, t)`` over the phase ensemble per lattice size.

    ``n_max = 0`` selects a single mode and measures ``Re Q`` itself.
    """
    if samples < 10_000:
        raise DomainError("gaussianity_scan needs at least 1e4 samples")
    points = []
    for n_max in n_max_values:
        x, n_modes = _observable_samples(int(n_max), samples, seed, c, box_length, t)
        kurt, se = excess_kurtosis(x)
        m4, m4_se = jackknife(x ** 4, np.mean)
        points.append(KurtosisPoint(
            n_max=int(n_max), n_modes=n_modes, excess_kurtosis=kurt, stderr=se,
            variance=float(np.mean(x * x)), fourth_moment=float(m4), fourth_moment_se=float(m4_se),
        ))
    return points
