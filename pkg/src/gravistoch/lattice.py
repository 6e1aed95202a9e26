"""Periodic-box mode lattice.

Wavevectors are ``k = 2 pi n / L`` with integer labels ``|n_i| <= n_max`` and
``n != 0``. Of each pair ``{k, -k}`` only the member whose first nonzero
label is positive is stored (the *representative*); the partner amplitude is
``Q(lam, -k) = conj(Q(lam, k))`` and is never stored.

Modes are ordered lexicographically in ``n`` and then by polarization
(``+`` before ``x``), so mode ``m`` belongs to representative ``m // 2``.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares

from .constants import PhysicalConstants
from .exceptions import DomainError, InsufficientDataError
from .polarization import LABELS, basis_arrays

__all__ = [
    "ModeGrid",
    "ModeState",
    "SpectrumResult",
    "enumerate_modes",
    "single_mode_grid",
    "assemble_field",
    "field_map",
    "vacuum_spectrum",
    "cumulative_mode_count",
]


@dataclass(frozen=True)
class ModeGrid:
    """Immutable set of representative ``(lam, k)`` modes.

    Array attributes are indexed by representative (``labels``, ``k``,
    ``omega``) or by mode (``mode_k``, ``mode_omega``, ``eps``).
    """

    box_length: float
    n_max: int
    labels: np.ndarray  # (R, 3) integer
    k: np.ndarray = field(repr=False)  # (R, 3)
    eps: np.ndarray = field(repr=False)  # (2R, 3, 3)

    @property
    def omega(self) -> np.ndarray:
        return np.linalg.norm(self.k, axis=1)

    @property
    def n_representatives(self) -> int:
        return len(self.labels)

    @property
    def n_modes(self) -> int:
        return 2 * len(self.labels)

    @property
    def mode_k(self) -> np.ndarray:
        return np.repeat(self.k, 2, axis=0)

    @property
    def mode_omega(self) -> np.ndarray:
        return np.repeat(self.omega, 2)

    @property
    def representatives(self) -> list[tuple[str, tuple[int, int, int]]]:
        return [(LABELS[m % 2], tuple(int(v) for v in self.labels[m // 2]))
                for m in range(self.n_modes)]

    @property
    def volume(self) -> float:
        return self.box_length ** 3

    def digest(self) -> str:
        """Short hash identifying the grid (box length, labels)."""
        h = hashlib.sha256()
        h.update(np.float64(self.box_length).tobytes())
        h.update(np.ascontiguousarray(self.labels, dtype="<i8").tobytes())
        return h.hexdigest()[:16]


@dataclass
class ModeState:
    """Complex amplitudes of the representative modes at time ``t``."""

    Q: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        self.Q = np.asarray(self.Q, dtype=complex)
        if not np.all(np.isfinite(self.Q)):
            raise DomainError("mode amplitudes must be finite")


def _build(box_length: float, labels: np.ndarray, n_max: int) -> ModeGrid:
    k = (2.0 * math.pi / box_length) * labels.astype(float)
    eps = basis_arrays(k).reshape(-1, 3, 3)
    return ModeGrid(box_length=float(box_length), n_max=n_max, labels=labels, k=k, eps=eps)


def enumerate_modes(L: float, n_max: int) -> ModeGrid:
    if not (L > 0 and math.isfinite(L)):
        raise DomainError(f"box length must be positive (got {L!r})")
    if int(n_max) != n_max or n_max < 1:
        raise DomainError(f"n_max must be an integer >= 1 (got {n_max!r})")
    n_max = int(n_max)
    r = np.arange(-n_max, n_max + 1)
    n = np.stack(np.meshgrid(r, r, r, indexing="ij"), axis=-1).reshape(-1, 3)
    # meshgrid with ij indexing is already lexicographic
    first = np.argmax(n != 0, axis=1)
    lead = n[np.arange(len(n)), first]
    return _build(L, n[lead > 0], n_max)


def single_mode_grid(L: float, label=(0, 0, 1)) -> ModeGrid:
    """Grid holding one representative wavevector (two polarization modes)."""
    labels = np.asarray([label], dtype=int)
    first = np.argmax(labels[0] != 0)
    if not np.any(labels) or labels[0, first] < 0:
        raise DomainError("label must be nonzero with its first nonzero entry positive")
    return _build(L, labels, int(np.max(np.abs(labels))))


def _check_state(grid: ModeGrid, Q) -> np.ndarray:
    Q = np.asarray(Q.Q if isinstance(Q, ModeState) else Q, dtype=complex)
    if Q.shape[-1] != grid.n_modes:
        raise DomainError(
            f"state has {Q.shape[-1]} amplitudes but grid has {grid.n_modes} modes"
        )
    return Q


def field_map(grid: ModeGrid, x) -> tuple[np.ndarray, np.ndarray]:
    """Real linear map from ``(Re Q, Im Q)`` to ``h_ij(x)``.

    Returns ``(A, B)`` of shape ``(P, n_modes, 3, 3)`` with
    ``h_ij(x_p) = sum_m A[p, m] Re Q_m + B[p, m] Im Q_m``.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    phase = x @ grid.mode_k.T  # (P, M)
    norm = 2.0 / (math.sqrt(2.0) * grid.box_length ** 1.5)
    A = norm * np.cos(phase)[..., None, None] * grid.eps
    B = -norm * np.sin(phase)[..., None, None] * grid.eps
    return A, B


def assemble_field(grid: ModeGrid, state, x, *, return_residual: bool = False):
    """Field ``h_ij`` at one point or an array of points.

    Both members of every ``{k, -k}`` pair are summed explicitly, the partner
    with the conjugated amplitude, and the real part is returned. With
    ``return_residual`` the largest imaginary part of the complex sum is
    returned as well.
    """
    Q = _check_state(grid, state)
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    xs = np.atleast_2d(x)
    phase = np.exp(1j * (xs @ grid.mode_k.T))  # (P, M)
    # e^{ikx} Q + e^{-ikx} Q*, with eps(-k) = eps(k)
    coeff = phase * Q + np.conj(phase) * np.conj(Q)
    h = np.einsum("pm,mij->pij", coeff, grid.eps) / (math.sqrt(2.0) * grid.box_length ** 1.5)
    residual = float(np.max(np.abs(h.imag))) if h.size else 0.0
    h = h.real
    if single:
        h = h[0]
    return (h, residual) if return_residual else h


@dataclass(frozen=True)
class SpectrumResult:
    edges: np.ndarray
    omega: np.ndarray  # bin centres
    rho: np.ndarray
    count: np.ndarray  # (lam, k) degrees of freedom over the full lattice
    fitted: np.ndarray  # bins used in the fit
    exponent: float
    exponent_stderr: float
    coefficient: float
    reference_coefficient: float

    @property
    def reference(self) -> np.ndarray:
        return self.reference_coefficient * self.omega ** 3


def _full_lattice_omegas(grid: ModeGrid) -> np.ndarray:
    # each representative stands for k and -k, each with two polarizations
    return np.repeat(grid.omega, 4)


def vacuum_spectrum(grid: ModeGrid, c: PhysicalConstants, bin_width: float | None = None,
                    *, bins: int | None = None, min_count: int = 100,
                    min_bins: int = 10) -> SpectrumResult:
    """Binned zero-point spectral energy density with a power-law fit.

    Every ``(lam, k)`` degree of freedom of the full lattice contributes
    ``hbar omega / 2``; bins cover ``(0, 2 pi n_max / L]`` (the sphere inscribed
    in the cubic cutoff). The law ``rho = C omega**p`` is fitted in log space
    to the bin averages ``C (b**(p+1) - a**(p+1)) / ((p+1)(b-a))`` over the bins
    holding at least ``min_count`` degrees of freedom, so the curvature of the
    law inside a bin does not bias the fit.
    """
    cutoff = 2.0 * math.pi * grid.n_max / grid.box_length
    if bins is None:
        if bin_width is None:
            raise DomainError("give bin_width or bins")
        bins = max(1, int(round(cutoff / bin_width)))
    bin_width = cutoff / bins
    edges = np.linspace(0.0, cutoff, bins + 1)
    w = _full_lattice_omegas(grid)
    w = w[w <= cutoff * (1 + 1e-12)]
    idx = np.clip(np.searchsorted(edges, w, side="left") - 1, 0, bins - 1)
    count = np.bincount(idx, minlength=bins)
    energy = np.bincount(idx, weights=0.5 * c.hbar * w, minlength=bins)
    rho = energy / (grid.volume * bin_width)
    centres = 0.5 * (edges[:-1] + edges[1:])
    fitted = count >= min_count
    if fitted.sum() < min_bins:
        raise InsufficientDataError(
            f"only {int(fitted.sum())} bins hold >= {min_count} modes; need {min_bins}"
            " (increase n_max or widen bins)"
        )
    a, b = edges[:-1][fitted], edges[1:][fitted]
    y = np.log(rho[fitted])

    def binned_law(params):
        log_c, p = params
        # bin average of C w^p over [a, b]
        return log_c + np.log((b ** (p + 1) - a ** (p + 1)) / ((p + 1) * (b - a)))

    start = np.array([math.log(c.hbar / (2 * math.pi ** 2)), 3.0])
    fit = least_squares(lambda q: binned_law(q) - y, start, method="lm")
    J = fit.jac
    dof = max(1, len(y) - 2)
    cov = np.linalg.inv(J.T @ J) * (fit.fun @ fit.fun) / dof
    coef = fit.x
    return SpectrumResult(
        edges=edges,
        omega=centres,
        rho=rho,
        count=count,
        fitted=fitted,
        exponent=float(coef[1]),
        exponent_stderr=float(math.sqrt(cov[1, 1])),
        coefficient=float(math.exp(coef[0])),
        reference_coefficient=c.hbar / (2.0 * math.pi ** 2),
    )


def cumulative_mode_count(grid: ModeGrid, K: float) -> int:
    """Number of ``(lam, k)`` degrees of freedom with ``|k| <= K``."""
    return int(np.count_nonzero(_full_lattice_omegas(grid) <= K))
