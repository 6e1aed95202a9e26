"""Linearized gravity on a regular (t, x, y, z) grid.

Fields are arrays of shape ``(Nt, Nx, Ny, Nz, 4, 4)`` with signature
``diag(-1, 1, 1, 1)``. Derivatives are second-order central differences;
nodes whose stencil leaves the grid are set to NaN and excluded from norms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .constants import PhysicalConstants
from .exceptions import DomainError

__all__ = [
    "METRIC",
    "GridField",
    "SourceField",
    "PointMass",
    "LorentzResidual",
    "trace_reverse",
    "gauge_transform",
    "lorentz_residual",
    "einstein_lhs",
    "retarded_solution",
    "deposit_point_mass",
    "boosted_point_mass_field",
    "monopole_field",
    "sample_field",
    "interior_max",
]

METRIC = np.diag([-1.0, 1.0, 1.0, 1.0])
_ETA = np.diag(METRIC)


def _spacing4(spacing) -> tuple[float, float, float, float]:
    s = tuple(float(v) for v in spacing)
    if len(s) == 2:
        s = (s[0], s[1], s[1], s[1])
    if len(s) != 4 or not all(v > 0 and math.isfinite(v) for v in s):
        raise DomainError("spacing must be (dt, dx) or (dt, dx, dy, dz), all positive")
    return s


@dataclass(frozen=True)
class GridField:
    """Symmetric rank-2 tensor sampled on a regular 4D grid.

    ``origin`` is the coordinate of node ``(0, 0, 0, 0)``. NaN entries mark
    nodes where a stencil left the grid.
    """

    values: np.ndarray
    spacing: tuple
    origin: tuple = (0.0, 0.0, 0.0, 0.0)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 6 or v.shape[-2:] != (4, 4):
            raise DomainError("values must have shape (Nt, Nx, Ny, Nz, 4, 4)")
        if not np.allclose(v, np.swapaxes(v, -1, -2), rtol=0, atol=0, equal_nan=True):
            raise DomainError("tensor must be symmetric at every node")
        if np.any(np.isinf(v)):
            raise DomainError("values must be finite (NaN marks untrusted boundary nodes)")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "spacing", _spacing4(self.spacing))
        object.__setattr__(self, "origin", tuple(float(o) for o in self.origin))

    @property
    def shape(self) -> tuple:
        return self.values.shape[:4]

    def coordinates(self) -> list[np.ndarray]:
        return [o + h * np.arange(n) for o, h, n in zip(self.origin, self.spacing, self.shape)]

    def like(self, values) -> "GridField":
        return type(self)(values, self.spacing, self.origin)

    def compatible(self, other) -> bool:
        return (tuple(np.shape(other.values)[:4]) == self.shape
                and np.allclose(other.spacing, self.spacing) and np.allclose(other.origin, self.origin))


class SourceField(GridField):
    """Energy-momentum density ``T_mu_nu`` on a grid; each node is a cell centre."""


@dataclass(frozen=True)
class PointMass:
    """Point mass on the straight worldline ``position + velocity * t``."""

    mass: float
    position: tuple = (0.0, 0.0, 0.0)
    velocity: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        v = np.asarray(self.velocity, dtype=float)
        if v.shape != (3,) or np.asarray(self.position).shape != (3,):
            raise DomainError("position and velocity must be 3-vectors")
        if not np.dot(v, v) < 1.0:
            raise DomainError("speed must be below 1")

    @property
    def gamma(self) -> float:
        v = np.asarray(self.velocity, dtype=float)
        return 1.0 / math.sqrt(1.0 - float(v @ v))

    def four_velocity_lower(self) -> np.ndarray:
        g = self.gamma
        return np.concatenate([[-g], g * np.asarray(self.velocity, dtype=float)])


@dataclass(frozen=True)
class LorentzResidual:
    values: np.ndarray  # (Nt, Nx, Ny, Nz, 4), NaN on the boundary
    max_norm: float


def interior_max(a) -> float:
    """Max of ``|a|`` over finite entries."""
    a = np.abs(np.asarray(a, dtype=float))
    finite = a[np.isfinite(a)]
    if finite.size == 0:
        raise DomainError("no interior nodes")
    return float(finite.max())


# -- algebra ---------------------------------------------------------------

def _trace(v: np.ndarray) -> np.ndarray:
    return np.einsum("...aa,a->...", v, _ETA)


def trace_reverse(h: GridField, direction: str = "to_bar") -> GridField:
    """``h - n h^a_a / 2``; the map is the same in both directions in 4D."""
    if direction not in ("to_bar", "from_bar"):
        raise DomainError("direction must be 'to_bar' or 'from_bar'")
    tr = _trace(h.values)
    return h.like(h.values - 0.5 * tr[..., None, None] * METRIC)


# -- finite differences ----------------------------------------------------

def _d1(f: np.ndarray, axis: int, h: float) -> np.ndarray:
    out = np.full_like(f, np.nan)
    sl = [slice(None)] * f.ndim
    lo, mid, hi = list(sl), list(sl), list(sl)
    lo[axis], mid[axis], hi[axis] = slice(None, -2), slice(1, -1), slice(2, None)
    out[tuple(mid)] = (f[tuple(hi)] - f[tuple(lo)]) / (2.0 * h)
    return out


def _d2(f: np.ndarray, axis: int, h: float) -> np.ndarray:
    out = np.full_like(f, np.nan)
    sl = [slice(None)] * f.ndim
    lo, mid, hi = list(sl), list(sl), list(sl)
    lo[axis], mid[axis], hi[axis] = slice(None, -2), slice(1, -1), slice(2, None)
    out[tuple(mid)] = (f[tuple(hi)] - 2.0 * f[tuple(mid)] + f[tuple(lo)]) / (h * h)
    return out


def _mask_boundary(a: np.ndarray, margin: int) -> np.ndarray:
    """Set every node within ``margin`` of a grid face to NaN."""
    out = np.full_like(a, np.nan)
    inner = tuple(slice(margin, n - margin) for n in a.shape[:4])
    out[inner] = a[inner]
    return out


def _require_nodes(shape: Sequence[int], n: int, what: str) -> None:
    if min(shape) < n:
        raise DomainError(f"{what} needs at least {n} nodes per axis, got {tuple(shape)}")


def gauge_transform(h: GridField, C) -> GridField:
    """``h_mu_nu - d_nu C_mu - d_mu C_nu`` with central differences.

    ``C`` is an array ``(Nt, Nx, Ny, Nz, 4)`` of lower-index components.
    Boundary nodes become NaN.
    """
    C = np.asarray(C, dtype=float)
    if C.shape != h.shape + (4,):
        raise DomainError(f"gauge vector shape {C.shape} does not match grid {h.shape}")
    _require_nodes(h.shape, 3, "gauge_transform")
    dC = np.stack([_d1(C, a, h.spacing[a]) for a in range(4)], axis=-1)  # [..., mu, nu] = d_nu C_mu
    return h.like(_mask_boundary(h.values - (dC + np.swapaxes(dC, -1, -2)), 1))


def _divergence(v: np.ndarray, spacing) -> np.ndarray:
    """``d^a f_{mu a}`` for a tensor ``v[..., mu, a]``."""
    return sum(_ETA[a] * _d1(v[..., :, a], a, spacing[a]) for a in range(4))


def lorentz_residual(hbar: GridField) -> LorentzResidual:
    _require_nodes(hbar.shape, 3, "lorentz_residual")
    r = _mask_boundary(_divergence(hbar.values, hbar.spacing), 1)
    return LorentzResidual(r, interior_max(r))


def einstein_lhs(hbar: GridField) -> np.ndarray:
    """Linearized Einstein operator applied to a trace-reversed field.

    The wave term uses compact three-point second differences; terms built
    from the divergence use composed central differences. NaN within two
    nodes of the boundary.
    """
    _require_nodes(hbar.shape, 5, "einstein_lhs")
    v, s = hbar.values, hbar.spacing
    box = sum(_ETA[a] * _d2(v, a, s[a]) for a in range(4))
    div = _divergence(v, s)  # [..., mu]
    ddiv = np.stack([_d1(div, a, s[a]) for a in range(4)], axis=-1)  # [..., mu, nu] = d_nu div_mu
    dd = sum(_ETA[b] * _d1(div[..., b], b, s[b]) for b in range(4))
    lhs = -box - dd[..., None, None] * METRIC + (ddiv + np.swapaxes(ddiv, -1, -2))
    return _mask_boundary(lhs, 2)


# -- sources and retarded solutions ---------------------------------------

def _point_mass_field(src: PointMass, x: np.ndarray, t: float, G: float, exclusion: float) -> np.ndarray:
    x0 = np.asarray(src.position, dtype=float)
    v = np.asarray(src.velocity, dtype=float)
    # s = t - t_r solves s = |d + v s|, the positive root of a quadratic
    d = x - x0 - v * t
    vv, dv, dd = float(v @ v), float(d @ v), float(d @ d)
    s = (dv + math.sqrt(dv * dv + (1.0 - vv) * dd)) / (1.0 - vv)
    R_vec = d + v * s
    R = math.sqrt(float(R_vec @ R_vec))
    if R <= exclusion:
        raise DomainError(f"field point within {exclusion} of a point mass")
    denom = R - float(R_vec @ v)
    u = src.four_velocity_lower()
    return 4.0 * G * src.mass * np.outer(u, u) / (src.gamma * denom)


def _grid_source_field(T: SourceField, x: np.ndarray, t: float, G: float, exclusion: float | None) -> np.ndarray:
    coords = T.coordinates()
    vals = T.values
    nt = T.shape[0]
    cell = T.spacing[1] * T.spacing[2] * T.spacing[3]
    active = np.any(vals != 0.0, axis=(0, 4, 5))  # spatial cells that ever carry energy
    idx = np.argwhere(active)
    if idx.size == 0:
        return np.zeros((4, 4))
    pos = np.column_stack([coords[a + 1][idx[:, a]] for a in range(3)])
    R = np.linalg.norm(pos - x, axis=1)
    if exclusion is None:
        exclusion = 0.5 * math.sqrt(T.spacing[1] ** 2 + T.spacing[2] ** 2 + T.spacing[3] ** 2)
    if np.any(R <= exclusion):
        raise DomainError("field point lies inside a source cell")
    cells = vals[:, idx[:, 0], idx[:, 1], idx[:, 2]]  # (Nt, n_cells, 4, 4)
    if nt == 1:
        Tr = cells[0]
    else:
        s = (t - R - T.origin[0]) / T.spacing[0]
        if np.any(s < 0) or np.any(s > nt - 1):
            raise DomainError("retarded time falls outside the source time range")
        i0 = np.minimum(np.floor(s).astype(int), nt - 2)
        w = (s - i0)[:, None, None]
        j = np.arange(len(R))
        Tr = (1.0 - w) * cells[i0, j] + w * cells[i0 + 1, j]
    return 4.0 * G * cell * np.einsum("c,cij->ij", 1.0 / R, Tr)


def retarded_solution(source, x, t: float, c: PhysicalConstants, *, exclusion_radius: float | None = None) -> np.ndarray:
    """Retarded trace-reversed field ``hbar_mu_nu(x, t)`` of a source.

    ``source`` is a :class:`SourceField` (midpoint quadrature over cells with
    the retarded time linearly interpolated; one time slice means static), a
    :class:`PointMass` (closed form), or an iterable of these (superposed).
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (3,):
        raise DomainError("x must be a 3-vector")
    if isinstance(source, SourceField):
        return _grid_source_field(source, x, float(t), c.G, exclusion_radius)
    if isinstance(source, PointMass):
        return _point_mass_field(source, x, float(t), c.G, exclusion_radius or 0.0)
    if isinstance(source, Iterable):
        parts = [retarded_solution(s, x, t, c, exclusion_radius=exclusion_radius) for s in source]
        return sum(parts, np.zeros((4, 4)))
    raise DomainError(f"unsupported source type {type(source).__name__}")


def boosted_point_mass_field(src: PointMass, x, t: float, c: PhysicalConstants) -> np.ndarray:
    """``4 G M u_mu u_nu / rho`` with ``rho`` the distance in the rest frame of the mass.

    Equal to the retarded field of a uniformly moving mass; computed without
    solving for the retarded time.
    """
    v = np.asarray(src.velocity, dtype=float)
    r = np.asarray(x, dtype=float) - np.asarray(src.position, dtype=float) - v * t
    speed2 = float(v @ v)
    r_par = float(r @ v) / math.sqrt(speed2) if speed2 > 0 else 0.0
    r_perp2 = float(r @ r) - r_par ** 2
    rho = math.sqrt(src.gamma ** 2 * r_par ** 2 + r_perp2)
    u = src.four_velocity_lower()
    return 4.0 * c.G * src.mass * np.outer(u, u) / rho


def monopole_field(T: SourceField, x, t: float, c: PhysicalConstants) -> np.ndarray:
    """Far-field estimate ``4 G (integrated T) / |x - centroid|`` at the centroid's retarded time."""
    x = np.asarray(x, dtype=float)
    coords = T.coordinates()
    cell = T.spacing[1] * T.spacing[2] * T.spacing[3]
    weight = np.abs(T.values).sum(axis=(0, 4, 5))
    if not weight.any():
        return np.zeros((4, 4))
    mesh = np.meshgrid(*coords[1:], indexing="ij")
    centroid = np.array([np.sum(m * weight) for m in mesh]) / weight.sum()
    R = float(np.linalg.norm(x - centroid))
    nt = T.shape[0]
    if nt == 1:
        total = T.values[0].sum(axis=(0, 1, 2))
    else:
        s = np.clip((t - R - T.origin[0]) / T.spacing[0], 0, nt - 1)
        i0 = min(int(s), nt - 2)
        w = s - i0
        total = ((1 - w) * T.values[i0] + w * T.values[i0 + 1]).sum(axis=(0, 1, 2))
    return 4.0 * c.G * cell * total / R


def deposit_point_mass(mass: float, position, n_cells: int, spacing: float,
                       origin=(0.0, 0.0, 0.0)) -> SourceField:
    """Static mass spread over the 8 nearest nodes by cloud-in-cell weights."""
    pos = (np.asarray(position, dtype=float) - np.asarray(origin, dtype=float)) / spacing
    base = np.floor(pos).astype(int)
    frac = pos - base
    if np.any(base < 0) or np.any(base + 1 >= n_cells):
        raise DomainError("mass lies outside the deposit grid")
    T = np.zeros((1, n_cells, n_cells, n_cells, 4, 4))
    rho = mass / spacing ** 3
    for corner in np.ndindex(2, 2, 2):
        wt = np.prod([f if c_ else 1.0 - f for f, c_ in zip(frac, corner)])
        i, j, k = base + np.array(corner)
        T[0, i, j, k, 0, 0] += rho * wt
    return SourceField(T, (1.0, spacing), (0.0, *origin))


def sample_field(fn, shape: Sequence[int], spacing, origin=(0.0, 0.0, 0.0, 0.0)) -> GridField:
    """Grid field from ``fn(t, x, y, z) -> (..., 4, 4)`` evaluated on meshgrid arrays."""
    sp = _spacing4(spacing)
    axes = [o + h * np.arange(n) for o, h, n in zip(origin, sp, shape)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return GridField(np.asarray(fn(*mesh), dtype=float), sp, origin)
