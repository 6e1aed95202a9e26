"""Transverse-traceless polarization tensors.

For a wavevector ``k`` the two real basis tensors are built from an
orthonormal triad ``(e1, e2, khat)``::

    eps(+) = (e1 e1 - e2 e2) / sqrt(2)
    eps(x) = (e1 e2 + e2 e1) / sqrt(2)

The triad depends only on the line through ``k`` (``khat`` is flipped so that
its first nonzero component is positive), hence ``eps(lam, -k) == eps(lam, k)``
bit for bit. For ``k`` along ``+z`` the tensors are ``diag(1, -1, 0)/sqrt(2)``
and the symmetric ``xy`` tensor.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import DomainError

__all__ = [
    "LABELS",
    "PolarizationTensor",
    "basis_for",
    "basis_arrays",
    "transverse_projector",
    "polarization_sum",
    "polarization_sum_closed_form",
    "invariant_residuals",
]

LABELS = ("plus", "cross")
_SQRT_HALF = np.sqrt(0.5)


@dataclass(frozen=True)
class PolarizationTensor:
    components: np.ndarray
    wavevector: np.ndarray
    label: str


def _as_wavevector(k) -> np.ndarray:
    k = np.asarray(k, dtype=float)
    if k.shape[-1] != 3:
        raise DomainError(f"wavevector must have 3 components, got shape {k.shape}")
    norm = np.linalg.norm(k, axis=-1)
    if np.any(norm == 0) or not np.all(np.isfinite(norm)):
        raise DomainError("wavevector must be finite and nonzero")
    return k


def _axis_line(k: np.ndarray) -> np.ndarray:
    """Unit vectors along ``k`` with the first nonzero component made positive."""
    khat = k / np.linalg.norm(k, axis=-1, keepdims=True)
    nonzero = khat != 0
    first = np.argmax(nonzero, axis=-1)
    lead = np.take_along_axis(khat, first[..., None], axis=-1)
    return np.where(lead < 0, -khat, khat)


def _triad(k: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    khat = _axis_line(k)
    # seed axis: smallest |component|, ties broken by lowest index (argmin)
    seed_idx = np.argmin(np.abs(khat), axis=-1)
    seed = np.zeros_like(khat)
    np.put_along_axis(seed, seed_idx[..., None], 1.0, axis=-1)
    e1 = seed - np.sum(seed * khat, axis=-1, keepdims=True) * khat
    e1 /= np.linalg.norm(e1, axis=-1, keepdims=True)
    e2 = np.cross(khat, e1)
    return e1, e2, khat


def basis_arrays(k) -> np.ndarray:
    """Polarization tensors for one or many wavevectors.

    Returns an array of shape ``(..., 2, 3, 3)`` with index ``0`` for ``+``
    and ``1`` for ``x``.
    """
    k = _as_wavevector(k)
    e1, e2, _ = _triad(k)
    e11 = e1[..., :, None] * e1[..., None, :]
    e22 = e2[..., :, None] * e2[..., None, :]
    e12 = e1[..., :, None] * e2[..., None, :]
    plus = (e11 - e22) * _SQRT_HALF
    cross = (e12 + np.swapaxes(e12, -1, -2)) * _SQRT_HALF
    return np.stack([plus, cross], axis=-3)


def basis_for(k) -> tuple[PolarizationTensor, PolarizationTensor]:
    k = _as_wavevector(k)
    if k.ndim != 1:
        raise DomainError("basis_for takes a single wavevector; use basis_arrays")
    eps = basis_arrays(k)
    return tuple(
        PolarizationTensor(components=eps[i], wavevector=k.copy(), label=LABELS[i])
        for i in range(2)
    )


def transverse_projector(k) -> np.ndarray:
    """``delta_ij - k_i k_j / k^2`` (shape ``(..., 3, 3)``)."""
    k = _as_wavevector(k)
    kk = k[..., :, None] * k[..., None, :]
    return np.eye(3) - kk / np.sum(k * k, axis=-1)[..., None, None]


def polarization_sum_closed_form(k) -> np.ndarray:
    """Rank-4 tensor ``(-P_ij P_kl + P_ik P_jl + P_il P_jk) / 2``."""
    P = transverse_projector(k)
    return 0.5 * (
        -np.einsum("...ij,...kl->...ijkl", P, P)
        + np.einsum("...ik,...jl->...ijkl", P, P)
        + np.einsum("...il,...jk->...ijkl", P, P)
    )


def polarization_sum(k) -> np.ndarray:
    """``sum_lam eps_ij(lam, k) eps_kl(lam, k)`` from the explicit basis."""
    eps = basis_arrays(k)
    return np.einsum("...aij,...akl->...ijkl", eps, eps)


def invariant_residuals(k) -> dict[str, float]:
    """Largest violation of each defining identity of the basis at ``k``."""
    k = _as_wavevector(k)
    eps = basis_arrays(k)
    khat = k / np.linalg.norm(k, axis=-1, keepdims=True)
    gram = np.einsum("...aij,...bij->...ab", eps, eps)
    return {
        "symmetry": float(np.max(np.abs(eps - np.swapaxes(eps, -1, -2)))),
        "trace": float(np.max(np.abs(np.trace(eps, axis1=-2, axis2=-1)))),
        "transverse": float(
            np.max(np.abs(np.einsum("...i,...aij->...aj", khat, eps)))
        ),
        "orthonormality": float(np.max(np.abs(gram - np.eye(2)))),
        "sum_rule": float(
            np.max(np.abs(polarization_sum(k) - polarization_sum_closed_form(k)))
        ),
        "parity": float(np.max(np.abs(basis_arrays(-k) - eps))),
    }
