"""Gaussian (Wick) combinatorics and moment estimation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import permutations
from typing import Callable, Hashable, NamedTuple, Sequence

import numpy as np

from .exceptions import DomainError, InsufficientDataError
from .stats import jackknife

__all__ = [
    "MAX_PAIRING_ORDER",
    "CovarianceEstimate",
    "WickPrediction",
    "pairings",
    "double_factorial",
    "wick_moment",
    "sample_moment",
    "symmetrize",
]

MAX_PAIRING_ORDER = 12


@dataclass
class CovarianceEstimate:
    """Second moments between labelled observables.

    ``labels`` are ``(observable id, time)`` pairs; ``matrix[i, j]`` is the
    second moment of label ``i`` with label ``j``.
    """

    labels: list[tuple[Hashable, float]]
    matrix: np.ndarray
    stderr: np.ndarray | None = None
    reference: np.ndarray | None = None
    n_batches: int | None = None
    _index: dict = field(init=False, repr=False)

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=float)
        n = len(self.labels)
        if self.matrix.shape != (n, n):
            raise DomainError("matrix shape does not match labels")
        if not np.allclose(self.matrix, self.matrix.T, rtol=0, atol=1e-12 * max(1.0, np.abs(self.matrix).max())):
            raise DomainError("covariance matrix must be symmetric")
        if np.any(np.diag(self.matrix) < 0):
            raise DomainError("covariance diagonal must be non-negative")
        if self.stderr is not None:
            self.stderr = np.asarray(self.stderr, dtype=float)
            if np.any(self.stderr < 0):
                raise DomainError("standard errors must be non-negative")
        self._index = {tuple(lab) if isinstance(lab, list) else lab: i
                       for i, lab in enumerate(self.labels)}

    def index(self, label) -> int:
        key = tuple(label) if isinstance(label, list) else label
        try:
            return self._index[key]
        except KeyError:
            raise DomainError(f"unknown label {label!r}") from None

    def __getitem__(self, pair) -> float:
        a, b = pair
        return float(self.matrix[self.index(a), self.index(b)])

    def z_scores(self) -> np.ndarray:
        if self.reference is None or self.stderr is None:
            raise DomainError("z-scores need a reference and standard errors")
        with np.errstate(divide="ignore", invalid="ignore"):
            return (self.matrix - self.reference) / self.stderr

    def with_matrix(self, matrix) -> "CovarianceEstimate":
        return CovarianceEstimate(labels=list(self.labels), matrix=matrix)


def double_factorial(n: int) -> int:
    return math.prod(range(n, 0, -2)) if n > 0 else 1


def _pairings(items: list) -> list[list[tuple]]:
    if not items:
        return [[]]
    first, rest = items[0], items[1:]
    out = []
    for i, partner in enumerate(rest):
        remaining = rest[:i] + rest[i + 1:]
        for tail in _pairings(remaining):
            out.append([(first, partner)] + tail)
    return out


def pairings(n: int) -> list[list[tuple[int, int]]]:
    """All perfect matchings of ``0 .. n-1``.

    ``n = 0`` gives one empty matching (``[[]]``); odd ``n`` gives no matching
    (``[]``). Order is deterministic: the first free index is paired with
    every later index in increasing order.
    """
    if n < 0:
        raise DomainError("n must be >= 0")
    if n > MAX_PAIRING_ORDER:
        raise DomainError(f"pairing enumeration is capped at n = {MAX_PAIRING_ORDER}")
    if n % 2:
        return []
    return _pairings(list(range(n)))


class WickPrediction(NamedTuple):
    value: float
    odd: bool


def wick_moment(cov: CovarianceEstimate, indices: Sequence) -> WickPrediction:
    """Zero-mean Gaussian moment ``E[prod x_i]`` as a sum over pairings."""
    idx = [cov.index(lab) for lab in indices]
    if len(idx) % 2:
        return WickPrediction(0.0, True)
    m = cov.matrix
    total = 0.0
    for matching in pairings(len(idx)):
        total += math.prod(m[idx[a], idx[b]] for a, b in matching)
    return WickPrediction(float(total), False)


def sample_moment(data, indices: Sequence[int], groups=None, *, min_samples: int = 1000,
                  n_blocks: int = 50):
    """Empirical ``E[prod data[:, i]]`` with a block-jackknife standard error.

    ``data`` has one row per sample; ``groups`` gives each row's block (use the
    trajectory index for correlated time series).
    """
    data = np.asarray(data, dtype=float)
    if data.ndim != 2:
        raise DomainError("data must be (samples, observables)")
    if len(data) < min_samples:
        raise InsufficientDataError(f"{len(data)} samples; at least {min_samples} required")
    prod = np.prod(data[:, list(indices)], axis=1)
    if groups is None:
        est, se = jackknife(prod, np.mean, n_blocks=n_blocks)
        return float(est), float(se)
    # leave-one-group-out means from per-group sums
    groups = np.asarray(groups)
    labels, inv = np.unique(groups, return_inverse=True)
    g = len(labels)
    if g < 2:
        raise InsufficientDataError("jackknife needs at least two blocks")
    sums = np.bincount(inv, weights=prod, minlength=g)
    counts = np.bincount(inv, minlength=g)
    total, n = sums.sum(), counts.sum()
    loo = (total - sums) / (n - counts)
    se = math.sqrt((g - 1) / g * np.sum((loo - loo.mean()) ** 2))
    return float(total / n), se


def symmetrize(fn: Callable | None, args: Sequence):
    """Average of ``fn(*p)`` over all orderings ``p`` of ``args``.

    ``fn=None`` multiplies the arguments, for which symmetrization is the
    identity.
    """
    args = list(args)
    if fn is None:
        fn = lambda *xs: math.prod(xs)  # noqa: E731
    perms = list(permutations(args))
    return sum(fn(*p) for p in perms) / len(perms)
