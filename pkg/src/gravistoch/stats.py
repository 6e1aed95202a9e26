"""Small estimators shared by the Monte Carlo modules."""

from __future__ import annotations

import numpy as np

from .exceptions import InsufficientDataError

__all__ = ["batch_means", "jackknife", "excess_kurtosis", "block_ids"]


def batch_means(estimates, axis: int = 0, min_batches: int = 10):
    """Mean and standard error from independent batch estimates along ``axis``."""
    estimates = np.asarray(estimates, dtype=float)
    n = estimates.shape[axis]
    if n < min_batches:
        raise InsufficientDataError(f"{n} batches; at least {min_batches} required")
    mean = estimates.mean(axis=axis)
    se = estimates.std(axis=axis, ddof=1) / np.sqrt(n)
    return mean, se


def block_ids(n_samples: int, n_blocks: int) -> np.ndarray:
    """Contiguous block label for each of ``n_samples`` samples."""
    return (np.arange(n_samples) * n_blocks) // n_samples


def jackknife(values, statistic, groups=None, n_blocks: int = 50):
    """Delete-one-block jackknife of ``statistic`` over the leading axis.

    ``groups`` assigns every sample to a block (e.g. its trajectory); without
    it, ``n_blocks`` contiguous blocks are used. ``statistic`` maps a sample
    array to a scalar or array. Returns ``(estimate, stderr)``.
    """
    values = np.asarray(values)
    if groups is None:
        groups = block_ids(len(values), n_blocks)
    groups = np.asarray(groups)
    labels = np.unique(groups)
    g = len(labels)
    if g < 2:
        raise InsufficientDataError("jackknife needs at least two blocks")
    full = np.asarray(statistic(values), dtype=float)
    loo = np.stack([np.asarray(statistic(values[groups != lab]), dtype=float) for lab in labels])
    mean_loo = loo.mean(axis=0)
    se = np.sqrt((g - 1) / g * np.sum((loo - mean_loo) ** 2, axis=0))
    return full, se


def _kurt(x: np.ndarray) -> float:
    x = x - x.mean()
    m2 = np.mean(x * x)
    return float(np.mean(x ** 4) / (m2 * m2))


def excess_kurtosis(x, groups=None, n_blocks: int = 50):
    """Sample excess kurtosis ``m4/m2**2 - 3`` with a jackknife standard error."""
    x = np.asarray(x, dtype=float).ravel()
    est, se = jackknife(x, _kurt, groups=groups, n_blocks=n_blocks)
    return float(est) - 3.0, float(se)
