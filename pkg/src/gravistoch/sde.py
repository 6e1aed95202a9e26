"""Ensemble integration of the ground-state diffusion and its estimators.

Each stored mode amplitude ``Q = X + iY`` follows

    dQ = -gamma Q dt + dW,    E[dX^2] = E[dY^2] = 2 nu dt,

independently across modes and components (``k != -k'`` on the lattice).
Integration is Euler-Maruyama; the exact Ornstein-Uhlenbeck transition is
available as ``method="exact"`` and serves as the bias reference.

Wiener increments come from counter-based streams keyed by
``(seed, member)``; the normal for step ``s``, mode ``m`` and component
``c`` (0 real, 1 imaginary) sits at position ``2 (s * n_modes + m) + c``.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import rng
from .constants import PhysicalConstants, nu_from_beta
from .exceptions import DomainError, InsufficientDataError, NumericalGuardError
from .ground_state import mode_law, stochastic_mode_covariance
from .lattice import ModeGrid, ModeState
from .moments import CovarianceEstimate
from .stats import batch_means

__all__ = [
    "WienerSpec",
    "Trajectory",
    "Ensemble",
    "ForwardBackwardEstimate",
    "worker_count",
    "max_stable_dt",
    "check_step",
    "sample_stationary",
    "euler_maruyama",
    "exact_ou",
    "integrate",
    "simulate_ensemble",
    "estimate_forward_backward",
    "mean_acceleration_check",
    "covariance_estimator",
]

STABILITY_FACTOR = 0.1
_CHUNK_STEPS = 2048


def worker_count(default: int | None = None) -> int:
    """Worker threads, capped by the ``GRAVISTOCH_THREADS`` environment variable."""
    n = default or os.cpu_count() or 1
    cap = os.environ.get("GRAVISTOCH_THREADS")
    if cap:
        n = min(n, max(1, int(cap)))
    return max(1, n)


@dataclass(frozen=True)
class WienerSpec:
    nu: float
    dt: float

    @property
    def variance(self) -> float:
        return 2.0 * self.nu * self.dt

    def increments(self, seed: int, member: int, n_modes: int,
                   start_step: int, n_steps: int) -> np.ndarray:
        """Complex increments of shape ``(n_steps, n_modes)``."""
        key = rng.stream_key(seed, rng.WIENER, member)
        z = rng.normals(key, 2 * start_step * n_modes, 2 * n_steps * n_modes)
        z = z.reshape(n_steps, n_modes, 2) * math.sqrt(self.variance)
        return z[..., 0] + 1j * z[..., 1]


@dataclass
class Trajectory:
    """One ensemble member on the uniform time grid ``t0 + dt * n``."""

    t0: float
    dt: float
    Q: np.ndarray  # (n_times, n_modes)
    seed: int
    member_index: int

    @property
    def steps(self) -> int:
        return self.Q.shape[0] - 1

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.Q.shape[0])

    def state(self, n: int) -> ModeState:
        return ModeState(self.Q[n], t=float(self.times[n]))


@dataclass
class Ensemble:
    """Stacked trajectories ``Q[member, time, mode]`` sharing one time grid."""

    grid: ModeGrid
    constants: PhysicalConstants
    t0: float
    dt: float
    Q: np.ndarray
    seed: int
    members: np.ndarray = field(default=None)
    method: str = "euler"

    def __post_init__(self):
        if self.members is None:
            self.members = np.arange(self.Q.shape[0])

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.Q.shape[1])

    @property
    def n_members(self) -> int:
        return self.Q.shape[0]

    def trajectory(self, i: int) -> Trajectory:
        return Trajectory(self.t0, self.dt, self.Q[i], self.seed, int(self.members[i]))

    def components(self, mode: int) -> np.ndarray:
        """Real and imaginary parts of one mode as ``(2 * members, n_times)``.

        Both components are independent copies of the same scalar process, so
        estimators pool them as separate units.
        """
        q = self.Q[:, :, mode]
        return np.concatenate([q.real, q.imag], axis=0)


def max_stable_dt(grid_or_omega, c: PhysicalConstants) -> float:
    omega = grid_or_omega.mode_omega if isinstance(grid_or_omega, ModeGrid) else grid_or_omega
    gamma_max = float(np.max(c.gamma(np.asarray(omega, dtype=float))))
    return math.inf if gamma_max == 0 else STABILITY_FACTOR / gamma_max


def check_step(dt: float, grid_or_omega, c: PhysicalConstants, override: bool = False) -> None:
    if not dt > 0:
        raise NumericalGuardError(f"dt must be > 0 (got {dt!r})")
    limit = max_stable_dt(grid_or_omega, c)
    if dt > limit * (1 + 1e-12) and not override:
        raise NumericalGuardError(
            f"dt={dt:g} exceeds the stability guard {STABILITY_FACTOR}/gamma_max = {limit:g};"
            " reduce dt or pass the override"
        )


def _stationary_draw(grid: ModeGrid, c: PhysicalConstants, seed: int, member: int) -> np.ndarray:
    var = mode_law(grid.mode_omega, c).variance
    z = rng.normals(rng.stream_key(seed, rng.INIT, member), 0, 2 * grid.n_modes)
    z = z.reshape(grid.n_modes, 2) * np.sqrt(var)[:, None]
    return z[:, 0] + 1j * z[:, 1]


def sample_stationary(grid: ModeGrid, c: PhysicalConstants, seed: int, member: int = 0) -> ModeState:
    """Independent draw from the stationary ground-state law of every mode."""
    return ModeState(_stationary_draw(grid, c, seed, member), t=0.0)


def _as_pairs(q) -> np.ndarray:
    q = np.asarray(q, dtype=complex)
    return np.stack([q.real, q.imag], axis=-1)


def _from_pairs(x: np.ndarray) -> np.ndarray:
    return x[..., 0] + 1j * x[..., 1]


def _linear_recursion(q0, factor, scale, dW) -> np.ndarray:
    """``q[n+1] = factor q[n] + scale dW[n]`` along axis ``-2`` of ``dW``.

    Arithmetic is done on real and imaginary parts separately so every
    element sees the same float operations whatever the array layout.
    """
    x = _as_pairs(q0)
    w = _as_pairs(dW)  # (..., n, modes, 2)
    f = np.asarray(factor, dtype=float)[..., None]
    s = np.asarray(scale, dtype=float)[..., None]
    n = w.shape[-3]
    out = np.empty(w.shape[:-3] + (n + 1,) + w.shape[-2:])
    out[..., 0, :, :] = x
    for i in range(n):
        x = f * x + s * w[..., i, :, :]
        out[..., i + 1, :, :] = x
    return _from_pairs(out)


def euler_maruyama(q0, rate, dt: float, dW, *, drift: bool = True) -> np.ndarray:
    """Iterate ``q <- (1 - rate dt) q + dW`` over the time axis of ``dW``.

    ``dW`` has shape ``(..., n_steps, n_modes)`` and ``q0`` ``(..., n_modes)``.
    Returns the path including ``q0`` (``n_steps + 1`` time points).
    """
    rate = np.asarray(rate, dtype=float)
    factor = 1.0 - rate * dt if drift else np.ones_like(rate)
    return _linear_recursion(q0, factor, np.ones_like(rate), dW)


def exact_ou(q0, rate, variance, dt: float, dW, nu: float) -> np.ndarray:
    """Exact OU transition driven by the same Gaussian draws as ``dW``.

    ``dW`` (variance ``2 nu dt`` per component) is rescaled to the exact
    conditional variance ``variance (1 - exp(-2 rate dt))``.
    """
    rate = np.asarray(rate, dtype=float)
    if nu == 0:
        scale = np.zeros_like(rate)
    else:
        scale = np.sqrt(variance * -np.expm1(-2.0 * rate * dt) / (2.0 * nu * dt))
    return _linear_recursion(q0, np.exp(-rate * dt), scale, dW)


def _integrate_block(q0, grid: ModeGrid, c: PhysicalConstants, dt: float, steps: int,
                     seed: int, members, method: str, drift: bool,
                     step0: int = 0) -> np.ndarray:
    """Paths ``(len(members), steps + 1, n_modes)`` using stream steps ``step0 ..``."""
    wiener = WienerSpec(c.nu, dt)
    omega = grid.mode_omega
    rate = c.gamma(omega)
    members = list(members)
    out = np.empty((len(members), steps + 1, grid.n_modes), dtype=complex)
    out[:, 0] = q0
    q = out[:, 0]
    for start in range(0, steps, _CHUNK_STEPS):
        n = min(_CHUNK_STEPS, steps - start)
        dW = np.stack([wiener.increments(seed, m, grid.n_modes, step0 + start, n) for m in members])
        if method == "euler":
            path = euler_maruyama(q, rate, dt, dW, drift=drift)
        else:
            path = exact_ou(q, rate, c.kappa / omega, dt, dW, c.nu)
        out[:, start + 1:start + n + 1] = path[:, 1:]
        q = path[:, -1]
    return out


def _check_method(method: str, drift: bool) -> None:
    if method not in ("euler", "exact"):
        raise DomainError(f"unknown method {method!r}")
    if method == "exact" and not drift:
        raise DomainError("the exact stepper always includes the drift")


def integrate(initial: ModeState, grid: ModeGrid, c: PhysicalConstants, dt: float, steps: int,
              seed: int, member: int = 0, *, method: str = "euler", drift: bool = True,
              allow_large_dt: bool = False) -> Trajectory:
    """Integrate one member from ``initial`` for ``steps`` steps of size ``dt``."""
    _check_method(method, drift)
    check_step(dt, grid, c, override=allow_large_dt)
    q0 = np.asarray(initial.Q if isinstance(initial, ModeState) else initial, dtype=complex)
    if q0.shape != (grid.n_modes,):
        raise DomainError("initial state does not match the grid")
    Q = _integrate_block(q0[None], grid, c, dt, steps, seed, [member], method, drift)[0]
    t0 = initial.t if isinstance(initial, ModeState) else 0.0
    return Trajectory(t0=t0, dt=dt, Q=Q, seed=seed, member_index=member)


def simulate_ensemble(grid: ModeGrid, c: PhysicalConstants, dt: float, steps: int, members: int,
                      seed: int, *, first_member: int = 0, method: str = "euler",
                      drift: bool = True, cold_start: bool = False, burn_in: int = 0,
                      allow_large_dt: bool = False, workers: int | None = None) -> Ensemble:
    """Integrate members ``first_member .. first_member+members-1``.

    Members start in the stationary law unless ``cold_start`` (all ``Q = 0``),
    in which case ``burn_in`` steps are integrated and discarded. Work is split
    over threads by member; each member's stream is independent of the split.
    """
    _check_method(method, drift)
    check_step(dt, grid, c, override=allow_large_dt)
    if steps < 1 or members < 1:
        raise DomainError("steps and members must be >= 1")
    ids = np.arange(first_member, first_member + members)
    Q = np.empty((members, steps + 1, grid.n_modes), dtype=complex)

    def run(block: np.ndarray) -> None:
        mids = [int(m) for m in ids[block]]
        if cold_start:
            q0 = np.zeros((len(mids), grid.n_modes), dtype=complex)
            if burn_in:
                # burn-in consumes the first steps of each member's stream
                q0 = _integrate_block(q0, grid, c, dt, burn_in, seed, mids, method, drift)[:, -1]
        else:
            q0 = np.stack([_stationary_draw(grid, c, seed, m) for m in mids])
        Q[block] = _integrate_block(q0, grid, c, dt, steps, seed, mids, method, drift,
                                    step0=burn_in if cold_start else 0)

    n_workers = min(worker_count(workers), members)
    blocks = np.array_split(np.arange(members), n_workers)
    if n_workers == 1:
        run(blocks[0])
    else:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            list(pool.map(run, blocks))
    return Ensemble(grid=grid, constants=c, t0=burn_in * dt if cold_start else 0.0, dt=dt, Q=Q,
                    seed=seed, members=ids, method=method)


# --------------------------------------------------------------------------
# estimators


def _units(x: np.ndarray, n_units: int) -> list[np.ndarray]:
    """Split ``(rows, n_times)`` data into roughly independent units.

    Rows (trajectory components) are grouped when there are enough of them;
    otherwise every row is cut into contiguous time blocks.
    """
    rows = x.shape[0]
    if rows >= n_units:
        groups = np.array_split(np.arange(rows), n_units)
        return [x[g] for g in groups]
    per_row = math.ceil(n_units / rows)
    return [blk[None, :] for row in x for blk in np.array_split(row, per_row)]


@dataclass
class ForwardBackwardEstimate:
    """Binned finite-lag forward and backward drift estimates of one mode.

    Slopes are regressions through the origin against ``Q``; their standard
    errors come from batch means over trajectory groups.
    """

    lag: float
    bin_centres: np.ndarray
    counts: np.ndarray
    forward: np.ndarray
    forward_se: np.ndarray
    backward: np.ndarray
    backward_se: np.ndarray
    osmotic_z: np.ndarray  # per bin (b - b_* - 2 nu d ln rho/dQ) / se
    forward_slope: float
    forward_slope_se: float
    backward_slope: float
    backward_slope_se: float
    difference_slope: float
    difference_slope_se: float
    reference_gamma: float
    reference_osmotic_slope: float
    n_samples: int

    def z_scores(self) -> dict[str, float]:
        g = self.reference_gamma
        return {
            "forward": (self.forward_slope + g) / self.forward_slope_se,
            "backward": (self.backward_slope - g) / self.backward_slope_se,
            "osmotic": (self.difference_slope - self.reference_osmotic_slope)
            / self.difference_slope_se,
        }


def estimate_forward_backward(ensemble: Ensemble, mode: int = 0, lag: float | None = None, *,
                              bins: int = 20, span: float = 3.0,
                              n_batches: int = 20) -> ForwardBackwardEstimate:
    """Conditional increments ``E[Q(t+h) - Q(t) | Q(t)] / h`` and the backward analogue.

    ``lag`` must be a multiple of the ensemble time step (default: one step).
    Empty bins are reported with ``nan`` means and zero counts.
    """
    h_steps = 1 if lag is None else int(round(lag / ensemble.dt))
    if h_steps < 1 or not math.isclose(h_steps * ensemble.dt, lag or ensemble.dt, rel_tol=1e-9):
        raise DomainError("lag must be a positive multiple of dt")
    h = h_steps * ensemble.dt
    x = ensemble.components(mode)
    if x.shape[1] <= 2 * h_steps:
        raise InsufficientDataError("trajectories shorter than two lags")
    omega = float(ensemble.grid.mode_omega[mode])
    c = ensemble.constants
    law = mode_law(omega, c)

    def pieces(a: np.ndarray):
        q = a[:, h_steps:-h_steps]
        fwd = (a[:, 2 * h_steps:] - q) / h
        bwd = (q - a[:, :-2 * h_steps]) / h
        return q, fwd, bwd

    q, fwd, bwd = pieces(x)
    qf, ff, bf = q.ravel(), fwd.ravel(), bwd.ravel()
    sigma = math.sqrt(law.variance)
    edges = np.linspace(-span * sigma, span * sigma, bins + 1)
    idx = np.digitize(qf, edges) - 1
    inside = (idx >= 0) & (idx < bins)
    counts = np.bincount(idx[inside], minlength=bins)

    def binned(v):
        s = np.bincount(idx[inside], weights=v[inside], minlength=bins)
        s2 = np.bincount(idx[inside], weights=v[inside] ** 2, minlength=bins)
        with np.errstate(invalid="ignore", divide="ignore"):
            mean = s / counts
            var = (s2 / counts - mean ** 2) * counts / np.maximum(counts - 1, 1)
            se = np.sqrt(var / counts)
        mean[counts == 0] = np.nan
        se[counts < 2] = np.nan
        return mean, se

    f_mean, f_se = binned(ff)
    b_mean, b_se = binned(bf)
    d_mean, d_se = binned(ff - bf)
    qbar, _ = binned(qf)
    osmotic_slope = -2.0 * c.nu / law.variance
    osmotic_z = (d_mean - osmotic_slope * qbar) / d_se

    slopes = []
    for unit in _units(x, n_batches):
        uq, uf, ub = pieces(unit)
        qq = np.sum(uq * uq)
        slopes.append((np.sum(uq * uf) / qq, np.sum(uq * ub) / qq))
    mean, se = batch_means(np.array(slopes))
    # the difference slope is linear in the two, so its batch estimates are exact differences
    dslopes = np.array([s[0] - s[1] for s in slopes])
    dmean, dse = batch_means(dslopes)
    return ForwardBackwardEstimate(
        lag=h,
        bin_centres=0.5 * (edges[:-1] + edges[1:]),
        counts=counts,
        forward=f_mean,
        forward_se=f_se,
        backward=b_mean,
        backward_se=b_se,
        osmotic_z=osmotic_z,
        forward_slope=float(mean[0]),
        forward_slope_se=float(se[0]),
        backward_slope=float(mean[1]),
        backward_slope_se=float(se[1]),
        difference_slope=float(dmean),
        difference_slope_se=float(dse),
        reference_gamma=float(law.gamma),
        reference_osmotic_slope=osmotic_slope,
        n_samples=int(qf.size),
    )


class _Affine:
    """Function ``c0 + c1 Q`` of one mode coordinate."""

    def __init__(self, c0: float, c1: float):
        self.c0, self.c1 = c0, c1

    def __sub__(self, other: "_Affine") -> "_Affine":
        return _Affine(self.c0 - other.c0, self.c1 - other.c1)

    def __add__(self, other: "_Affine") -> "_Affine":
        return _Affine(self.c0 + other.c0, self.c1 + other.c1)

    def scale(self, a: float) -> "_Affine":
        return _Affine(a * self.c0, a * self.c1)


def _mean_derivative(drift_slope: float):
    """``D = b d/dQ +/- nu d^2/dQ^2`` on stationary affine functions with ``b = a Q``.

    The Laplacian term annihilates affine functions, so only the drift acts.
    """
    return lambda f: _Affine(0.0, f.c1 * drift_slope)


def mean_acceleration_check(omega: float, beta: float, c: PhysicalConstants) -> float:
    """Relative residual of the mean-acceleration law for the ground state.

    With ``nu = nu_from_beta(beta)`` the forward drift is ``-gamma Q`` and the
    osmotic relation gives the backward drift ``+gamma Q``. Applying the
    forward and backward mean derivatives yields
    ``1/2 (D D_* + D_* D) Q + beta/8 (D - D_*)^2 Q = -gamma^2 (1 - beta/2) Q``,
    which must equal the harmonic force per unit mass ``-omega^2 Q``.
    """
    if not omega > 0:
        raise DomainError("omega must be > 0")
    nu = nu_from_beta(beta, c)
    cb = c.with_nu(nu)
    law = mode_law(omega, cb)
    a_fwd = -law.gamma
    # b_* = b - 2 nu d ln rho / dQ with d ln rho / dQ = -Q / variance
    a_bwd = a_fwd + 2.0 * nu / law.variance
    D = _mean_derivative(a_fwd)
    D_star = _mean_derivative(a_bwd)
    Q = _Affine(0.0, 1.0)
    sym = (D(D_star(Q)) + D_star(D(Q))).scale(0.5)
    diff = lambda f: D(f) - D_star(f)  # noqa: E731
    lhs = sym + diff(diff(Q)).scale(beta / 8.0)
    return abs(lhs.c1 + omega * omega) / (omega * omega)


def covariance_estimator(ensemble: Ensemble, lags, mode: int = 0, *,
                         n_batches: int | None = None) -> CovarianceEstimate:
    """Lagged second moments ``E[X(t + tau_i) X(t + tau_j)]`` of one mode.

    Real and imaginary components are pooled. Standard errors are batch means
    over independent units: every trajectory component is one unit when there
    are at least ten, otherwise trajectories are cut into time blocks.
    """
    lags = [float(v) for v in lags]
    steps = [int(round(t / ensemble.dt)) for t in lags]
    for t, s in zip(lags, steps):
        if s < 0 or not math.isclose(s * ensemble.dt, t, rel_tol=1e-9, abs_tol=1e-12):
            raise DomainError(f"lag {t} is not a non-negative multiple of dt")
    x = ensemble.components(mode)
    span = max(steps)
    n_t = x.shape[1] - span
    if n_t < 1:
        raise InsufficientDataError("trajectories shorter than the largest lag")
    if n_batches is None:
        n_batches = x.shape[0] if x.shape[0] >= 10 else 20
    units = _units(x, n_batches)
    if len(units) < 10:
        raise InsufficientDataError(f"{len(units)} batches; at least 10 required")
    k = len(steps)
    est = np.empty((len(units), k, k))
    for u, blk in enumerate(units):
        m = blk.shape[1] - span
        if m < 1:
            raise InsufficientDataError("time blocks shorter than the largest lag")
        views = [blk[:, s:s + m] for s in steps]
        for i in range(k):
            for j in range(i, k):
                est[u, i, j] = est[u, j, i] = np.mean(views[i] * views[j])
    mean, se = batch_means(est)
    omega = float(ensemble.grid.mode_omega[mode])
    ref = stochastic_mode_covariance(
        omega, np.abs(np.subtract.outer(lags, lags)), ensemble.constants
    )
    return CovarianceEstimate(
        labels=[(f"Q{mode}", t) for t in lags],
        matrix=mean,
        stderr=se,
        reference=np.asarray(ref, dtype=float),
        n_batches=len(units),
    )
