import math

import numpy as np
import pytest
import sympy as sp

from gravistoch.constants import natural_units
from gravistoch.exceptions import DomainError, InsufficientDataError, NumericalGuardError
from gravistoch.ground_state import stochastic_mode_covariance
from gravistoch.lattice import ModeState, enumerate_modes, single_mode_grid
from gravistoch.sde import (
    WienerSpec,
    check_step,
    covariance_estimator,
    estimate_forward_backward,
    euler_maruyama,
    exact_ou,
    integrate,
    max_stable_dt,
    mean_acceleration_check,
    sample_stationary,
    simulate_ensemble,
    worker_count,
)


def test_wiener_chunks_consistent():
    w = WienerSpec(nu=1.5, dt=0.01)
    full = w.increments(3, 2, 5, 0, 100)
    parts = np.concatenate([w.increments(3, 2, 5, 0, 37), w.increments(3, 2, 5, 37, 63)])
    np.testing.assert_array_equal(full, parts)
    assert full.shape == (100, 5)


def test_wiener_variance():
    w = WienerSpec(nu=0.7, dt=0.02)
    z = w.increments(1, 0, 10, 0, 20_000)
    for part in (z.real, z.imag):
        v = part.var()
        assert abs(v - w.variance) < 5 * w.variance * math.sqrt(2 / part.size)


def test_stability_guard():
    c = natural_units()
    g = enumerate_modes(2 * np.pi, 1)
    assert max_stable_dt(g, c) == pytest.approx(0.1 / math.sqrt(3))
    with pytest.raises(NumericalGuardError):
        check_step(0.1, g, c)
    check_step(0.1, g, c, override=True)
    with pytest.raises(NumericalGuardError):
        check_step(0.0, g, c)
    with pytest.raises(NumericalGuardError):
        simulate_ensemble(g, c, 0.5, 10, 2, seed=0)


def test_euler_matches_hand_recursion():
    rng = np.random.default_rng(0)
    dW = rng.normal(size=(50, 3)) + 1j * rng.normal(size=(50, 3))
    q0 = np.array([1.0 + 1j, -0.5, 0.2j])
    rate = np.array([0.5, 1.0, 2.0])
    dt = 0.01
    path = euler_maruyama(q0, rate, dt, dW)
    q = q0.copy()
    for n in range(50):
        q = q + (-rate * q) * dt + dW[n]
        np.testing.assert_allclose(path[n + 1], q, rtol=1e-13, atol=1e-13)
    free = euler_maruyama(q0, rate, dt, dW, drift=False)
    np.testing.assert_allclose(free[-1], q0 + dW.sum(axis=0), atol=1e-12)


def test_exact_ou_transition():
    q0 = np.array([2.0 + 0j])
    dW = np.zeros((1, 1), dtype=complex)
    path = exact_ou(q0, np.array([1.5]), np.array([1.0]), 0.2, dW, nu=1.0)
    assert path[-1, 0] == pytest.approx(2.0 * math.exp(-0.3))


def test_bohm_limit_is_frozen():
    c = natural_units(nu=0.0)
    g = single_mode_grid(2 * np.pi)
    traj = integrate(ModeState([1.0 + 2j, -1j]), g, c, 0.1, 50, seed=1)
    assert np.all(traj.Q == traj.Q[0])


def test_thread_split_is_bitwise_identical():
    c = natural_units()
    g = enumerate_modes(2 * np.pi, 1)
    dt = max_stable_dt(g, c)
    a = simulate_ensemble(g, c, dt, 300, 7, seed=42, workers=1)
    b = simulate_ensemble(g, c, dt, 300, 7, seed=42, workers=3)
    assert np.array_equal(a.Q, b.Q)


def test_member_ranges_are_addressable():
    c = natural_units()
    g = single_mode_grid(2 * np.pi)
    full = simulate_ensemble(g, c, 0.01, 3000, 6, seed=9)
    tail = simulate_ensemble(g, c, 0.01, 3000, 3, seed=9, first_member=3)
    assert np.array_equal(full.Q[3:], tail.Q)
    assert list(tail.members) == [3, 4, 5]


def test_integrate_matches_ensemble_member():
    c = natural_units()
    g = single_mode_grid(2 * np.pi)
    ens = simulate_ensemble(g, c, 0.01, 100, 3, seed=4)
    start = sample_stationary(g, c, seed=4, member=2)
    traj = integrate(start, g, c, 0.01, 100, seed=4, member=2)
    assert np.array_equal(traj.Q, ens.Q[2])


def test_cold_start_burn_in_continues_stream():
    c = natural_units()
    g = single_mode_grid(2 * np.pi)
    long = simulate_ensemble(g, c, 0.01, 150, 2, seed=3, cold_start=True)
    split = simulate_ensemble(g, c, 0.01, 100, 2, seed=3, cold_start=True, burn_in=50)
    np.testing.assert_array_equal(long.Q[:, 50:], split.Q)
    assert split.t0 == pytest.approx(0.5)


def test_method_checks():
    c = natural_units()
    g = single_mode_grid(2 * np.pi)
    with pytest.raises(DomainError):
        simulate_ensemble(g, c, 0.01, 10, 2, seed=0, method="rk4")
    with pytest.raises(DomainError):
        simulate_ensemble(g, c, 0.01, 10, 2, seed=0, method="exact", drift=False)


def test_worker_count_env(monkeypatch):
    monkeypatch.setenv("GRAVISTOCH_THREADS", "2")
    assert worker_count(8) == 2
    monkeypatch.delenv("GRAVISTOCH_THREADS")
    assert worker_count(3) == 3


@pytest.fixture(scope="module")
def exact_ensemble():
    c = natural_units()
    return simulate_ensemble(single_mode_grid(2 * np.pi), c, 0.05, 4000, 60, seed=17, method="exact")


def test_exact_ensemble_covariance(exact_ensemble):
    est = covariance_estimator(exact_ensemble, [0.0, 0.5, 1.0, 2.0])
    assert np.max(np.abs(est.z_scores())) < 4
    np.testing.assert_allclose(est.reference[0], stochastic_mode_covariance(1.0, [0, 0.5, 1, 2], natural_units()))
    assert est[("Q0", 0.0), ("Q0", 1.0)] == est.matrix[0, 2]


def test_covariance_estimator_checks(exact_ensemble):
    with pytest.raises(DomainError):
        covariance_estimator(exact_ensemble, [0.0, 0.033])
    with pytest.raises(InsufficientDataError):
        covariance_estimator(exact_ensemble, [0.0, 1000.0])


def test_forward_backward_slopes(exact_ensemble):
    fb = estimate_forward_backward(exact_ensemble)
    z = fb.z_scores()
    # exact transitions: finite-lag slopes are (exp(-gamma h) - 1)/h, not -gamma
    h = fb.lag
    assert fb.forward_slope == pytest.approx((math.exp(-h) - 1) / h, abs=4 * fb.forward_slope_se)
    assert abs(z["osmotic"]) < 4
    assert fb.counts.sum() <= fb.n_samples
    with pytest.raises(DomainError):
        estimate_forward_backward(exact_ensemble, lag=0.07)


def test_mean_acceleration_residual():
    c = natural_units()
    for beta in (-4.0, -2.0, 0.0, 1.0, 1.9):
        for w in (0.5, 1.0, 3.0):
            assert mean_acceleration_check(w, beta, c) < 1e-12
    with pytest.raises(DomainError):
        mean_acceleration_check(1.0, 2.0, c)


def test_mean_acceleration_symbolic():
    # D f = b f' on affine f; b = -g Q forward, b_* = +g Q backward
    Q, g, w, beta = sp.symbols("Q gamma omega beta", real=True)
    D = lambda f: -g * Q * sp.diff(f, Q)  # noqa: E731
    Ds = lambda f: g * Q * sp.diff(f, Q)  # noqa: E731
    lhs = sp.Rational(1, 2) * (D(Ds(Q)) + Ds(D(Q))) + beta / 8 * (D(D(Q) - Ds(Q)) - Ds(D(Q) - Ds(Q)))
    lhs = lhs.subs(g, w / sp.sqrt(1 - beta / 2))
    assert sp.simplify(lhs + w ** 2 * Q) == 0
