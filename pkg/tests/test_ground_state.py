import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from gravistoch.constants import PhysicalConstants, natural_units
from gravistoch.exceptions import DomainError
from gravistoch.ground_state import (
    Continuum,
    drift,
    field_covariance,
    lattice_vacuum_energy,
    mode_energy,
    mode_law,
    quantum_mode_propagator,
    schwinger_check,
    stationary_log_density,
    stochastic_mode_covariance,
)
from gravistoch.lattice import enumerate_modes, field_map, single_mode_grid
from gravistoch.polarization import polarization_sum_closed_form

omegas = st.floats(min_value=0.05, max_value=50)
taus = st.floats(min_value=0, max_value=20)
nus = st.floats(min_value=0.01, max_value=10)


def test_mode_law(c):
    law = mode_law(2.0, c)
    assert law.variance == pytest.approx(0.5)
    assert law.gamma == pytest.approx(2.0)


def test_drift_is_nu_times_score(c):
    # b = nu d ln rho / dX per component
    for nu in (0.5, 1.0, 3.0):
        cc = c.with_nu(nu)
        X, eps = 0.7, 1e-6
        score = (stationary_log_density(X + eps, 1.3, cc) - stationary_log_density(X - eps, 1.3, cc)) / (2 * eps)
        assert drift(X, 1.3, cc) == pytest.approx(nu * score, rel=1e-8)


def test_log_density_variance(c):
    # exp(ln rho) of a real component is Gaussian with variance kappa/omega
    w = 2.5
    assert stationary_log_density(1.0, w, c) == pytest.approx(-0.5 / (c.kappa / w))


def test_stochastic_kernel_values(c):
    assert stochastic_mode_covariance(1.0, 0.0, c) == 1.0
    assert stochastic_mode_covariance(1.0, 1.0, c) == pytest.approx(math.exp(-1))
    assert stochastic_mode_covariance(2.0, 0.5, c.with_nu(2.0)) == pytest.approx(0.5 * math.exp(-2))


def test_quantum_kernel_values(c):
    assert quantum_mode_propagator(1.0, 0.0, c) == 1.0
    assert quantum_mode_propagator(1.0, math.pi / 2, c) == pytest.approx(-1j, abs=1e-15)


@given(omegas, taus, nus)
def test_schwinger_identity(w, tau, nu):
    c = natural_units(nu=nu)
    assert schwinger_check(w, tau, c) <= 1e-12 * c.kappa / w


def test_schwinger_domain(c):
    with pytest.raises(DomainError):
        schwinger_check(1.0, 1.0, c.with_nu(0.0))
    with pytest.raises(DomainError):
        schwinger_check(1.0, -1.0, c)


@pytest.mark.parametrize("w", [0.0, -1.0, np.nan])
def test_bad_omega(c, w):
    with pytest.raises(DomainError):
        stochastic_mode_covariance(w, 0.0, c)


def test_lattice_covariance_matches_field_map(c):
    # covariance of the linear map applied to independent components
    g = enumerate_modes(2 * np.pi, 1)
    x0, dx = np.array([0.3, 0.1, -0.2]), np.array([0.4, -0.7, 1.1])
    tau = 0.6
    A0, B0 = field_map(g, x0)
    A1, B1 = field_map(g, x0 + dx)
    kern = stochastic_mode_covariance(g.mode_omega, tau, c)
    oracle = (np.einsum("mij,mkl,m->ijkl", A0[0], A1[0], kern)
              + np.einsum("mij,mkl,m->ijkl", B0[0], B1[0], kern))
    np.testing.assert_allclose(field_covariance(dx, tau, g, c), oracle, atol=1e-14)


def test_single_mode_equal_time_covariance(c):
    g = single_mode_grid(2 * np.pi)
    cov = field_covariance(np.zeros(3), 0.0, g, c)
    # k and -k each contribute delta kappa / (omega L^3)
    expected = 2 * polarization_sum_closed_form(g.k[0]) / (2 * np.pi) ** 3
    np.testing.assert_allclose(cov, expected, atol=1e-15)


def test_continuum_trace_oracle(c):
    src = Continuum(cutoff_length=0.05)
    for dx, tau in [(np.zeros(3), 0.0), (np.array([0.3, 0.0, 0.0]), 0.2), (np.array([1.0, 2.0, -0.5]), 0.0)]:
        cov = field_covariance(dx, tau, src, c)
        b = src.cutoff_length + tau
        D = np.linalg.norm(dx)
        assert np.einsum("ijij->", cov) == pytest.approx(c.kappa / (np.pi ** 2 * (b * b + D * D)), rel=1e-10)


def test_continuum_is_regulated_lattice_limit(c):
    a, tau, dx = 2.0, 0.3, np.array([1.0, 0.0, 0.5])
    cont = field_covariance(dx, tau, Continuum(cutoff_length=a), c)
    errs = []
    for L, n in [(20.0, 24), (30.0, 36)]:
        g = enumerate_modes(L, n)
        w = g.omega
        weight = 2 * np.cos(g.k @ dx) * np.exp(-w * (a + tau)) * c.kappa / w / L ** 3
        lat = np.einsum("r,rijkl->ijkl", weight, polarization_sum_closed_form(g.k))
        errs.append(np.max(np.abs(lat - cont)) / np.max(np.abs(cont)))
    # finite-box error shrinks with the box
    assert errs[1] < 0.06 and errs[1] < 0.6 * errs[0]


def test_unknown_source(c):
    with pytest.raises(TypeError):
        field_covariance(np.zeros(3), 0.0, object(), c)


def test_mode_energy(c):
    assert mode_energy(3.0, c) == pytest.approx(1.5)
    c2 = PhysicalConstants(hbar=2.0, G=0.1)
    assert mode_energy(3.0, c2) == pytest.approx(3.0)


def test_lattice_vacuum_energy_n1(c):
    g = enumerate_modes(2 * np.pi, 1)
    w = np.linalg.norm(np.array([(a, b, d) for a in (-1, 0, 1) for b in (-1, 0, 1) for d in (-1, 0, 1)
                                 if (a, b, d) != (0, 0, 0)]), axis=1)
    # 26 wavevectors, two polarizations each
    assert lattice_vacuum_energy(g, c) == pytest.approx(np.sum(2 * 0.5 * w))
