import math

import numpy as np
import pytest

from gravistoch.exceptions import DomainError
from gravistoch.linear_field import (
    METRIC,
    GridField,
    PointMass,
    SourceField,
    boosted_point_mass_field,
    deposit_point_mass,
    einstein_lhs,
    gauge_transform,
    interior_max,
    lorentz_residual,
    retarded_solution,
    sample_field,
    trace_reverse,
)
from gravistoch.polarization import basis_for


def const_field(value, n=5, h=0.1):
    v = np.broadcast_to(np.asarray(value, dtype=float), (n, n, n, n, 4, 4)).copy()
    return GridField(v, (h, h))


def random_field(seed=0, n=5):
    a = np.random.default_rng(seed).normal(size=(n, n, n, n, 4, 4))
    return GridField(a + np.swapaxes(a, -1, -2), (0.1, 0.2))


def test_trace_reverse_of_metric():
    h = const_field(METRIC, n=3)
    hb = trace_reverse(h, "to_bar")
    # trace of n is 4, so hbar = n - 2 n = -n
    np.testing.assert_array_equal(hb.values[0, 0, 0, 0], -METRIC)
    np.testing.assert_array_equal(trace_reverse(hb, "from_bar").values, h.values)


def test_trace_reverse_traceless_and_round_trip():
    eps = np.zeros((4, 4))
    eps[1:, 1:] = basis_for([1.0, 2.0, 3.0])[0].components
    h = const_field(eps, n=3)
    np.testing.assert_allclose(trace_reverse(h).values, h.values, atol=1e-16)
    f = random_field()
    back = trace_reverse(trace_reverse(f, "to_bar"), "from_bar")
    assert np.max(np.abs(back.values - f.values)) < 1e-14
    with pytest.raises(DomainError):
        trace_reverse(f, "sideways")


def test_grid_field_validation():
    with pytest.raises(DomainError):
        GridField(np.zeros((2, 2, 2, 4, 4)), (1, 1))
    a = np.zeros((2, 2, 2, 2, 4, 4))
    a[..., 0, 1] = 1.0
    with pytest.raises(DomainError):
        GridField(a, (1, 1))
    with pytest.raises(DomainError):
        GridField(np.zeros((2, 2, 2, 2, 4, 4)), (0, 1))


def test_gauge_transform_examples():
    h = random_field(1)
    n = h.shape[0]
    interior = (slice(1, -1),) * 4
    np.testing.assert_array_equal(gauge_transform(h, np.zeros(h.shape + (4,))).values[interior], h.values[interior])
    C = np.broadcast_to([1.0, 2.0, -3.0, 0.5], h.shape + (4,))
    np.testing.assert_allclose(gauge_transform(h, C).values[interior], h.values[interior], atol=1e-15)
    # C_0 = a x^1
    a = 0.7
    x1 = np.arange(n)[None, :, None, None] * h.spacing[1] * np.ones(h.shape)
    C = np.zeros(h.shape + (4,))
    C[..., 0] = a * x1
    d = gauge_transform(h, C).values[interior] - h.values[interior]
    expected = np.zeros((4, 4))
    expected[0, 1] = expected[1, 0] = -a
    np.testing.assert_allclose(d, np.broadcast_to(expected, d.shape), atol=1e-13)
    assert np.all(np.isnan(gauge_transform(h, C).values[0]))
    with pytest.raises(DomainError):
        gauge_transform(h, np.zeros((2, 2, 2, 2, 4)))


def test_lorentz_residual_examples():
    assert lorentz_residual(const_field(np.eye(4))).max_norm == 0.0
    a = 0.3
    hb = sample_field(lambda t, x, y, z: np.einsum("...,ij->...ij", a * t, np.diag([1.0, 0, 0, 0])),
                      (5, 5, 5, 5), (0.1, 0.1))
    r = lorentz_residual(hb)
    np.testing.assert_allclose(r.values[1:-1, 1:-1, 1:-1, 1:-1, 0], -a, atol=1e-13)
    with pytest.raises(DomainError):
        lorentz_residual(const_field(np.eye(4), n=2))


def plane_wave(k, amp=1.0):
    k = np.asarray(k, dtype=float)
    w = np.linalg.norm(k)
    eps = np.zeros((4, 4))
    eps[1:, 1:] = basis_for(k)[0].components

    def fn(t, x, y, z):
        phase = np.cos(w * t - k[0] * x - k[1] * y - k[2] * z)
        return amp * np.einsum("...,ij->...ij", phase, eps)

    return fn


def refine(fn, sizes, span=1.0, metric=None):
    out = []
    for n in sizes:
        h = span / (n - 1)
        f = sample_field(fn, (n,) * 4, (h, h))
        out.append((h, metric(f)))
    return out


def test_lorentz_residual_of_plane_wave_converges():
    fn = plane_wave([1.0, 2.0, 0.5])

    def probe(f):
        # residual at the node nearest the centre
        r = lorentz_residual(f).values
        m = f.shape[0] // 2
        return np.max(np.abs(r[m, m, m, m]))

    (_, e1), (_, e2) = refine(fn, (9, 17), metric=probe)
    assert 3.5 < e1 / e2 < 4.5


def test_einstein_lhs_of_vacuum_plane_wave_converges():
    fn = plane_wave([0.5, -1.5, 1.0])

    def probe(f):
        m = f.shape[0] // 2
        return np.max(np.abs(einstein_lhs(f)[m, m, m, m]))

    (_, e1), (_, e2) = refine(fn, (9, 17), metric=probe)
    assert 3.5 < e1 / e2 < 4.5
    assert interior_max(einstein_lhs(const_field(np.eye(4)))) == 0.0
    with pytest.raises(DomainError):
        einstein_lhs(const_field(np.eye(4), n=4))


def smooth_hbar(t, x, y, z):
    out = np.zeros(t.shape + (4, 4))
    a = np.sin(1.1 * t + 0.7 * x) * np.cos(0.9 * y - 0.4 * z)
    b = np.cos(0.8 * t - 0.5 * y + 0.3 * x * z)
    for m in range(4):
        for n in range(m, 4):
            out[..., m, n] = out[..., n, m] = (m + 1) * a + (n + 0.5) * b * (m != n)
    return out


def smooth_gauge(t, x, y, z):
    return np.stack([np.sin(x + 0.3 * t), np.cos(y * z), np.sin(t * y), np.cos(0.7 * x - z + t)], -1)


def gauge_defect(n_coarse, refinement):
    """Max |LHS(hbar) - LHS(hbar')| over a fixed set of physical points."""
    n = (n_coarse - 1) * refinement + 1
    h = 1.0 / (n - 1)
    hb = sample_field(smooth_hbar, (n,) * 4, (h, h))
    mesh = np.meshgrid(*[h * np.arange(n)] * 4, indexing="ij")
    gauged = trace_reverse(gauge_transform(trace_reverse(hb, "from_bar"), smooth_gauge(*mesh)), "to_bar")
    d = einstein_lhs(hb) - einstein_lhs(gauged)
    sl = slice(3 * refinement, (n_coarse - 4) * refinement + 1, refinement)
    return interior_max(d[sl, sl, sl, sl])


def test_gauge_invariance_richardson():
    ratio = gauge_defect(11, 1) / gauge_defect(11, 2)
    assert 3.5 <= ratio <= 4.5


def test_static_point_mass():
    from gravistoch.constants import natural_units

    c = natural_units()
    pm = PointMass(2.0, (1.0, 0.0, 0.0))
    h = retarded_solution(pm, np.array([1.0, 3.0, 4.0]), 7.0, c)
    assert h[0, 0] == pytest.approx(4 * c.G * 2.0 / 5.0, rel=1e-15)
    assert np.count_nonzero(h) == 1
    with pytest.raises(DomainError):
        retarded_solution(pm, np.array([1.0, 0.0, 0.0]), 0.0, c, exclusion_radius=0.1)


def test_moving_point_mass_matches_boosted_field():
    from gravistoch.constants import natural_units

    c = natural_units()
    rng = np.random.default_rng(5)
    for _ in range(20):
        v = rng.uniform(-0.5, 0.5, 3)
        pm = PointMass(1.3, tuple(rng.normal(size=3)), tuple(v))
        x, t = rng.normal(size=3) * 4, rng.normal()
        np.testing.assert_allclose(retarded_solution(pm, x, t, c), boosted_point_mass_field(pm, x, t, c),
                                   rtol=1e-12, atol=1e-15)
    with pytest.raises(DomainError):
        PointMass(1.0, velocity=(1.0, 0, 0))


def test_superposition():
    from gravistoch.constants import natural_units

    c = natural_units()
    a, b = PointMass(1.0, (0, 0, 0)), PointMass(1.0, (1.0, 0, 0), (0.2, 0, 0))
    x = np.array([3.0, 2.0, 1.0])
    np.testing.assert_allclose(retarded_solution([a, b], x, 0.0, c),
                               retarded_solution(a, x, 0.0, c) + retarded_solution(b, x, 0.0, c), rtol=1e-15)


def test_zero_source():
    from gravistoch.constants import natural_units

    T = SourceField(np.zeros((1, 3, 3, 3, 4, 4)), (1.0, 0.1))
    assert np.all(retarded_solution(T, np.array([5.0, 0, 0]), 0.0, natural_units()) == 0)


def test_cic_point_mass_within_one_percent():
    from gravistoch.constants import natural_units

    c = natural_units()
    dx = 0.1
    pos = np.array([0.03, -0.02, 0.011])
    T = deposit_point_mass(1.0, pos, 21, dx, origin=(-1.0, -1.0, -1.0))
    for r_cells in (5, 7, 10, 20):
        direction = np.array([1.0, 0.4, -0.3]) / np.linalg.norm([1.0, 0.4, -0.3])
        x = pos + r_cells * dx * direction
        h = retarded_solution(T, x, 0.0, c)
        assert h[0, 0] == pytest.approx(4 * c.G / (r_cells * dx), rel=0.01)
    with pytest.raises(DomainError):
        retarded_solution(T, pos, 0.0, c)


def test_time_dependent_source_interpolates_retarded_time():
    from gravistoch.constants import natural_units

    c = natural_units()
    # one active cell whose density grows linearly in time
    nt, dt = 11, 1.0
    vals = np.zeros((nt, 3, 3, 3, 4, 4))
    vals[:, 1, 1, 1, 0, 0] = 1.0 + 0.5 * np.arange(nt)
    T = SourceField(vals, (dt, 0.1), (0.0, -0.1, -0.1, -0.1))
    x = np.array([3.0, 0.0, 4.0])  # R = 5
    h = retarded_solution(T, x, 7.25, c)
    expected = 4 * c.G * 0.1 ** 3 * (1.0 + 0.5 * 2.25) / 5.0
    assert h[0, 0] == pytest.approx(expected, rel=1e-13)
    assert np.array_equal(h, retarded_solution(T, x, 7.25, c))
    with pytest.raises(DomainError):
        retarded_solution(T, x, 2.0, c)


def test_static_source_is_time_independent():
    from gravistoch.constants import natural_units

    c = natural_units()
    T = deposit_point_mass(1.0, (0.0, 0.0, 0.0), 5, 0.1, origin=(-0.2, -0.2, -0.2))
    x = np.array([1.0, 0.5, 0.0])
    assert np.array_equal(retarded_solution(T, x, 0.0, c), retarded_solution(T, x, 123.0, c))


def test_moving_mass_field_satisfies_lorentz_gauge_at_second_order():
    from gravistoch.constants import natural_units

    c = natural_units()
    pm = PointMass(1.0, (-3.0, -3.0, -3.0), (0.3, 0.1, 0.0))

    def fn(t, x, y, z):
        pts = np.stack([x, y, z], -1)
        out = np.empty(t.shape + (4, 4))
        for idx in np.ndindex(t.shape):
            out[idx] = boosted_point_mass_field(pm, pts[idx], t[idx], c)
        return out

    def probe(f):
        m = f.shape[0] // 2
        return np.max(np.abs(lorentz_residual(f).values[m, m, m, m]))

    (_, e1), (_, e2) = refine(fn, (5, 9), span=1.0, metric=probe)
    assert 3.5 < e1 / e2 < 4.5
