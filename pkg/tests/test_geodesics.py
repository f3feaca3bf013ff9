import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from oracles import rk4
from qcarnot.algebra import AnisotropyParams, GroupPoint, group_mul, theta_matrix
from qcarnot.curves import (
    SampledCurve, counterexample_curve, derivative, extrapolated_length, horizontality_residual,
    polygon_length, read_curve_csv, second_derivative, straight_line, write_curve_csv,
)
from qcarnot.geodesics import (
    FD_TOL, GeodesicIVP, battery_samples, cubic_ratio, endpoint, exp_2sM, exp_map, fit_theta,
    geodesic_curve, hamiltonian_rhs, integrate_bicharacteristic, residual_battery, sinc,
    versine_ratio,
)

P2 = AnisotropyParams(np.array([[1.0, 0.6], [1.4, 0.9], [0.7, 1.2]]))


def test_zero_theta_is_straight_line():
    iv = GeodesicIVP([1.0, -2.0, 0.5, 0.0, 0.3, 0.0, 0.0, 1.0], np.zeros(3))
    s = np.linspace(0, 1, 11)
    x, z, xdot = exp_map(iv, s, P2)
    assert np.allclose(x, s[:, None] * iv.v0, atol=1e-15)
    assert np.all(z == 0)
    assert np.allclose(xdot, iv.v0)


def test_series_branches_are_continuous():
    u = np.array([1e-9, 1e-5, 1e-3, 1e-2, 0.1, 1.0])
    for f, exact in ((sinc, lambda t: np.sin(t) / t),
                     (versine_ratio, lambda t: (1 - np.cos(t)) / t**2),
                     (cubic_ratio, lambda t: (t - np.sin(t)) / t**3)):
        got = f(u)
        ref = exact(u[-3:])
        assert np.allclose(got[-3:], ref, rtol=1e-9)
    assert cubic_ratio(np.array([1e-9]))[0] == pytest.approx(1 / 6)
    assert versine_ratio(np.array([1e-9]))[0] == pytest.approx(1 / 2)


@given(arrays(float, 3, elements=st.floats(-3, 3)), st.floats(-1, 1), st.floats(-1, 1))
def test_exp_one_parameter_group(theta, s, t):
    a, b = exp_2sM(s, theta, P2), exp_2sM(t, theta, P2)
    assert np.allclose(exp_2sM(s + t, theta, P2), np.einsum("lij,ljk->lik", a, b), atol=1e-12)
    # orthogonal, since M(theta) is skew
    assert np.allclose(np.einsum("lji,ljk->lik", a, a), np.eye(4), atol=1e-12)


def test_exp_map_solves_geodesic_equations_against_rk4():
    iv = GeodesicIVP([0.4, -1.1, 0.3, 0.8, -0.2, 0.5, 1.0, 0.1], [0.9, -1.7, 2.2])
    xs, zs, _ = rk4(lambda x, z, xi: hamiltonian_rhs(x, xi, iv.theta, P2),
                    (np.zeros(8), np.zeros(3), 0.5 * iv.v0), 4000, every=400)
    x, z, _ = exp_map(iv, np.linspace(0, 1, 11), P2)
    assert np.abs(xs - x).max() < 1e-10
    assert np.abs(zs - z).max() < 1e-10


def test_library_rk4_agrees():
    iv = GeodesicIVP([0.4, -1.1, 0.3, 0.8, -0.2, 0.5, 1.0, 0.1], [0.9, -1.7, 2.2])
    bc = integrate_bicharacteristic(iv, P2, steps=2000)
    x, z, _ = exp_map(iv, bc.s, P2)
    assert np.abs(bc.x - x).max() < 1e-9 and np.abs(bc.z - z).max() < 1e-9


def test_left_translation_of_geodesic_is_geodesic():
    # x(s) of a translated geodesic satisfies the same ODE, and the endpoint translates
    iv = GeodesicIVP([1.0, 0.2, -0.4, 0.0, 0.3, 0.3, 0.0, -0.7], [0.5, 0.1, -0.8])
    q = GroupPoint(np.linspace(-0.5, 0.5, 8), [0.1, 0.2, 0.3])
    c = geodesic_curve(iv, P2, 2001)
    moved = [group_mul(q, pt, P2) for pt in c.points]
    cm = SampledCurve(c.s, np.array([m.x for m in moved]), np.array([m.z for m in moved]))
    assert np.abs(horizontality_residual(cm, P2)).max() < FD_TOL
    end = group_mul(q, endpoint(iv, P2), P2)
    assert np.allclose(cm.z[-1], end.z)


def test_residual_battery_passes_for_fast_geodesic():
    iv = GeodesicIVP([1.0, 0.5, 0.0, 0.2, 0.0, 0.0, 0.7, 0.0], [4.0, -3.0, 2.0])
    rep = residual_battery(iv, P2)
    assert rep.ok and rep.samples >= 1001
    assert rep.samples == battery_samples(iv, P2)


def test_counterexample_is_horizontal_but_not_geodesic():
    c = counterexample_curve(np.linspace(0, 1, 1001), P2, 0.3, -0.2)
    assert np.abs(horizontality_residual(c, P2)).max() < FD_TOL
    assert fit_theta(c, P2)[1] > 0.1


def test_fit_theta_recovers_multipliers():
    theta = np.array([0.3, -0.6, 0.9])
    c = geodesic_curve(GeodesicIVP([1.0, 0, 0.5, 0, 0, 0.4, 0, 0.2], theta), P2, 4001)
    got, resid = fit_theta(c, P2)
    assert np.allclose(got, theta, atol=1e-5) and resid < 1e-5


def test_long_double_sampling():
    iv = GeodesicIVP([1.0, 0, 0, 0, 0, 1.0, 0, 0], [1.0, 2.0, 0.5])
    s = np.arange(5, dtype=np.longdouble) / 4
    x, z, _ = exp_map(iv, s, P2, dtype=np.longdouble)
    assert x.dtype == np.longdouble
    x64, z64, _ = exp_map(iv, s.astype(float), P2)
    assert np.allclose(x.astype(float), x64, atol=1e-14)


# ------------------------------------------------------------------ curves

def test_fd_stencils_exact_on_polynomials():
    s = np.linspace(0, 1, 41)
    h = s[1] - s[0]
    for k in range(3):
        assert np.allclose(derivative(s**k, h), k * s ** max(k - 1, 0), atol=1e-10)
    # cubic: the interior error is exactly h^2 (f''' / 6), the fourth-order ends are exact
    d = derivative(s**3, h) - 3 * s**2
    assert np.allclose(d[1:-1], h**2, atol=1e-12) and np.allclose(d[[0, -1]], 0, atol=1e-10)
    assert np.allclose(second_derivative(s**3, h), 6 * s, atol=1e-9)


def test_polygon_and_extrapolated_length():
    t = np.linspace(0, np.pi / 2, 201)
    arc = np.column_stack([np.cos(t), np.sin(t)])
    assert polygon_length(arc) < np.pi / 2
    assert abs(extrapolated_length(arc) - np.pi / 2) < 1e-9


def test_curve_csv_round_trip(tmp_path):
    c = geodesic_curve(GeodesicIVP([1.0, 0.1, 0.2, 0.3, 0, 0, 0, 0.5], [0.2, 0.4, -0.3]), P2, 101)
    write_curve_csv(tmp_path / "c.csv", c)
    back = read_curve_csv(tmp_path / "c.csv")
    assert np.array_equal(back.x, c.x) and np.array_equal(back.z, c.z) and np.array_equal(back.s, c.s)


def test_straight_line_helper():
    c = straight_line(np.array([1.0, 2.0, 0.0, 0.0]))
    assert np.allclose(c.x[-1], [1, 2, 0, 0]) and np.all(c.z == 0)


def test_theta_matrix_shape():
    assert theta_matrix([1.0, 2.0, 3.0], P2).shape == (2, 4, 4)
