import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from oracles import green_radial, heat_radial
from qcarnot import kernels as K
from qcarnot.algebra import AnisotropyParams, GroupPoint, sublaplacian_apply
from qcarnot.connectivity import connect_full

P1 = AnisotropyParams(np.array([[1.0], [1.2], [0.9]]))
P2 = AnisotropyParams(np.array([[1.0, 0.7], [1.3, 1.1], [0.8, 0.9]]))

X_A = np.array([0.6, 0.2, -0.3, 0.1])
Z_A = np.array([0.3, -0.5, 0.4])
X_B = np.array([0.1, 0.9, 0.2, 0.0])
Z_B = np.array([0.05, 0.1, -0.2])

# radial-reduction oracle (tests/oracles.py) at these points, frozen
GREEN_A = -111393.69407823335
GREEN_B = -2294367.3803914813
HEAT_A = {0.5: 147.51129531038433, 1.0: 17.56903019314679}
HEAT_B = {0.5: 373.6828630759923, 1.0: 21.35944200576933}

small = st.floats(-1.5, 1.5)


def test_frozen_oracle_values_reproduce():
    assert green_radial(X_A, Z_A, P1.a) == pytest.approx(GREEN_A, rel=1e-10)
    assert heat_radial(X_B, Z_B, 0.5, P1.a) == pytest.approx(HEAT_B[0.5], rel=1e-10)


@pytest.mark.parametrize("x, z, ref", [(X_A, Z_A, GREEN_A), (X_B, Z_B, GREEN_B)])
def test_green_matches_radial_oracle(x, z, ref):
    e0 = K.epsilon0(P1)
    for eps in (0.0, e0 / 2, e0 / 4):
        assert K.green_function(x, z, P1, eps=eps).value == pytest.approx(ref, rel=1e-9)


@pytest.mark.parametrize("x, z, ref", [(X_A, Z_A, HEAT_A), (X_B, Z_B, HEAT_B)])
def test_heat_matches_radial_oracle(x, z, ref):
    for t, val in ref.items():
        assert K.heat_kernel(x, z, t, P1).value == pytest.approx(val, rel=1e-9)


def test_constants():
    assert K.epsilon0(P2) == pytest.approx(np.pi / (4 * 1.3**2))
    assert K.green_constant(1) == pytest.approx(4 * (2 * np.pi) ** 5 / 6)
    assert K.green_constant(2) == pytest.approx(16 * (2 * np.pi) ** 7 / 120)


@given(arrays(float, 8, elements=small), arrays(float, 3, elements=small),
       arrays(float, 3, elements=st.floats(-2, 2)))
def test_hamilton_jacobi(x, z, tau):
    assert K.hj_residual(x, z, tau, P2) < 1e-10


@given(arrays(float, 3, elements=st.floats(-3, 3)), arrays(float, 8, elements=small))
def test_transport(tau, x):
    assert K.transport_residual(tau, x, P2) < 1e-10


def test_action_derivatives_against_differences():
    x = np.linspace(-0.8, 0.9, 8)
    z = np.array([0.3, -0.2, 0.1])
    w = np.array([0.4, -0.7, 0.5])
    h = 1e-6
    grad = K.action_tau_gradient(x, z, w, P2)
    hess = K.action_tau_hessian(x, w, P2)
    for m in range(3):
        e = np.eye(3)[m] * h
        fd = (K.complex_action(x, z, w + e, P2) - K.complex_action(x, z, w - e, P2)) / (2 * h)
        assert fd == pytest.approx(grad[m], rel=1e-7)
        fd2 = (K.action_tau_gradient(x, z, w + e, P2) - K.action_tau_gradient(x, z, w - e, P2)) / (2 * h)
        assert np.allclose(fd2, hess[:, m], rtol=1e-6)
        dv = (K.volume_element(w + e, P2) - K.volume_element(w - e, P2)) / (2 * h)
        assert dv == pytest.approx(K.volume_tau_gradient(w, P2)[m], rel=1e-7)


def test_action_sublaplacian_against_stencil():
    w = np.array([0.4, -0.7, 0.5])
    z = np.array([0.3, -0.2, 0.1])
    q = GroupPoint(np.linspace(-0.8, 0.9, 8), z)

    def f(v):
        return K.complex_action(v[:8], v[8:], w, P2).real

    assert sublaplacian_apply(f, q, P2, 1e-3) == pytest.approx(
        float(np.real(K.action_sublaplacian(w, P2))), rel=1e-7)


def test_small_argument_kernels_continuous():
    w = np.array([1e-5, 0, 0])
    v = K.volume_element(w, P2)
    assert v == pytest.approx(1.0, abs=1e-9)
    x = np.ones(8)
    assert K.gamma_part(x, w, P2) == pytest.approx(np.sum(x**2) / 4, rel=1e-9)


def test_critical_point_is_quarter_length_squared():
    x = np.array([0.7, -0.3, 0.2, 0.5, 0.1, 0.4, -0.6, 0.2])
    z = np.array([0.15, -0.1, 0.2])
    sol = connect_full(x, z, (0, 0), P2)[0]
    tau, f = K.critical_point(x, z, P2, 1j * sol.theta * 1.001)
    assert np.allclose(tau, 1j * sol.theta, atol=1e-9)
    assert f.real == pytest.approx(sol.length**2 / 4, rel=1e-10) and abs(f.imag) < 1e-10


def test_green_homogeneity_and_symmetry():
    g = K.green_function(X_A, Z_A, P1).value
    assert K.green_function(1.3 * X_A, 1.69 * Z_A, P1).value * 1.3**8 == pytest.approx(g, rel=1e-8)
    assert K.green_function(X_A, -Z_A, P1).value == pytest.approx(g, rel=1e-9)


def test_green_batched_equals_single():
    xs = np.stack([X_A, X_B])
    zs = np.stack([Z_A, Z_B])
    vals = K.green_function(xs, zs, P1)
    assert [v.value for v in vals] == pytest.approx([GREEN_A, GREEN_B], rel=1e-9)


def test_green_n2_harmonic():
    x = np.array([0.5, 0.1, -0.2, 0.3, 0.2, -0.4, 0.1, 0.3])
    z = np.array([0.3, -0.2, 0.25])
    q = GroupPoint(x, z)

    def kern(xs, zs):
        return [v.value for v in K.green_function(xs, zs, P2, anchor=(x, z), check_tail=False)]

    g = K.green_function(x, z, P2).value
    assert abs(K.kernel_sublaplacian(kern, q, P2, 2e-2, 4)) / abs(g) < 1e-3


def test_heat_residual_small():
    res, val = K.heat_residual(X_A, Z_A, 0.5, P1, 1e-2, order=4)
    assert val == pytest.approx(HEAT_A[0.5], rel=1e-9)
    assert abs(res) < 1e-4


def test_tail_check_raises():
    coarse = K.QuadratureSpec(T=4.0, nodes=32, rule="spherical")
    with pytest.raises(ArithmeticError):
        K.heat_kernel(np.zeros(4), Z_A, 0.5, P1, quad=coarse)
    assert K.tail_bound(4.0, P1) > K.tail_bound(8.0, P1) > K.tail_bound(16.0, P1)


def test_green_rejects_bad_input():
    with pytest.raises(ValueError):
        K.green_function(np.zeros(4), np.zeros(3), P1)
    with pytest.raises(ValueError):
        K.green_function(np.zeros(4), Z_A, P1, eps=0.0)
    with pytest.raises(ValueError):
        K.green_function(X_A, Z_A, P1, eps=K.epsilon0(P1))
    with pytest.raises(ValueError):
        K.heat_kernel(X_A, Z_A, 0.0, P1)


def test_green_at_x_zero_uses_shift():
    # on the z-axis only the shifted contour is usable; homogeneity still holds
    z = np.array([0.0, 0.6, 0.8])
    g1 = K.green_function(np.zeros(4), z, P1).value
    g2 = K.green_function(np.zeros(4), 1.3**2 * z, P1).value
    assert g2 * 1.3**8 == pytest.approx(g1, rel=1e-8)
    e0 = K.epsilon0(P1)
    g3 = K.green_function(np.zeros(4), z, P1, eps=0.9 * e0).value
    assert g3 == pytest.approx(g1, rel=1e-10)


def test_quadrature_spec_round_trip_and_validation():
    q = K.QuadratureSpec(T=10.0, nodes=40, rule="spherical")
    assert K.QuadratureSpec.from_dict(q.to_dict()) == q
    assert q.refined(2).nodes == 80
    with pytest.raises(ValueError):
        K.QuadratureSpec(rule="monte-carlo")
    with pytest.raises(ValueError):
        K.QuadratureSpec(T=-1.0)


def test_tensor_rule_still_available():
    q = K.QuadratureSpec(T=12.0, nodes=64, rule="tensor")
    v = K.heat_kernel(X_A, Z_A, 1.0, P1, quad=q, check_tail=False).value
    assert v == pytest.approx(HEAT_A[1.0], rel=1e-4)


@pytest.mark.parametrize("n", [1, 2])
def test_time_integral_identity(n):
    for f in (0.5, 2.0):
        num, exact = K.time_integral_check(f, n)
        assert exact == pytest.approx(math.gamma(2 * n + 2) / f ** (2 * n + 2))
        assert num == pytest.approx(exact, rel=1e-9)


def test_estimate_probes():
    g = np.random.default_rng(3)
    e = K.epsilon0(P2) / 2
    for _ in range(200):
        x = g.normal(size=8)
        tau = g.normal(size=3) * 4
        flat = K.estimate_probe(x, np.zeros(3), tau, e, P2)
        assert flat.re_gamma >= x @ x / 4 and flat.im_gamma == 0
        real = K.estimate_probe(x, g.normal(size=3), tau, 0.0, P2)
        assert real.re_gamma >= x @ x / 4 and real.ok
    x = g.normal(size=(500, 8))
    z = g.normal(size=(500, 3))
    tau = g.normal(size=(500, 3)) * 5
    c1, c2 = K.fit_estimate_constants(x, z, tau, e, P2)
    assert c1 > 0 and 0 < c2 < 0.25
    assert all(K.estimate_probe(x[i], z[i], tau[i], e, P2, c1, c2).ok for i in range(500))
