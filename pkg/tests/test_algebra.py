import json

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from qcarnot.algebra import (
    QUAT_MATRICES, AnisotropyParams, GroupPoint, Quaternion, a_norm_sq, block_dense,
    block_matrix, dilate, dual_form, frame, group_inv, group_mul, homogeneous_norm, quat_mul,
    structure_constants, sublaplacian_apply, sublaplacian_coordinates, theta_matrix, theta_norms,
)

coord = st.floats(-3, 3, allow_nan=False)
positive = st.floats(0.3, 2.0)


@st.composite
def params(draw, n=None):
    n = draw(st.integers(1, 3)) if n is None else n
    return AnisotropyParams(draw(arrays(float, (3, n), elements=positive)))


@st.composite
def points(draw, n):
    return GroupPoint(draw(arrays(float, 4 * n, elements=coord)), draw(arrays(float, 3, elements=coord)))


@st.composite
def params_and_points(draw, count=3):
    p = draw(params())
    return p, [draw(points(p.n)) for _ in range(count)]


def close(q1, q2, tol=1e-12):
    return np.allclose(q1.as_vector(), q2.as_vector(), atol=tol, rtol=tol)


@given(params_and_points())
def test_group_law_associative(pp):
    p, (a, b, c) = pp
    assert close(group_mul(group_mul(a, b, p), c, p), group_mul(a, group_mul(b, c, p), p), 1e-11)


@given(params_and_points(1))
def test_identity_and_inverse(pp):
    p, (a,) = pp
    e = GroupPoint.identity(p.n)
    assert close(group_mul(a, e, p), a)
    assert close(group_mul(a, group_inv(a), p), e)
    assert close(group_mul(group_inv(a), a, p), e)


@given(params_and_points(2), st.floats(0.1, 5))
def test_dilation_is_automorphism(pp, lam):
    p, (a, b) = pp
    lhs = dilate(lam, group_mul(a, b, p))
    rhs = group_mul(dilate(lam, a), dilate(lam, b), p)
    assert close(lhs, rhs, 1e-10)
    assert homogeneous_norm(dilate(lam, a)) == pytest.approx(lam * homogeneous_norm(a), rel=1e-12)


@given(params_and_points(1))
def test_frame_is_horizontal(pp):
    p, (q,) = pp
    for row in frame(q, p)[:4 * p.n]:
        for m in range(3):
            assert abs(dual_form(m, q, row, p)) < 1e-12


@given(params(), arrays(float, 3, elements=coord))
def test_theta_matrix_squares_to_minus_norms(p, theta):
    mats = theta_matrix(theta, p)
    norms = theta_norms(theta, p)
    for l in range(p.n):
        assert np.allclose(mats[l] @ mats[l], -norms[l] ** 2 * np.eye(4), atol=1e-12)
        assert np.allclose(mats[l].T, -mats[l])


def test_quaternion_matrices_match_quaternion_units():
    # M_m squares to -1 and the three anticommute, like i, j, k
    i, j, k = Quaternion(0, 1), Quaternion(0, 0, 1), Quaternion(0, 0, 0, 1)
    assert quat_mul(i, j).as_array() == pytest.approx(k.as_array())
    assert quat_mul(j, i).as_array() == pytest.approx((-1.0 * k.as_array()))
    for a in range(3):
        for b in range(3):
            if a != b:
                assert np.array_equal(QUAT_MATRICES[a] @ QUAT_MATRICES[b],
                                      -QUAT_MATRICES[b] @ QUAT_MATRICES[a])


def test_structure_constants_bracket():
    # [X_i, X_j] computed from the frame coefficients by finite differences
    p = AnisotropyParams(np.array([[1.0, 0.7], [1.3, 1.1], [0.8, 0.9]]))
    q = GroupPoint(np.linspace(-1, 1, 8), [0.2, -0.1, 0.4])
    n4 = 4 * p.n
    h = 1e-6
    c = structure_constants(p)
    fr = frame(q, p)
    for i, j in ((0, 1), (0, 5), (2, 3), (6, 7)):
        dj = (frame(GroupPoint(q.x + h * fr[i, :n4], q.z), p)[j] - fr[j]) / h
        di = (frame(GroupPoint(q.x + h * fr[j, :n4], q.z), p)[i] - fr[i]) / h
        assert np.allclose((dj - di)[n4:], c[i, j], atol=1e-6)


def test_a_norm_against_blocks():
    p = AnisotropyParams(np.array([[1.0, 2.0], [0.5, 1.0], [3.0, 0.25]]))
    x = np.arange(8.0)
    expected = [sum(p.a[m, l] ** 2 * np.sum(x[4 * l:4 * l + 4] ** 2) for l in range(2)) for m in range(3)]
    assert a_norm_sq(x, p) == pytest.approx(expected)
    for m in range(3):
        assert np.allclose(block_dense(block_matrix(m, p)) @ block_dense(block_matrix(m, p)),
                           -np.diag(np.repeat(p.a[m] ** 2, 4)))


def test_sublaplacian_stencil_matches_coordinate_form():
    p = AnisotropyParams(np.array([[1.0, 0.7], [1.3, 1.1], [0.8, 0.9]]))
    q = GroupPoint([0.3, -0.2, 0.5, 0.1, 0.0, 0.4, -0.3, 0.2], [0.2, -0.1, 0.3])

    def g(v):
        return np.exp(0.3 * v[0] - 0.2 * v[5]) * np.cos(v[8] + 0.5 * v[10]) + v[1] ** 2 * v[9]

    assert sublaplacian_apply(g, q, p, 1e-2, 4) == pytest.approx(
        sublaplacian_coordinates(g, q, p, 1e-4), rel=1e-5)


def test_sublaplacian_of_quadratic_polynomial():
    # Delta_0 |x|^2 = 2 * 4n, Delta_0 z_m^2 = 1/2 |x|^2_{A_m}
    p = AnisotropyParams(np.array([[1.0], [2.0], [0.5]]))
    q = GroupPoint([1.0, 2.0, -1.0, 0.5], [0.3, 0.1, -0.2])
    assert sublaplacian_apply(lambda v: np.sum(v[:4] ** 2), q, p) == pytest.approx(8.0, rel=1e-9)
    for m in range(3):
        got = sublaplacian_apply(lambda v: v[4 + m] ** 2, q, p)
        assert got == pytest.approx(0.5 * a_norm_sq(q.x, p)[m], rel=1e-8)


def test_params_round_trip(tmp_path):
    p = AnisotropyParams(np.array([[1.0, 0.5], [2.0, 1.5], [0.1, 3.0]]))
    path = tmp_path / "p.json"
    path.write_text(json.dumps(p.to_dict()))
    q = AnisotropyParams.from_json(path)
    assert np.array_equal(q.a, p.a)
    assert p.homogeneous_dim == 4 * p.n + 6
    assert GroupPoint.from_dict(GroupPoint([1, 2, 3, 4], [5, 6, 7]).to_dict()) == GroupPoint([1, 2, 3, 4], [5, 6, 7])


@pytest.mark.parametrize("bad", [np.zeros((3, 1)), -np.ones((3, 2)), np.ones((2, 2)), [[np.nan], [1], [1]]])
def test_params_reject_invalid(bad):
    with pytest.raises(ValueError):
        AnisotropyParams(np.asarray(bad, dtype=float))


def test_point_validation():
    with pytest.raises(ValueError):
        GroupPoint([1.0, 2.0, 3.0], [0, 0, 0])
    with pytest.raises(ValueError):
        GroupPoint([1.0, 2.0, 3.0, 4.0], [0, 0])
    with pytest.raises(ValueError):
        AnisotropyParams.from_dict({"n": 2, "a": [[1.0], [1.0], [1.0]]})
