import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from oracles import mu_closed, richardson_length, scan_roots
from qcarnot.algebra import AnisotropyParams, GroupPoint
from qcarnot.connectivity import (
    NoSolutionError, SolutionCase, branch_interval, check_solution, classify_target, connect_full,
    connect_mixed, connect_x_zero, connect_zero_z, enumerate_geodesics, mu, mu_critical,
    mu_over_t, mu_prime, mu_solve, q2_mixed_closure, tilted_mu_roots,
)
from qcarnot.figures import AN30_X1, AN30_Z1, an30_params
from qcarnot.geodesics import exp_map

# roots of tan t = t, where mu' = 2 (sin t - t cos t) / sin^3 t vanishes
TAN_ROOTS = (4.493409457909064, 7.725251836937707, 10.904121659428899)


def test_mu_matches_direct_formula():
    t = np.concatenate([np.linspace(0.2, 3.0, 50), np.linspace(3.3, 6.0, 50), -np.linspace(0.2, 3, 9)])
    assert np.allclose(mu(t), mu_closed(t), rtol=1e-12)


def test_mu_small_argument_series():
    t = np.array([0.0, 1e-8, 1e-4, 0.05, 0.099, 0.101])
    assert mu(t)[0] == 0
    # mu(t) = 2t/3 + ... and mu / t -> 2/3
    val, der = mu_over_t(t)
    assert val[:3] == pytest.approx(2 / 3, rel=1e-7)
    assert np.allclose(val[-2:], mu_closed(t[-2:]) / t[-2:], rtol=1e-10)
    assert der[-1] == pytest.approx((mu(0.102) / 0.102 - mu(0.100) / 0.100) / 0.002, rel=1e-4)
    assert np.allclose(mu(t[-2:]), mu_closed(t[-2:]), rtol=1e-10)


def test_mu_odd_and_monotone_on_first_branch():
    t = np.linspace(-np.pi + 1e-3, np.pi - 1e-3, 4001)
    assert np.allclose(mu(-t), -mu(t))
    assert np.all(np.diff(mu(t)) > 0)
    assert np.all(mu_prime(t) > 0)


def test_mu_prime_against_difference_quotient():
    t = np.array([0.5, 2.0, 4.0, 5.5, 8.0])
    h = 1e-6
    assert np.allclose(mu_prime(t), (mu(t + h) - mu(t - h)) / (2 * h), rtol=1e-6)


@pytest.mark.parametrize("m", [1, 2, 3])
def test_mu_critical_values(m):
    c, value = mu_critical(m)
    assert c == pytest.approx(TAN_ROOTS[m - 1], abs=1e-12)
    assert value == pytest.approx(c, abs=1e-10)          # mu(c_m) = c_m
    lo, hi = branch_interval(m)
    assert lo < c < hi


@given(st.floats(0.05, 14.0), st.sampled_from([0.0, 0.01, 0.2, 0.9]))
def test_tilted_roots_match_scan(level, slope):
    roots = tilted_mu_roots(level, slope, 3)
    found = sum(r.size for r in roots)
    expected = scan_roots(lambda t: mu_closed(t) + slope * t - level, 0, 4 * np.pi, 200_000)
    # a tangency may be resolved differently by a coarse scan; skip those draws
    gaps = [abs(mu_critical(m)[1] + slope * mu_critical(m)[0] - level) for m in (1, 2, 3)]
    if min(gaps) > 1e-3:
        assert found == expected
    for r in roots:
        assert np.allclose(mu(r) + slope * r, level, atol=1e-9)


def test_mu_solve_branch_zero_single_root():
    r = mu_solve(np.pi / 2, 0)
    assert r.size == 1 and mu(r[0]) == pytest.approx(np.pi / 2, abs=1e-12)
    assert mu_solve(TAN_ROOTS[0] - 0.01, 1).size == 0


def test_classify_target():
    assert classify_target(GroupPoint([1, 0, 0, 0], [0, 0, 0])) is SolutionCase.X_ONLY
    assert classify_target(GroupPoint([0, 0, 0, 0], [1, 0, 0])) is SolutionCase.Z_ONLY
    assert classify_target(GroupPoint([1, 0, 0, 0], [1, 0, 0])) is SolutionCase.FULL
    assert classify_target(GroupPoint([1, 0, 0, 0, 0, 0, 0, 0], [1, 0, 0])) is SolutionCase.MIXED


def test_x_zero_straight_line():
    p = AnisotropyParams(np.array([[1.0, 2.0], [0.5, 1.0], [1.5, 0.7]]))
    x = np.array([1.0, -2.0, 0.3, 0.0, 0.5, 0.5, 0.0, 1.0])
    sol = connect_x_zero(x, p)
    assert sol.length == pytest.approx(np.linalg.norm(x), abs=1e-12)
    assert np.all(sol.theta == 0)


@pytest.mark.parametrize("k", [1, 2, 3])
def test_zero_z_isotropic_lengths(k):
    p = AnisotropyParams.isotropic(1)
    sol = connect_zero_z([1.0, 0.0, 0.0], (k,), p)
    assert sol.length**2 == pytest.approx(4 * np.pi * k, rel=1e-12)
    assert sol.theta_norms[0] == pytest.approx(np.pi * k, rel=1e-12)
    x, z, _ = exp_map(sol.ivp, 1.0, p)
    assert np.abs(x).max() < 1e-10 and np.allclose(z, [1, 0, 0], atol=1e-10)


@pytest.mark.parametrize("idx", [(1, 1), (2, 2)])
def test_zero_z_anisotropic_two_blocks(idx):
    p = AnisotropyParams(np.array([[1.0, 0.8], [1.2, 1.0], [0.9, 1.1]]))
    z = np.array([0.4, -0.3, 0.5])
    sol = connect_zero_z(z, idx, p)
    chk = check_solution(sol)
    assert chk["ok"], chk
    assert sol.theta_norms == pytest.approx(np.pi * np.array(idx), rel=1e-9)


def test_zero_z_unequal_indices_can_fail():
    # for this target the energy equations with indices (1, 2) push E_2 to 0
    p = AnisotropyParams(np.array([[1.0, 0.8], [1.2, 1.0], [0.9, 1.1]]))
    with pytest.raises(NoSolutionError):
        connect_zero_z([0.4, -0.3, 0.5], (1, 2), p)


def test_zero_z_rejects_bad_input():
    p = AnisotropyParams.isotropic(1)
    with pytest.raises(ValueError):
        connect_zero_z([0, 0, 0], (1,), p)
    with pytest.raises(ValueError):
        connect_zero_z([1, 0, 0], (0,), p)


def test_full_isotropic_branch_zero():
    p = AnisotropyParams.isotropic(1)
    sols = connect_full([1.0, 0, 0, 0], [np.pi / 8, 0, 0], (0,), p)
    assert len(sols) == 1
    assert sols[0].theta_norms[0] == pytest.approx(np.pi / 2, abs=1e-10)


def test_full_random_anisotropic_targets():
    g = np.random.default_rng(7)
    for _ in range(4):
        p = AnisotropyParams(g.uniform(0.8, 1.2, (3, 2)))
        x = g.normal(size=8)
        z = g.normal(size=3) * 0.3
        res = enumerate_geodesics(GroupPoint(x, z), p, max_branch=1)
        assert len(res) >= 1 and not res.truncated
        assert np.all(np.diff(res.lengths) >= 0)
        for sol in res:
            chk = check_solution(sol)
            assert chk["ok"], chk
            xs, _, _ = exp_map(sol.ivp, np.linspace(0, 1, 4001), p)
            assert richardson_length(xs) == pytest.approx(sol.length, abs=1e-6)


def test_mixed_closure_existence():
    p = an30_params()
    x = np.concatenate([AN30_X1, np.zeros(4)])
    z = np.array([AN30_Z1, 0, 0])
    for n, expected in ((1, 1), (2, 1), (3, 0)):
        vt, e2 = q2_mixed_closure(AN30_X1, AN30_Z1, n, p)
        assert (e2 > 0) == bool(expected)
        sols = connect_mixed(x, z, (n,), (max(int(vt // np.pi), 0),), p)
        assert len(sols) == expected
        for sol in sols:
            assert sol.theta_norms[0] == pytest.approx(vt, abs=1e-8)
            assert check_solution(sol)["ok"]


def test_enumeration_zero_z_truncated():
    res = enumerate_geodesics(GroupPoint([0, 0, 0, 0], [1, 0, 0]), AnisotropyParams.isotropic(1),
                              max_index=5)
    assert res.truncated and len(res) == 5
    assert res.lengths == pytest.approx(np.sqrt(4 * np.pi * np.arange(1, 6)))


def test_solution_serialises():
    p = AnisotropyParams.isotropic(1)
    sol = connect_zero_z([1.0, 0.0, 0.0], (2,), p)
    d = json.loads(json.dumps(sol.to_dict()))
    assert d["case"] == "Z_ONLY" and d["multiindex"] == [2]
    assert d["length_sq"] == pytest.approx(8 * np.pi)


def test_no_solution_error_is_runtime_error():
    assert issubclass(NoSolutionError, RuntimeError)
