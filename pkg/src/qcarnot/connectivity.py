"""Geodesics joining the origin to a target point: the mu-function and the four cases."""
from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .algebra import AnisotropyParams, GroupPoint, theta_matrix, theta_norms
from .curves import DEFAULT_SAMPLES, SampledCurve, extrapolated_length
from .geodesics import (
    GeodesicIVP, cubic_ratio, exp_map, geodesic_curve, residual_battery, sinc,
)

__all__ = [
    "mu", "mu_prime", "mu_over_t", "mu_critical", "mu_solve", "tilted_mu_roots",
    "branch_interval", "SolutionCase", "GeodesicSolution", "NoSolutionError",
    "EnumerationResult", "connect_x_zero", "connect_zero_z", "connect_full",
    "connect_mixed", "enumerate_geodesics", "full_length_sq", "energy_partition_gap",
    "boundary_curve", "classify_target", "q2_reduced_equation", "q2_mixed_closure",
    "check_solution", "arc_length_samples",
]

_SMALL = 0.1
ENDPOINT_TOL = 1e-8
PI_REJECT = 1e-8
DEDUP_TOL = 1e-8
NEWTON_MAXITER = 100
NEWTON_STEP_TOL = 1e-12
N_STARTS = 5


class NoSolutionError(RuntimeError):
    """The boundary-value solver found no geodesic for the requested data."""


# ---------------------------------------------------------------- mu-function

def _poles(t):
    return np.abs(np.sin(t)) == 0.0


def mu(t):
    """mu(t) = t / sin^2 t - cot t, odd, with mu(t) = 2t/3 + O(t^3) at 0."""
    t = np.asarray(t, dtype=float)
    small = np.abs(t) < _SMALL
    big = ~small
    if np.any(_poles(t[big])):
        raise ValueError("mu has poles at nonzero multiples of pi")
    out = np.empty_like(t)
    ts = t[small]
    t2 = ts * ts
    out[small] = ts * (2 / 3 + t2 * (4 / 45 + t2 * (4 / 315 + t2 * (8 / 4725))))
    tb = t[big]
    out[big] = (2 * tb - np.sin(2 * tb)) / (2 * np.sin(tb) ** 2)
    return out if out.ndim else float(out)


def mu_prime(t):
    """mu'(t) = 2 (sin t - t cos t) / sin^3 t."""
    t = np.asarray(t, dtype=float)
    small = np.abs(t) < _SMALL
    big = ~small
    if np.any(_poles(t[big])):
        raise ValueError("mu has poles at nonzero multiples of pi")
    out = np.empty_like(t)
    t2 = t[small] ** 2
    out[small] = 2 / 3 + t2 * (4 / 15 + t2 * (4 / 63 + t2 * (8 / 675)))
    tb = t[big]
    s = np.sin(tb)
    out[big] = 2 * (s - tb * np.cos(tb)) / s**3
    return out if out.ndim else float(out)


def mu_over_t(t):
    """(mu(t)/t, d/dt [mu(t)/t]) for t > 0, regular at t = 0."""
    t = np.asarray(t, dtype=float)
    small = np.abs(t) < _SMALL
    big = ~small
    val = np.empty_like(t)
    der = np.empty_like(t)
    ts = t[small]
    t2 = ts * ts
    val[small] = 2 / 3 + t2 * (4 / 45 + t2 * (4 / 315 + t2 * (8 / 4725)))
    der[small] = ts * (8 / 45 + t2 * (16 / 315 + t2 * (16 / 1575)))
    tb = t[big]
    m = mu(tb)
    val[big] = m / tb
    der[big] = (mu_prime(tb) * tb - m) / tb**2
    return val, der


def branch_interval(m: int) -> tuple[float, float]:
    """(0, pi) for m = 0, (m pi, (m+1) pi) otherwise."""
    if m < 0 or int(m) != m:
        raise ValueError("branch index must be a nonnegative integer")
    return m * np.pi, (m + 1) * np.pi


def mu_critical(m: int) -> tuple[float, float]:
    """Critical point c_m of mu on branch m >= 1 and the minimum value mu(c_m).

    c_m solves tan t = t in (m pi, m pi + pi/2), where mu(c_m) = c_m.
    """
    if m < 1 or int(m) != m:
        raise ValueError("critical points exist only on branches m >= 1")
    lo, hi = m * np.pi, m * np.pi + np.pi / 2
    c = brentq(lambda t: np.sin(t) - t * np.cos(t), lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)
    return float(c), float(mu(c))


def _edge(f, a, direction, limit):
    """Step from a pole toward the interior until f is positive."""
    delta = 1e-3
    while delta > 1e-15:
        t = a + direction * delta
        if abs(t - a) < limit and f(t) > 0:
            return t
        delta /= 10
    return None


def mu_solve(level: float, branch: int, slope: float = 0.0) -> np.ndarray:
    """Roots of mu(t) = level - slope * t on one branch (slope >= 0).

    Branch 0 holds at most one root (exactly one when level > 0); a higher
    branch holds 0, 1 (tangency) or 2 roots, found by bracketing on each side
    of the minimiser of mu(t) + slope * t.
    """
    if not np.isfinite(level):
        raise ValueError("level must be finite")
    if slope < 0:
        raise ValueError("slope must be nonnegative")
    lo, hi = branch_interval(branch)

    def f(t):
        return mu(t) + slope * t - level

    if branch == 0:
        if level <= 0:
            return np.empty(0)
        right = _edge(f, hi, -1, np.pi)
        return np.array([brentq(f, lo, right, xtol=1e-15, rtol=4 * np.finfo(float).eps)])

    if slope == 0:
        tmin = mu_critical(branch)[0]
    else:
        tmin = brentq(lambda t: mu_prime(t) + slope, lo + 1e-9, hi - 1e-9, xtol=1e-15)
    fmin = f(tmin)
    tol = 1e-12 * max(1.0, abs(level))
    if fmin > tol:
        return np.empty(0)
    if fmin >= -tol:
        return np.array([tmin])
    left = _edge(f, lo, 1, tmin - lo)
    right = _edge(f, hi, -1, hi - tmin)
    roots = [brentq(f, left, tmin, xtol=1e-15, rtol=4 * np.finfo(float).eps),
             brentq(f, tmin, right, xtol=1e-15, rtol=4 * np.finfo(float).eps)]
    return np.array(roots)


def tilted_mu_roots(level: float, slope: float = 0.0, max_branch: int = 3) -> list[np.ndarray]:
    """Roots of mu(t) = level - slope * t per branch 0..max_branch."""
    return [mu_solve(level, m, slope) for m in range(max_branch + 1)]


# ------------------------------------------------------------------ solutions

class SolutionCase(str, enum.Enum):
    X_ONLY = "X_ONLY"
    Z_ONLY = "Z_ONLY"
    FULL = "FULL"
    MIXED = "MIXED"


@dataclass(frozen=True, eq=False)
class GeodesicSolution:
    """One geodesic from the origin to ``target`` with its multipliers and length."""

    case: SolutionCase
    theta: np.ndarray
    v0: np.ndarray
    length: float
    target: GroupPoint
    params: AnisotropyParams
    multiindex: tuple | None = None
    branches: tuple | None = None
    energies: np.ndarray | None = None
    endpoint_error: float = 0.0

    @property
    def theta_norms(self) -> np.ndarray:
        return theta_norms(self.theta, self.params)

    @property
    def ivp(self) -> GeodesicIVP:
        return GeodesicIVP(self.v0, self.theta)

    def curve(self, num: int = DEFAULT_SAMPLES) -> SampledCurve:
        return geodesic_curve(self.ivp, self.params, num)

    def to_dict(self) -> dict:
        return {
            "case": self.case.value,
            "multiindex": None if self.multiindex is None else list(self.multiindex),
            "branches": None if self.branches is None else list(self.branches),
            "theta": self.theta.tolist(),
            "theta_norms": self.theta_norms.tolist(),
            "v0": self.v0.tolist(),
            "length": self.length,
            "length_sq": self.length**2,
            "target": self.target.to_dict(),
            "params": self.params.to_dict(),
            "energies": None if self.energies is None else np.asarray(self.energies).tolist(),
            "endpoint_error": self.endpoint_error,
        }

    @classmethod
    def from_dict(cls, data: dict, params: AnisotropyParams | None = None) -> "GeodesicSolution":
        """Inverse of ``to_dict``; ``params`` is needed when the dict carries none."""
        if params is None:
            params = AnisotropyParams.from_dict(data["params"])

        def opt(key, conv):
            return None if data.get(key) is None else conv(data[key])

        return cls(SolutionCase(data["case"]), np.asarray(data["theta"], float),
                   np.asarray(data["v0"], float), float(data["length"]),
                   GroupPoint.from_dict(data["target"]), params,
                   opt("multiindex", lambda v: tuple(int(k) for k in v)),
                   opt("branches", lambda v: tuple(int(k) for k in v)),
                   opt("energies", lambda v: np.asarray(v, float)),
                   float(data.get("endpoint_error", 0.0)))


@dataclass(frozen=True)
class EnumerationResult:
    case: SolutionCase
    solutions: list = field(default_factory=list)
    truncated: bool = False

    def __len__(self):
        return len(self.solutions)

    def __iter__(self):
        return iter(self.solutions)

    @property
    def lengths(self) -> np.ndarray:
        return np.array([s.length for s in self.solutions])


def _endpoint_error(iv: GeodesicIVP, target: GroupPoint, p: AnisotropyParams) -> float:
    x, z, _ = exp_map(iv, 1.0, p)
    return float(max(np.max(np.abs(x - target.x), initial=0.0), np.max(np.abs(z - target.z))))


def _tol(target: GroupPoint) -> float:
    return ENDPOINT_TOL * max(1.0, float(np.max(np.abs(target.as_vector()))))


def classify_target(target: GroupPoint) -> SolutionCase:
    xb = target.blocks
    nonzero = np.any(xb != 0, axis=1)
    has_z = np.any(target.z != 0)
    if not np.any(nonzero) and not has_z:
        raise ValueError("target is the origin")
    if not has_z:
        return SolutionCase.X_ONLY
    if not np.any(nonzero):
        return SolutionCase.Z_ONLY
    if np.all(nonzero):
        return SolutionCase.FULL
    return SolutionCase.MIXED


# --------------------------------------------------------------- x-only case

def connect_x_zero(x, p: AnisotropyParams) -> GeodesicSolution:
    """The straight line s -> (s x, 0), the only geodesic to (x, 0)."""
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size != 4 * p.n:
        raise ValueError(f"x must have length {4 * p.n}")
    if not np.any(x):
        raise ValueError("target is the origin")
    target = GroupPoint(x, np.zeros(3))
    iv = GeodesicIVP(x, np.zeros(3))
    return GeodesicSolution(SolutionCase.X_ONLY, np.zeros(3), x.copy(), float(np.linalg.norm(x)),
                            target, p, endpoint_error=_endpoint_error(iv, target, p))


# ------------------------------------------------------ shared Newton system
#
# Unknowns: vartheta_l = |theta|_l on blocks with x_l != 0 and y_l = log E_l,
# E_l = |v0_l|^2, on blocks with x_l = 0 whose index n_l is positive.  With
#   S_m = sum_nz a_ml^2 |x_l|^2 mu(vt_l)/vt_l + sum_zr a_ml^2 E_l / (pi n_l)^2
#   Q_l = sum_m z_m^2 a_ml^2 / S_m^2,   theta_m = 4 z_m / S_m,
# the equations are vt_l = 4 sqrt(Q_l) on nonzero blocks and
# log Q_l = 2 log(pi n_l / 4) on the zero blocks.

class _System:
    def __init__(self, x, z, p: AnisotropyParams, nz, zr, nidx):
        self.p = p
        self.z = np.asarray(z, dtype=float)
        self.x2 = np.sum(np.asarray(x, dtype=float).reshape(-1, 4) ** 2, axis=1)
        self.nz = np.asarray(nz, dtype=int)
        self.zr = np.asarray(zr, dtype=int)
        self.pin = np.pi * np.asarray(nidx, dtype=float)        # pi n_l on zr blocks
        self.a2 = p.a_sq                                         # (3, n)
        self.k = len(self.nz)
        self.w = (self.z**2 * self.a2[:, np.r_[self.nz, self.zr]].T)[None]   # (1, K, 3)

    def sums(self, u):
        """S (B, 3) and dS/du (B, 3, K) for a batch of unknowns u (B, K)."""
        vt = u[:, :self.k]
        e = np.exp(u[:, self.k:])
        a_nz = self.a2[:, self.nz] * self.x2[self.nz]            # (3, k)
        a_zr = self.a2[:, self.zr] / self.pin**2                 # (3, j)
        mot, dmot = mu_over_t(vt)
        s = mot @ a_nz.T + e @ a_zr.T
        ds = np.concatenate([a_nz[None] * dmot[:, None, :], a_zr[None] * e[:, None, :]], axis=2)
        return s, ds

    def residual(self, u, jac=False):
        s, ds = self.sums(u)
        w = self.w
        q = np.sum(w / s[:, None, :] ** 2, axis=2)                # (B, K)
        f = np.empty_like(u)
        f[:, :self.k] = u[:, :self.k] - 4 * np.sqrt(q[:, :self.k])
        f[:, self.k:] = np.log(q[:, self.k:]) - 2 * np.log(self.pin / 4)
        if not jac:
            return f
        dq = np.einsum("bkm,bmj->bkj", -2 * w / s[:, None, :] ** 3, ds)
        jmat = np.empty(u.shape + (u.shape[1],))
        jmat[:, :self.k] = -2 * dq[:, :self.k] / np.sqrt(q[:, :self.k, None])
        jmat[:, :self.k, :self.k] += np.eye(self.k)
        jmat[:, self.k:] = dq[:, self.k:] / q[:, self.k:, None]
        return f, jmat

    def theta(self, u):
        s, _ = self.sums(u[None])
        return 4 * self.z / s[0]


def _newton(system: _System, starts, lower, upper):
    """Damped Newton from every start, projected into [lower, upper].

    Returns the converged unknowns (rows) and their residual norms.
    """
    u = np.clip(np.array(starts, dtype=float), lower, upper)
    alive = np.ones(len(u), dtype=bool)
    done = np.zeros(len(u), dtype=bool)
    f = system.residual(u)
    fn = np.max(np.abs(f), axis=1)
    for _ in range(NEWTON_MAXITER):
        done |= fn < 1e-14
        idx = np.flatnonzero(alive & ~done)
        if idx.size == 0:
            break
        fi, ji = system.residual(u[idx], jac=True)
        step = -np.einsum("bij,bj->bi", np.linalg.pinv(ji), fi)
        lam = np.ones(idx.size)
        pending = np.ones(idx.size, dtype=bool)
        new_u = u[idx].copy()
        new_fn = fn[idx].copy()
        for _ in range(25):
            k = np.flatnonzero(pending)
            if k.size == 0:
                break
            trial = np.clip(u[idx[k]] + lam[k, None] * step[k], lower, upper)
            with np.errstate(all="ignore"):
                tf = system.residual(trial)
            tn = np.max(np.abs(tf), axis=1)
            ok = np.isfinite(tn) & (tn < fn[idx[k]] + 1e-15)
            new_u[k[ok]] = trial[ok]
            new_fn[k[ok]] = tn[ok]
            pending[k[ok]] = False
            lam[k[~ok]] /= 2
        moved = np.max(np.abs(new_u - u[idx]), axis=1)
        alive[idx[pending]] = False                       # no descent along the step
        u[idx] = new_u
        fn[idx] = new_fn
        scale = np.maximum(1.0, np.max(np.abs(new_u), axis=1))
        done[idx[moved < NEWTON_STEP_TOL * scale]] = True
    return u, fn


def _dedup(rows, tol=DEDUP_TOL):
    keep = []
    for r in rows:
        if all(np.max(np.abs(r - k)) > tol for k in keep):
            keep.append(r)
    return keep


def _subintervals(m: int):
    lo, hi = branch_interval(m)
    if m == 0:
        return [(lo, hi)]
    c = mu_critical(m)[0]
    return [(lo, c), (c, hi)]


def _start_grid(branch_box, energy_guess):
    """Tensor grid of starts: N_STARTS per vartheta sub-interval, 3 per log energy."""
    axes = []
    for m in branch_box:
        pts = []
        for lo, hi in _subintervals(m):
            pts.extend(lo + (hi - lo) * (np.arange(N_STARTS) + 0.5) / N_STARTS)
        axes.append(pts)
    for e in energy_guess:
        axes.append(list(np.log(e) + np.log([1 / 3, 1.0, 3.0])))
    if not axes:
        return np.zeros((1, 0))
    return np.array(list(itertools.product(*axes)))


def _v0_from_vartheta(x, theta, vt, p):
    """v0_l = (vt_l cot vt_l U - [M]_l) x_l on blocks with x_l != 0."""
    xb = np.asarray(x, dtype=float).reshape(-1, 4)
    mb = theta_matrix(theta, p)
    vcot = np.where(vt == 0, 1.0, vt * np.cos(vt) / np.where(vt == 0, 1.0, np.sin(vt)))
    return vcot[:, None] * xb - np.einsum("lij,lj->li", mb, xb)


def full_length_sq(x, z, vartheta, p: AnisotropyParams, zero_energies=None, zero_index=None):
    """Squared length 16 sum_m z_m^2 / S_m + sum_l |x_l|^2 vt_l cot vt_l.

    Nonzero blocks enter S_m through |x_l|^2 mu(vt_l)/vt_l; blocks with x_l = 0
    (``zero_energies`` E_l with indices n_l) through a_ml^2 E_l / (pi n_l)^2.
    """
    xb2 = np.sum(np.asarray(x, dtype=float).reshape(-1, 4) ** 2, axis=1)
    vt = np.asarray(vartheta, dtype=float)
    nz = xb2 > 0
    mot, _ = mu_over_t(vt[nz])
    s = p.a_sq[:, nz] @ (xb2[nz] * mot)
    if zero_energies is not None:
        zr = ~nz
        e = np.asarray(zero_energies, dtype=float)
        n_idx = np.asarray(zero_index, dtype=float)
        act = n_idx > 0
        s = s + p.a_sq[:, zr][:, act] @ (e[act] / (np.pi * n_idx[act]) ** 2)
    cot_term = np.sum(xb2[nz] * np.where(vt[nz] == 0, 1.0,
                                         vt[nz] * np.cos(vt[nz]) / np.sin(np.where(vt[nz] == 0, 1.0, vt[nz]))))
    return float(16 * np.sum(np.asarray(z, dtype=float) ** 2 / s) + cot_term)


def energy_partition_gap(sol: GeodesicSolution) -> float:
    """|sum z_m theta_m - |v0|^2/4 + 1/4 sum |x_l|^2 vt_l cot vt_l| over nonzero blocks."""
    xb2 = np.sum(sol.target.blocks**2, axis=1)
    vt = sol.theta_norms
    nz = xb2 > 0
    cot = vt[nz] * np.cos(vt[nz]) / np.sin(vt[nz])
    lhs = float(np.dot(sol.target.z, sol.theta))
    rhs = np.sum(sol.v0**2) / 4 - 0.25 * np.sum(xb2[nz] * cot)
    return abs(lhs - rhs)


# ----------------------------------------------------------- full (x, z) case

def connect_full(x, z, branch_box, p: AnisotropyParams) -> list[GeodesicSolution]:
    """All geodesics to (x, z) whose |theta|_l lie in the given branches.

    ``branch_box`` holds one branch index per block.  Every block of ``x``
    must be nonzero and ``z`` nonzero.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    z = np.asarray(z, dtype=float).reshape(3)
    target = GroupPoint(x, z)
    if classify_target(target) is not SolutionCase.FULL:
        raise ValueError("connect_full needs every x block nonzero and z nonzero")
    box = tuple(int(b) for b in branch_box)
    if len(box) != p.n:
        raise ValueError("branch_box needs one branch per block")
    return _solve_case(target, p, box, np.zeros(0, dtype=int), None, SolutionCase.FULL)


def _isotropic_columns(p: AnisotropyParams) -> bool:
    return bool(np.all(p.a == p.a[:, :1]))


def _solve_case(target, p, box, zero_index, energy_guess, case, fixed_energies=None):
    xb = target.blocks
    xb2 = np.sum(xb**2, axis=1)
    nz = np.flatnonzero(xb2 > 0)
    zero_blocks = np.flatnonzero(xb2 == 0)
    zero_index = np.asarray(zero_index, dtype=int)
    act = zero_blocks[zero_index > 0]
    nidx = zero_index[zero_index > 0]
    system = _System(target.x, target.z, p, nz, act, nidx)
    k = len(nz)
    candidates = []
    if fixed_energies is not None:
        candidates = _solve_fixed_energy(system, box, np.asarray(fixed_energies, float)[zero_index > 0])
    elif k == p.n and _isotropic_columns(p):
        # identical columns: all |theta|_l coincide and the system is scalar in mu
        a = p.a[:, 0]
        level = 4 * np.sqrt(np.sum(target.z**2 / a**2)) / np.sum(xb2)
        if len(set(box)) == 1:
            for r in mu_solve(level, box[0]):
                candidates.append(np.full(k, r))
    else:
        lower = np.array([branch_interval(m)[0] + 1e-9 for m in box] + [-50.0] * len(act))
        upper = np.array([branch_interval(m)[1] - 1e-9 for m in box] + [50.0] * len(act))
        starts = _start_grid(box, [] if energy_guess is None else energy_guess)
        u, fn = _newton(system, starts, lower, upper)
        for row, r in zip(u, fn):
            if r < 1e-9 and np.all(np.isfinite(row)):
                candidates.append(row)
    out = []
    for row in _dedup(candidates):
        sol = _build(system, target, p, row, box, zero_blocks, zero_index, case)
        if sol is not None:
            out.append(sol)
    uniq = []
    for s in out:
        if all(np.max(np.abs(s.theta_norms - t.theta_norms)) + np.max(np.abs(s.theta - t.theta))
               > DEDUP_TOL for t in uniq):
            uniq.append(s)
    return sorted(uniq, key=lambda s: s.length)


def _solve_fixed_energy(system, box, energies):
    """Unknowns vartheta only, zero-block energies held fixed."""
    k = system.k
    e_log = np.log(energies)

    class _Fixed:
        def residual(self, v, jac=False):
            u = np.concatenate([v, np.broadcast_to(e_log, (len(v), len(e_log)))], axis=1)
            out = system.residual(u, jac)
            if not jac:
                return out[:, :k]
            f, j = out
            return f[:, :k], j[:, :k, :k]

    lower = np.array([branch_interval(m)[0] + 1e-9 for m in box])
    upper = np.array([branch_interval(m)[1] - 1e-9 for m in box])
    v, fn = _newton(_Fixed(), _start_grid(box, []), lower, upper)
    rows = []
    for row, r in zip(v, fn):
        if r < 1e-9:
            full = np.concatenate([row, e_log])
            # a geodesic also needs |theta|_l = pi n_l on the zero blocks
            if np.max(np.abs(system.residual(full[None])[0, k:]), initial=0.0) < 1e-8:
                rows.append(full)
    return rows


def _build(system, target, p, row, box, zero_blocks, zero_index, case):
    k = system.k
    vt_nz = row[:k]
    near = np.round(vt_nz / np.pi)
    if np.any((near >= 1) & (np.abs(vt_nz - near * np.pi) < PI_REJECT)):
        return None                                   # sin vanishes while x_l != 0
    theta = system.theta(row)
    vt_all = theta_norms(theta, p)
    v0 = np.zeros((p.n, 4))
    if k:
        v0[system.nz] = _v0_from_vartheta(target.blocks[system.nz], theta, vt_nz,
                                          _sub_params(p, system.nz))
    energies = np.zeros(len(zero_blocks))
    act = zero_index > 0
    if np.any(act):
        e = np.exp(row[k:])
        energies[act] = e
        v0[system.zr, 0] = np.sqrt(e)
    iv = GeodesicIVP(v0.reshape(-1), theta)
    err = _endpoint_error(iv, target, p)
    if not np.isfinite(err) or err > _tol(target):
        return None
    length_sq = full_length_sq(target.x, target.z, vt_all, p,
                               zero_energies=energies if len(zero_blocks) else None,
                               zero_index=zero_index if len(zero_blocks) else None)
    return GeodesicSolution(case, theta, iv.v0, float(np.sqrt(length_sq)), target, p,
                            multiindex=tuple(int(i) for i in zero_index) if len(zero_blocks) else None,
                            branches=tuple(box), energies=energies if len(zero_blocks) else None,
                            endpoint_error=err)


def _sub_params(p: AnisotropyParams, blocks) -> AnisotropyParams:
    return AnisotropyParams(p.a[:, blocks])


def _redirect(sol: GeodesicSolution, directions) -> GeodesicSolution:
    """Rotate the initial velocity of zero blocks into the requested unit directions."""
    if directions is None:
        return sol
    d = np.asarray(directions, dtype=float).reshape(sol.params.n, 4)
    v0 = sol.v0.reshape(-1, 4).copy()
    zero = np.all(sol.target.blocks == 0, axis=1)
    for l in np.flatnonzero(zero):
        nrm = np.linalg.norm(d[l])
        if nrm == 0:
            raise ValueError("directions must be nonzero")
        v0[l] = np.linalg.norm(v0[l]) * d[l] / nrm
    iv = GeodesicIVP(v0.reshape(-1), sol.theta)
    err = _endpoint_error(iv, sol.target, sol.params)
    return GeodesicSolution(sol.case, sol.theta, iv.v0, sol.length, sol.target, sol.params,
                            sol.multiindex, sol.branches, sol.energies, err)


# ----------------------------------------------------------------- (0, z) case

def connect_zero_z(z, multiindex, p: AnisotropyParams, directions=None) -> GeodesicSolution:
    """Geodesic to (0, z) with |theta|_l = pi n_l on every block with n_l > 0.

    Blocks with n_l = 0 stay at rest (v0_l = 0).  The block energies solve
    sum_m 16 z_m^2 a_ml^2 / S_m^2 = (pi n_l)^2, S_m = sum_r a_mr^2 E_r / (pi n_r)^2,
    by Gauss-Newton in log E.  ``directions`` gives one 4-vector per block
    (default e_1 in each block); only its direction matters.
    """
    z = np.asarray(z, dtype=float).reshape(3)
    if not np.any(z):
        raise ValueError("z must be nonzero")
    nidx = np.asarray(multiindex, dtype=int).reshape(-1)
    if nidx.size != p.n or np.any(nidx < 0) or not np.any(nidx):
        raise ValueError("multiindex needs n nonnegative entries, not all zero")
    target = GroupPoint(np.zeros(4 * p.n), z)
    act = np.flatnonzero(nidx > 0)
    system = _System(target.x, z, p, [], act, nidx[act])
    # single-block closure E = 4 pi n sqrt(sum z^2 / a^2), shared between active blocks
    guess = np.array([4 * np.pi * nidx[l] * np.sqrt(np.sum(z**2 / p.a[:, l] ** 2)) for l in act])
    start = np.log(guess / len(act))
    u, fn = _newton(system, start[None], np.full(len(act), -50.0), np.full(len(act), 50.0))
    if not (fn[0] < 1e-9):
        raise NoSolutionError(f"no (0, z) geodesic with multiindex {tuple(nidx)}")
    sol = _build(system, target, p, u[0], (), np.arange(p.n), nidx, SolutionCase.Z_ONLY)
    if sol is None:
        raise NoSolutionError(f"endpoint check failed for multiindex {tuple(nidx)}")
    return _redirect(sol, directions)


# ------------------------------------------------------------------ mixed case

def connect_mixed(x, z, multiindex, branch_box, p: AnisotropyParams, energies=None,
                  closure: bool = True, directions=None) -> list[GeodesicSolution]:
    """Geodesics to (x, z) where some, not all, blocks of x vanish.

    ``multiindex`` has one entry per zero block (|theta|_l = pi n_l, or 0 for a
    block at rest); ``branch_box`` one branch per nonzero block.  With
    ``closure`` the zero-block energies are unknowns solved together with the
    nonzero-block |theta|_l, and ``energies`` (if given) only seed the search.
    Without it the energies are held fixed and a root is kept only if it also
    satisfies |theta|_l = pi n_l, which generic energies do not.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    z = np.asarray(z, dtype=float).reshape(3)
    target = GroupPoint(x, z)
    if classify_target(target) is not SolutionCase.MIXED:
        raise ValueError("connect_mixed needs some (not all) x blocks zero and z nonzero")
    xb2 = np.sum(target.blocks**2, axis=1)
    zero_blocks = np.flatnonzero(xb2 == 0)
    nidx = np.asarray(multiindex, dtype=int).reshape(-1)
    if nidx.size != zero_blocks.size or np.any(nidx < 0):
        raise ValueError("multiindex needs one nonnegative entry per zero block")
    box = tuple(int(b) for b in branch_box)
    if len(box) != p.n - zero_blocks.size:
        raise ValueError("branch_box needs one branch per nonzero block")
    act = nidx > 0
    if energies is None:
        guess = np.array([4 * np.pi * nidx[i] * np.sqrt(np.sum(z**2 / p.a[:, l] ** 2))
                          for i, l in enumerate(zero_blocks)])
    else:
        guess = np.asarray(energies, dtype=float).reshape(-1)
        if guess.size != zero_blocks.size or np.any(guess[act] <= 0):
            raise ValueError("energies must be positive, one per zero block")
    if closure:
        sols = _solve_case(target, p, box, nidx, guess[act], SolutionCase.MIXED)
    else:
        sols = _solve_case(target, p, box, nidx, None, SolutionCase.MIXED, fixed_energies=guess)
    return [_redirect(s, directions) for s in sols]


def q2_reduced_equation(x1, z1: float, e2: float, n: int, p: AnisotropyParams):
    """(level, slope) of mu(t) = level - slope t for the Q^2 target (x1, 0, (z1, 0, 0)).

    Here the second block is at rest at both ends, carries energy e2 and index n.
    """
    if p.n != 2:
        raise ValueError("this reduction is for n = 2")
    x1sq = float(np.sum(np.asarray(x1, dtype=float) ** 2))
    a11, a12 = p.a[0, 0], p.a[0, 1]
    level = 4 * abs(z1) / (a11 * x1sq)
    slope = a12**2 * e2 / (np.pi**2 * n**2 * a11**2 * x1sq)
    return level, slope


def q2_mixed_closure(x1, z1: float, n: int, p: AnisotropyParams):
    """Closed form for the Q^2 mixed target: |theta|_1 = pi n a11 / a12 and E_2.

    Returns ``(vartheta1, e2)``; ``e2 <= 0`` means no geodesic with this index.
    """
    x1sq = float(np.sum(np.asarray(x1, dtype=float) ** 2))
    a11, a12 = p.a[0, 0], p.a[0, 1]
    vt = np.pi * n * a11 / a12
    level = 4 * abs(z1) / (a11 * x1sq)
    e2 = (level - mu(vt)) * np.pi**2 * n**2 * a11**2 * x1sq / (vt * a12**2)
    return float(vt), float(e2)


# ------------------------------------------------------------------ enumeration

def enumerate_geodesics(target: GroupPoint, p: AnisotropyParams, max_branch: int = 2,
                        max_index: int = 3, directions=None) -> EnumerationResult:
    """Every geodesic to ``target`` within the caps, sorted by length.

    Branches run over 0..max_branch per nonzero block and indices over
    0..max_index per zero block (0 meaning the block stays at rest).  The
    (0, z) and mixed families are infinite; their results are marked truncated.
    """
    case = classify_target(target)
    if target.n != p.n:
        raise ValueError("target dimension does not match the parameters")
    if case is SolutionCase.X_ONLY:
        return EnumerationResult(case, [connect_x_zero(target.x, p)], False)
    xb2 = np.sum(target.blocks**2, axis=1)
    k = int(np.sum(xb2 > 0))
    j = p.n - k
    sols = []
    if case is SolutionCase.Z_ONLY:
        for idx in itertools.product(range(max_index + 1), repeat=p.n):
            if not any(idx):
                continue
            try:
                sols.append(connect_zero_z(target.z, idx, p, directions))
            except NoSolutionError:
                pass
        truncated = True
    elif case is SolutionCase.FULL:
        for box in itertools.product(range(max_branch + 1), repeat=k):
            sols.extend(connect_full(target.x, target.z, box, p))
        truncated = False
    else:
        for idx in itertools.product(range(max_index + 1), repeat=j):
            for box in itertools.product(range(max_branch + 1), repeat=k):
                sols.extend(connect_mixed(target.x, target.z, idx, box, p, directions=directions))
        truncated = True
    sols.sort(key=lambda s: s.length)
    return EnumerationResult(case, sols, truncated)


# ------------------------------------------------------------------ boundary form

def boundary_curve(sol: GeodesicSolution, s) -> tuple[np.ndarray, np.ndarray]:
    """x(s), z(s) written through the endpoint data instead of the initial velocity.

    Nonzero blocks: x_l(s) = 1/2 [(2 cot vt sin^2(s vt) - sin(2 s vt)) [M]_l / vt
    + (cot vt sin(2 s vt) + 2 sin^2(s vt)) U] x_l(1); blocks at rest at both ends
    follow from v0_l; z_m(s) = z_m(1) / S_m * sum_l a_ml^2 w_l (s - sin(2 s vt_l)/(2 vt_l))
    with w_l = |x_l(1)|^2 / sin^2 vt_l or E_l / (pi n_l)^2.
    """
    p = sol.params
    s = np.atleast_1d(np.asarray(s, dtype=float))
    xb = sol.target.blocks
    xb2 = np.sum(xb**2, axis=1)
    vt = sol.theta_norms
    mb = theta_matrix(sol.theta, p)
    v = sol.v0.reshape(-1, 4)
    x = np.zeros((s.size, p.n, 4))
    weights = np.zeros(p.n)
    for l in range(p.n):
        t = vt[l]
        st = s * t
        if xb2[l] > 0:
            cot = np.cos(t) / np.sin(t) if t > 0 else np.inf
            if t > 0:
                c_m = 0.5 * (2 * cot * np.sin(st) ** 2 - np.sin(2 * st)) / t
                c_u = 0.5 * (cot * np.sin(2 * st) + 2 * np.sin(st) ** 2)
            else:
                c_m = np.zeros_like(s)
                c_u = s
            x[:, l] = c_m[:, None] * (mb[l] @ xb[l]) + c_u[:, None] * xb[l]
            weights[l] = xb2[l] / sinc(t) ** 2                 # vt^2 |x|^2 / sin^2 vt
        else:
            u = 2 * st
            c_m = 2 * s**2 * 0.5 * sinc(u / 2) ** 2
            x[:, l] = c_m[:, None] * (mb[l] @ v[l]) + (s * sinc(u))[:, None] * v[l]
            weights[l] = np.sum(v[l] ** 2)                     # |v0_l|^2
    nz = xb2 > 0
    sums = p.a_sq[:, nz] @ (xb2[nz] * mu_over_t(vt[nz])[0])
    if sol.energies is not None:
        zero = ~nz
        n_idx = np.asarray(sol.multiindex, dtype=float)
        act = n_idx > 0
        sums = sums + p.a_sq[:, zero][:, act] @ (sol.energies[act] / (np.pi * n_idx[act]) ** 2)
    # s - sin(2 s t)/(2 t) = 4 s^3 t^2 cubic_ratio(2 s t); the t^2 is folded into the weights
    zfac = 4 * s[:, None] ** 3 * cubic_ratio(2 * s[:, None] * vt[None])   # (N, n)
    z = sol.target.z / sums * (zfac @ (p.a_sq * weights).T)
    return x.reshape(s.size, -1), z


# ------------------------------------------------------------------ checks

ARC_TOL = 1e-6


def arc_length_samples(sol: GeodesicSolution) -> int:
    """Odd sample count giving the extrapolated polygon length well below 1e-8."""
    w = 2 * float(np.max(sol.theta_norms, initial=0.0)) + 1
    return int(2 * np.ceil(max(2000.0, 400 * w) / 2) + 1)


def check_solution(sol: GeodesicSolution, num: int | None = None) -> dict:
    """Postconditions of a returned geodesic, measured.

    Keys: endpoint error, residual battery, length^2 - |v0|^2 and the gap
    between ``length`` and the extrapolated polygon length of the curve.  For
    FULL targets the kinetic-energy partition gap is included.
    """
    p = sol.params
    battery = residual_battery(sol.ivp, p, num)
    m = arc_length_samples(sol)
    x, _, _ = exp_map(sol.ivp, np.linspace(0.0, 1.0, m), p)
    arc = extrapolated_length(x)
    out = {
        "endpoint_error": _endpoint_error(sol.ivp, sol.target, p),
        "endpoint_tol": _tol(sol.target),
        "battery": battery.to_dict(),
        "length_sq_gap": abs(sol.length**2 - float(sol.v0 @ sol.v0)),
        "arc_length": arc,
        "arc_gap": abs(arc - sol.length),
    }
    if sol.case is SolutionCase.FULL:
        out["energy_gap"] = energy_partition_gap(sol)
    out["ok"] = bool(out["endpoint_error"] <= out["endpoint_tol"] and battery.ok
                     and out["length_sq_gap"] <= 1e-10 * max(1.0, sol.length**2)
                     and out["arc_gap"] <= ARC_TOL
                     and out.get("energy_gap", 0.0) <= 1e-9)
    return out
