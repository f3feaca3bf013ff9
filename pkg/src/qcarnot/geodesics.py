"""Hamiltonian flow of the sub-Laplacian and the closed-form exponential map."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .algebra import (
    UNIT, AnisotropyParams, GroupPoint, _bilinear, a_norm_sq, block_apply,
    theta_matrix, theta_norms,
)
from .curves import DEFAULT_SAMPLES, SampledCurve, derivative, second_derivative

__all__ = [
    "GeodesicIVP", "Bicharacteristic", "hamiltonian", "hamiltonian_rhs",
    "integrate_bicharacteristic", "exp_2sM", "exp_map", "geodesic_curve",
    "geodesic_residual", "fit_theta", "sinc", "versine_ratio", "cubic_ratio",
    "endpoint", "FD_TOL", "ResidualReport", "fd_error_model", "battery_samples",
    "residual_battery",
]

FD_TOL = 5e-6

_SERIES_CUTOFF = 0.1


def _floats(u):
    """Array of u, keeping extended precision when it is given."""
    u = np.asarray(u)
    return u if u.dtype == np.longdouble else u.astype(float)


def sinc(u):
    """sin(u) / u with sinc(0) = 1."""
    u = _floats(u)
    out = np.ones_like(u)
    nz = u != 0
    out[nz] = np.sin(u[nz]) / u[nz]
    return out


def versine_ratio(u):
    """(1 - cos u) / u^2, evaluated as sinc(u/2)^2 / 2 to avoid cancellation."""
    return 0.5 * sinc(_floats(u) / 2) ** 2


def cubic_ratio(u):
    """(u - sin u) / u^3 with the value 1/6 at u = 0."""
    u = _floats(u)
    out = np.empty_like(u)
    small = np.abs(u) < _SERIES_CUTOFF
    us = u[small] ** 2
    # 1/3! - u^2/5! + u^4/7! - u^6/9! + u^8/11!
    out[small] = (1 / 6 - us / 120 + us**2 / 5040 - us**3 / 362880 + us**4 / 39916800)
    ub = u[~small]
    out[~small] = (ub - np.sin(ub)) / ub**3
    return out


@dataclass(frozen=True, eq=False)
class GeodesicIVP:
    """Initial velocity xdot(0) and the constant multipliers theta."""

    v0: np.ndarray
    theta: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "v0", np.asarray(self.v0, dtype=float).reshape(-1))
        object.__setattr__(self, "theta", np.asarray(self.theta, dtype=float).reshape(3))

    def theta_norms(self, p: AnisotropyParams) -> np.ndarray:
        return theta_norms(self.theta, p)


def hamiltonian(x, xi, theta, p: AnisotropyParams):
    """H = |xi|^2 + 1/4 (Theta^2 x, x) + (M x, xi).

    Works for complex ``xi`` and ``theta`` (the complexified action uses
    theta = -i tau); |xi|^2 is the bilinear square, not the Hermitian norm.
    """
    x = np.asarray(x)
    xi = np.asarray(xi)
    theta = np.asarray(theta)
    xb = x.reshape(*x.shape[:-1], -1, 4)
    block_sq = np.sum(xb * xb, axis=-1)                      # |x_l|^2
    theta_sq = (theta**2)[..., None, :] * p.a_sq.T           # theta_m^2 a_ml^2
    theta_term = 0.25 * np.sum(block_sq * np.sum(theta_sq, axis=-1), axis=-1)
    mx = block_apply(theta_matrix(theta, p), x)
    return np.sum(xi * xi, axis=-1) + theta_term + np.sum(mx * xi, axis=-1)


def hamiltonian_rhs(x, xi, theta, p: AnisotropyParams):
    """(xdot, zdot, xidot) of the bicharacteristic system; batched over leading axes."""
    mblocks = theta_matrix(theta, p)
    mx = block_apply(mblocks, x)
    xdot = 2 * xi + mx
    zdot = 0.5 * theta * a_norm_sq(x, p) + _bilinear(x, xi, p)
    # Theta^2 x: block l scaled by |theta|_l^2
    tn2 = theta_norms(theta, p) ** 2
    theta2_x = (x.reshape(*x.shape[:-1], -1, 4) * tn2[..., None]).reshape(x.shape)
    xidot = -0.5 * theta2_x + block_apply(mblocks, xi)
    return xdot, zdot, xidot


@dataclass(frozen=True, eq=False)
class Bicharacteristic:
    s: np.ndarray
    x: np.ndarray
    z: np.ndarray
    xi: np.ndarray
    theta: np.ndarray

    def curve(self) -> SampledCurve:
        return SampledCurve(self.s, self.x, self.z)


def integrate_bicharacteristic(iv: GeodesicIVP, p: AnisotropyParams, steps: int = 10_000,
                               S: float = 1.0, x0=None, z0=None,
                               keep_path: bool = True) -> Bicharacteristic:
    """Classical RK4 for the bicharacteristic system with xi(0) = (v0 - M x0) / 2."""
    res = _rk4_batch(iv.v0[None], iv.theta[None], p, steps, S,
                     None if x0 is None else np.asarray(x0, float)[None],
                     None if z0 is None else np.asarray(z0, float)[None], keep_path)
    s, x, z, xi = res
    return Bicharacteristic(s, x[:, 0], z[:, 0], xi[:, 0], iv.theta.copy())


def _rk4_batch(v0, theta, p, steps, S, x0=None, z0=None, keep_path=True):
    """Integrate a batch of IVPs; arrays are (B, .). Returns (s, x, z, xi) paths."""
    if steps < 10:
        raise ValueError("need at least 10 steps")
    v0 = np.asarray(v0, dtype=float)
    theta = np.asarray(theta, dtype=float)
    batch = v0.shape[0]
    x = np.zeros_like(v0) if x0 is None else np.array(x0, dtype=float)
    z = np.zeros((batch, 3)) if z0 is None else np.array(z0, dtype=float)
    xi = 0.5 * v0 - 0.5 * block_apply(theta_matrix(theta, p), x)
    h = S / steps
    s = np.linspace(0.0, S, steps + 1)
    if keep_path:
        xs = np.empty((steps + 1,) + x.shape)
        zs = np.empty((steps + 1,) + z.shape)
        xis = np.empty((steps + 1,) + xi.shape)
        xs[0], zs[0], xis[0] = x, z, xi

    def f(x, xi):
        return hamiltonian_rhs(x, xi, theta, p)

    for i in range(steps):
        k1x, k1z, k1p = f(x, xi)
        k2x, k2z, k2p = f(x + 0.5 * h * k1x, xi + 0.5 * h * k1p)
        k3x, k3z, k3p = f(x + 0.5 * h * k2x, xi + 0.5 * h * k2p)
        k4x, k4z, k4p = f(x + h * k3x, xi + h * k3p)
        x = x + h / 6 * (k1x + 2 * k2x + 2 * k3x + k4x)
        z = z + h / 6 * (k1z + 2 * k2z + 2 * k3z + k4z)
        xi = xi + h / 6 * (k1p + 2 * k2p + 2 * k3p + k4p)
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(xi))):
            raise FloatingPointError(f"non-finite state at step {i + 1}; reduce the step size")
        if keep_path:
            xs[i + 1], zs[i + 1], xis[i + 1] = x, z, xi
    if keep_path:
        return s, xs, zs, xis
    return s[-1:], x[None], z[None], xi[None]


def exp_2sM(s: float, theta, p: AnisotropyParams) -> np.ndarray:
    """Blocks of exp(2 s M(theta)): cos(2 s t) U + 2 s sinc(2 s t) [M]_l, t = |theta|_l."""
    t = theta_norms(theta, p)
    u = 2 * s * t
    mb = theta_matrix(theta, p)
    return (np.cos(u)[:, None, None] * UNIT
            + (2 * s * sinc(u))[:, None, None] * mb)


def exp_map(iv: GeodesicIVP, s, p: AnisotropyParams, dtype=float):
    """Closed-form geodesic from the origin.

    Returns ``(x, z, xdot)`` evaluated at ``s`` (scalar or 1-D array); for array
    ``s`` the outputs have a leading sample axis.

    x_l(s) = (1 - cos 2st)/(2t^2) [M]_l v_l + sin(2st)/(2t) v_l,
    z_m(s) = sum_l theta_m a_ml^2 |v_l|^2 / (4 t^2) (s - sin(2st)/(2t)),
    with t = |theta|_l and removable singularities at t = 0 handled exactly.
    ``dtype=np.longdouble`` evaluates in extended precision.
    """
    s_arr = np.atleast_1d(np.asarray(s, dtype=dtype))
    v = iv.v0.astype(dtype).reshape(-1, 4)
    theta = iv.theta.astype(dtype)
    t = theta_norms(theta, p)
    mb = theta_matrix(theta, p)
    mv = np.einsum("lij,lj->li", mb, v)                          # [M]_l v_l
    u = 2 * s_arr[:, None] * t[None, :]                          # (N, n)
    s_col = s_arr[:, None]
    c_m = 2 * s_col**2 * versine_ratio(u)                        # (1-cos 2st)/(2t^2)
    c_u = s_col * sinc(u)                                        # sin(2st)/(2t)
    x = c_m[..., None] * mv + c_u[..., None] * v
    xdot = np.cos(u)[..., None] * v + (2 * s_col * sinc(u))[..., None] * mv
    # (s - sin(2st)/(2t)) / t^2 = 4 s^3 (u - sin u)/u^3
    zfac = 4 * s_col**3 * cubic_ratio(u)                         # (N, n)
    weights = 0.25 * p.a_sq * np.sum(v**2, axis=1)               # (3, n): a_ml^2 |v_l|^2 / 4
    z = theta * (zfac @ weights.T)
    x = x.reshape(s_arr.size, -1)
    xdot = xdot.reshape(s_arr.size, -1)
    if np.ndim(s) == 0:
        return x[0], z[0], xdot[0]
    return x, z, xdot


def geodesic_curve(iv: GeodesicIVP, p: AnisotropyParams, num: int = DEFAULT_SAMPLES,
                   S: float = 1.0) -> SampledCurve:
    s = np.linspace(0.0, S, num)
    x, z, _ = exp_map(iv, s, p)
    return SampledCurve(s, x, z)


def endpoint(iv: GeodesicIVP, p: AnisotropyParams, s: float = 1.0) -> GroupPoint:
    x, z, _ = exp_map(iv, s, p)
    return GroupPoint(x, z)


def geodesic_residual(c: SampledCurve, theta, p: AnisotropyParams) -> np.ndarray:
    """xddot - 2 M(theta) xdot per sample, shape (N, 4n)."""
    h = c.step
    xdot = derivative(c.x, h)
    xddot = second_derivative(c.x, h)
    return xddot - 2 * block_apply(theta_matrix(theta, p), xdot)


def fit_theta(c: SampledCurve, p: AnisotropyParams):
    """Least-squares theta for xddot = 2 M(theta) xdot over all samples.

    Returns ``(theta, max_residual)`` where the residual is the max over
    samples of the Euclidean norm of xddot - 2 M(theta) xdot.
    """
    h = c.step
    xdot = derivative(c.x, h)
    xddot = second_derivative(c.x, h)
    basis = np.stack([2 * block_apply(theta_matrix(np.eye(3)[m], p), xdot) for m in range(3)],
                     axis=-1)                                    # (N, 4n, 3)
    theta, *_ = np.linalg.lstsq(basis.reshape(-1, 3), xddot.reshape(-1), rcond=None)
    resid = geodesic_residual(c, theta, p)
    return theta, float(np.max(np.linalg.norm(resid, axis=1)))


def fd_error_model(iv: GeodesicIVP, p: AnisotropyParams, h: float,
                   dtype=np.longdouble) -> tuple[float, float]:
    """Predicted size of the FD geodesic and horizontality residuals at step h.

    Truncation uses |x^(k)| <= W^(k-1) |v0| with W = 2 max |theta|_l; the
    geodesic residual also carries a rounding term of order eps |x| / h^2,
    with eps that of the sampling precision ``dtype``.
    """
    w = 2 * float(np.max(iv.theta_norms(p), initial=0.0))
    v = float(np.linalg.norm(iv.v0))
    xmax = v * float(S_MAX_FACTOR)
    geo = h * h * w**3 * v / 4 + 4 * np.finfo(dtype).eps * xmax / (h * h)
    hor = h * h * p.a_max_sq * v * v * (w * w + 1) / 8
    return float(geo), float(hor)


S_MAX_FACTOR = 1.0     # |x(s)| <= s |v0| on [0, 1]


def battery_samples(iv: GeodesicIVP, p: AnisotropyParams, budget: float = FD_TOL / 10,
                    lo: int = DEFAULT_SAMPLES, hi: int = 1_000_001) -> int:
    """Smallest sample count in [lo, hi] whose predicted FD residual is within
    ``budget``; the minimiser of the prediction if none is."""
    counts = np.unique(np.geomspace(lo, hi, 80).astype(int))
    pred = np.array([max(fd_error_model(iv, p, 1.0 / (k - 1))) for k in counts])
    fits = np.flatnonzero(pred <= budget)
    return int(counts[fits[0]] if fits.size else counts[int(np.argmin(pred))])


@dataclass(frozen=True)
class ResidualReport:
    samples: int
    horizontality: float
    geodesic: float
    tol: float

    @property
    def ok(self) -> bool:
        return self.horizontality <= self.tol and self.geodesic <= self.tol

    def to_dict(self) -> dict:
        return {"samples": self.samples, "horizontality": self.horizontality,
                "geodesic": self.geodesic, "tol": self.tol, "ok": self.ok}


def residual_battery(iv: GeodesicIVP, p: AnisotropyParams, num: int | None = None,
                     tol: float = FD_TOL) -> ResidualReport:
    """Horizontality and xddot - 2 M xdot residuals of the closed-form geodesic.

    ``num=None`` starts from 1001 samples and adds samples only when the
    frequency 2 max |theta|_l makes the O(h^2) truncation exceed the rounding floor.
    Samples are taken in extended precision so that rounding noise, amplified
    by 1/h^2 in the differences, stays below the truncation error.
    """
    num = battery_samples(iv, p) if num is None else int(num)
    s = np.arange(num, dtype=np.longdouble) / (num - 1)    # linspace rounds to double
    x, z, _ = exp_map(iv, s, p, dtype=np.longdouble)
    h = 1 / np.longdouble(num - 1)
    xdot = derivative(x, h)
    zdot = derivative(z, h)
    hor = zdot - 0.5 * _bilinear(x, xdot, p)
    geo = second_derivative(x, h) - 2 * block_apply(theta_matrix(iv.theta.astype(np.longdouble), p), xdot)
    hor = float(np.max(np.abs(hor)))
    geo = float(np.max(np.linalg.norm(geo, axis=1)))
    return ResidualReport(num, hor, geo, tol)
