"""Complex action, volume element, heat kernel and Green's function at the origin.

Functions of a block norm |w|_l enter only through even functions, so they
are evaluated from u_l = |w|_l^2 = sum_m a_ml^2 w_m^2 and the choice of
complex square root never matters.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.integrate import quad
from scipy.special import gammaincc

from .algebra import AnisotropyParams, GroupPoint, sublaplacian_stencil
from .geodesics import hamiltonian

__all__ = [
    "ShiftedTau", "GREEN_QUAD", "HEAT_QUAD", "QuadratureSpec", "KernelValue", "EstimateProbe", "epsilon0",
    "block_u", "gamma_part", "complex_action", "action_tau_gradient",
    "action_tau_hessian", "action_x_gradient", "action_sublaplacian", "hj_residual",
    "volume_element", "volume_tau_gradient", "transport_residual", "critical_point",
    "heat_kernel", "green_function", "green_constant", "estimate_probe",
    "fit_estimate_constants", "time_integral_check", "tail_bound",
    "kernel_sublaplacian", "heat_residual",
]

_U_SMALL = 1e-2


def _split(u):
    u = np.asarray(u, dtype=complex)
    small = np.abs(u) < _U_SMALL
    return u, small, np.sqrt(u[~small])


def _series(u, coeffs):
    out = np.zeros_like(u)
    for c in reversed(coeffs):
        out = out * u + c
    return out


def _q(u):
    """t coth t."""
    u, small, t = _split(u)
    out = np.empty_like(u)
    out[small] = _series(u[small], [1, 1 / 3, -1 / 45, 2 / 945, -1 / 4725])
    out[~small] = t / np.tanh(t)
    return out


def _vol(u):
    """t^2 / sinh^2 t."""
    u, small, t = _split(u)
    out = np.empty_like(u)
    out[small] = _series(u[small], [1, -1 / 3, 1 / 15, -2 / 189, 1 / 675])
    out[~small] = u[~small] / np.sinh(t) ** 2
    return out


def _phi(u):
    """(coth t - t / sinh^2 t) / t, the radial factor of d(t coth t)/dtau."""
    u, small, t = _split(u)
    out = np.empty_like(u)
    out[small] = _series(u[small], [2 / 3, -4 / 45, 4 / 315, -8 / 4725, 4 / 18711])
    tb = t
    out[~small] = (1 / np.tanh(tb) - tb / np.sinh(tb) ** 2) / tb
    return out


def _dphi(u):
    """d phi / du."""
    u, small, t = _split(u)
    out = np.empty_like(u)
    out[small] = _series(u[small], [-4 / 45, 8 / 315, -24 / 4725, 16 / 18711])
    ub = u[~small]
    q2 = 2 * (t / np.tanh(t) - 1) / np.sinh(t) ** 2       # second derivative of t coth t
    out[~small] = (q2 - _phi(ub)) / (2 * ub)
    return out


def _dvol(u):
    """(1 - t coth t) / sinh^2 t."""
    u, small, t = _split(u)
    out = np.empty_like(u)
    out[small] = _series(u[small], [-1 / 3, 2 / 15, -2 / 63, 4 / 675, -2 / 2079])
    out[~small] = (1 - t / np.tanh(t)) / np.sinh(t) ** 2
    return out


def _real_if_real(out, *inputs):
    if all(not np.iscomplexobj(np.asarray(a)) for a in inputs):
        return out.real
    return out


# ------------------------------------------------------------------ types

def epsilon0(p: AnisotropyParams) -> float:
    """pi / (4 a_bar), a_bar = max a_ml^2."""
    return float(np.pi / (4 * p.a_max_sq))


@dataclass(frozen=True, eq=False)
class ShiftedTau:
    """w = tau + i eps z/|z| (z/|z| replaced by 0 when z = 0)."""

    tau: np.ndarray
    eps: float = 0.0
    ztilde: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "tau", np.asarray(self.tau, dtype=float))
        if self.eps < 0:
            raise ValueError("eps must be nonnegative")
        zt = np.zeros(3) if self.ztilde is None else np.asarray(self.ztilde, dtype=float)
        nrm = np.linalg.norm(zt)
        if nrm > 0 and abs(nrm - 1) > 1e-12:
            raise ValueError("ztilde must be a unit vector or zero")
        object.__setattr__(self, "ztilde", zt)

    @classmethod
    def for_point(cls, tau, z, eps: float = 0.0) -> "ShiftedTau":
        z = np.asarray(z, dtype=float)
        nrm = np.linalg.norm(z)
        return cls(tau, eps, z / nrm if nrm > 0 else np.zeros(3))

    @property
    def w(self) -> np.ndarray:
        if self.eps == 0:
            return self.tau
        return self.tau + 1j * self.eps * self.ztilde


def _as_w(w):
    return w.w if isinstance(w, ShiftedTau) else np.asarray(w)


def block_u(w, p: AnisotropyParams):
    """u_l = |w|_l^2 = sum_m a_ml^2 w_m^2, shape (..., n)."""
    w = _as_w(w)
    return (w * w) @ p.a_sq


def _block_sq(x):
    x = np.asarray(x, dtype=float)
    return np.sum(x.reshape(*x.shape[:-1], -1, 4) ** 2, axis=-1)


# ------------------------------------------------------------------ action

def gamma_part(x, w, p: AnisotropyParams):
    """gamma(x, w) = sum_l |x_l|^2 / 4 |w|_l coth |w|_l."""
    w = _as_w(w)
    return _real_if_real(np.sum(_block_sq(x) / 4 * _q(block_u(w, p)), axis=-1), w)


def complex_action(x, z, w, p: AnisotropyParams):
    """f(x, z, w) = gamma(x, w) - i sum_m w_m z_m."""
    w = _as_w(w)
    return gamma_part(x, w, p) - 1j * np.sum(w * np.asarray(z, dtype=float), axis=-1)


def action_tau_gradient(x, z, w, p: AnisotropyParams):
    """df/dw_m = -i z_m + w_m sum_l a_ml^2 |x_l|^2 / 4 phi(|w|_l)."""
    w = _as_w(w)
    coeff = _block_sq(x) / 4 * _phi(block_u(w, p))               # (..., n)
    return -1j * np.asarray(z, dtype=float) + w * (coeff @ p.a_sq.T)


def action_tau_hessian(x, w, p: AnisotropyParams):
    """d^2 f / dw_m dw_k (the linear z term drops out)."""
    w = np.asarray(_as_w(w), dtype=complex)
    u = block_u(w, p)
    xb = _block_sq(x) / 4
    diag = (xb * _phi(u)) @ p.a_sq.T                              # (..., 3)
    # w_m sum_l c_ml phi'(u_l) 2 a_kl^2 w_k
    c = p.a_sq * (xb * _dphi(u))[..., None, :]                    # (..., 3, n)
    cross = 2 * np.einsum("...ml,kl->...mk", c, p.a_sq) * w[..., :, None] * w[..., None, :]
    return cross + diag[..., None] * np.eye(3)


def action_x_gradient(x, w, p: AnisotropyParams):
    """grad_x f: block l is x_l / 2 |w|_l coth |w|_l."""
    w = _as_w(w)
    x = np.asarray(x, dtype=float)
    q = _q(block_u(w, p))
    xb = x.reshape(*x.shape[:-1], -1, 4)
    return (xb * q[..., None] / 2).reshape(*q.shape[:-1], -1)


def action_sublaplacian(w, p: AnisotropyParams):
    """Delta_0 f = 2 sum_l |w|_l coth |w|_l (independent of x and z)."""
    w = _as_w(w)
    return _real_if_real(2 * np.sum(_q(block_u(w, p)), axis=-1), w)


def _mu_complex(s):
    """mu(s) = s / sin^2 s - cot s for complex s, series near 0."""
    s = np.asarray(s, dtype=complex)
    small = np.abs(s) < 0.1
    out = np.empty_like(s)
    s2 = s[small] ** 2
    out[small] = s[small] * (2 / 3 + s2 * (4 / 45 + s2 * (4 / 315 + s2 * (8 / 4725))))
    sb = s[~small]
    out[~small] = sb / np.sin(sb) ** 2 - np.cos(sb) / np.sin(sb)
    return out


def hj_residual(x, z, tau, p: AnisotropyParams) -> float:
    """|sum_m tau_m df/dtau_m + H(x, grad_x f, grad_z f) - f| at real tau.

    The tau-derivatives use the form -i z_m - i tau_m sum_l a_ml^2 |x_l|^2
    / (4 |tau|_l) mu(i |tau|_l), and H is the Hamiltonian evaluated at
    xi = grad_x f and theta = grad_z f = -i tau.
    """
    x = np.asarray(x, dtype=float)
    z = np.asarray(z, dtype=float)
    tau = np.asarray(tau, dtype=float)
    t = np.sqrt(block_u(tau, p).real)
    xb = _block_sq(x)
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = np.where(t > 0, _mu_complex(1j * t) / np.where(t > 0, t, 1.0), 2j / 3)
    df = -1j * z - 1j * tau * ((xb / 4 * ratio) @ p.a_sq.T)
    xi = action_x_gradient(x, tau, p).astype(complex)
    h = hamiltonian(x.astype(complex), xi, -1j * tau, p)
    f = complex_action(x, z, tau, p)
    return float(abs(np.sum(tau * df) + h - f))


def volume_element(w, p: AnisotropyParams):
    """V(w) = prod_l |w|_l^2 / sinh^2 |w|_l."""
    w = _as_w(w)
    return _real_if_real(np.prod(_vol(block_u(w, p)), axis=-1), w)


def volume_tau_gradient(w, p: AnisotropyParams):
    """dV/dw_m = sum_r prod_{l != r} V_l * 2 a_mr^2 w_m (1 - t_r coth t_r) / sinh^2 t_r."""
    w = _as_w(w)
    u = block_u(w, p)
    vl = _vol(u)                                                 # (..., n)
    n = vl.shape[-1]
    others = np.stack([np.prod(np.delete(vl, r, axis=-1), axis=-1) for r in range(n)], axis=-1)
    per = others * _dvol(u)                                      # (..., n)
    return _real_if_real(2 * w * (per @ p.a_sq.T), w)


def transport_residual(tau, x, p: AnisotropyParams) -> float:
    """|(2n - Delta_0 f) V - sum_m tau_m dV/dtau_m|."""
    tau = np.asarray(tau, dtype=float)
    v = volume_element(tau, p)
    lhs = (2 * p.n - action_sublaplacian(tau, p)) * v
    return float(abs(lhs - np.sum(tau * volume_tau_gradient(tau, p))))


def critical_point(x, z, p: AnisotropyParams, guess, tol: float = 1e-14, maxiter: int = 100):
    """Complex Newton for grad_tau f = 0 started from ``guess`` (complex 3-vector).

    Returns ``(tau_c, f(tau_c))``.  At tau_c = i theta for the multipliers
    theta of a geodesic to (x, z), f equals a quarter of its squared length.
    """
    tau = np.asarray(guess, dtype=complex).reshape(3)
    for _ in range(maxiter):
        g = action_tau_gradient(x, z, tau, p)
        step = np.linalg.solve(action_tau_hessian(x, tau, p), g)
        tau = tau - step
        if np.max(np.abs(step)) < tol * max(1.0, np.max(np.abs(tau))):
            break
    else:
        raise RuntimeError("critical-point Newton did not converge")
    return tau, complex(complex_action(x, z, tau, p))


# ------------------------------------------------------------------ quadrature

_RULES = ("tensor", "spherical")


@dataclass(frozen=True)
class QuadratureSpec:
    """Quadrature over tau in R^3, truncated at radius (or half-width) T.

    ``rule="tensor"``: Gauss-Legendre on [-T, T]^3, each axis cut into
    ``panels`` equal panels of ``nodes`` points.

    ``rule="spherical"``: polar coordinates about the direction of z, with
    ``nodes`` Gauss-Legendre points in cos(polar angle), ``nodes`` trapezoid
    points in azimuth and ``nodes // 2`` points on each radial panel.  Radial
    panels double in width from a point-dependent scale, which resolves the
    peak of the integrand near tau = 0; ``panels`` is the minimum count.

    ``tail_tol`` bounds the neglected mass relative to the computed integral.
    Both rules map tau to -tau onto themselves.
    """

    T: float = 12.0
    nodes: int = 64
    panels: int = 1
    tail_tol: float = 1e-6
    rule: str = "tensor"

    def __post_init__(self):
        if not (self.T > 0 and self.nodes >= 4 and self.panels >= 1 and self.tail_tol > 0):
            raise ValueError("invalid quadrature specification")
        if self.rule not in _RULES:
            raise ValueError(f"unknown quadrature rule {self.rule!r}")

    @classmethod
    def from_dict(cls, data: dict) -> "QuadratureSpec":
        return cls(**{k: data[k] for k in ("T", "nodes", "panels", "tail_tol", "rule") if k in data})

    def to_dict(self) -> dict:
        return {"T": self.T, "nodes": self.nodes, "panels": self.panels,
                "tail_tol": self.tail_tol, "rule": self.rule}

    def refined(self, factor: float) -> "QuadratureSpec":
        return replace(self, nodes=max(4, int(round(self.nodes * factor))))

    def axis(self):
        """Nodes and weights of the 1-D composite rule."""
        return _composite(np.linspace(-self.T, self.T, self.panels + 1), self.nodes)

    def grid(self, axis=None, scale: float = 1.0, max_width: float = np.inf,
             polar_width: float = 1.0):
        """(N, 3) nodes and (N,) weights.

        For the spherical rule ``axis`` is the polar direction and ``scale``
        the width of the innermost radial panel; no radial panel is wider
        than ``max_width``.  ``polar_width`` < 1/2 grades the polar rule
        toward the equator cos = 0 with that innermost width.
        """
        if self.rule == "tensor":
            t, w = self.axis()
            tt = np.stack(np.meshgrid(t, t, t, indexing="ij"), axis=-1).reshape(-1, 3)
            ww = (w[:, None, None] * w[None, :, None] * w[None, None, :]).ravel()
            return tt, ww
        return _spherical_grid(self, np.array([0.0, 0.0, 1.0]) if axis is None else axis, scale,
                               max_width, polar_width)


def _composite(edges, nodes):
    g, wg = np.polynomial.legendre.leggauss(nodes)
    half = np.diff(edges) / 2
    mid = (edges[:-1] + edges[1:]) / 2
    return (mid[:, None] + half[:, None] * g[None]).ravel(), (half[:, None] * wg[None]).ravel()


def _radial_edges(T, scale, panels, max_width=np.inf):
    scale = min(max(scale, 1e-8), T, max_width)
    edges = [0.0, scale]
    while edges[-1] + min(edges[-1], max_width) < T:
        edges.append(edges[-1] + min(edges[-1], max_width))
    edges.append(T)
    edges = np.array(edges)
    while edges.size - 1 < panels:
        edges = np.sort(np.concatenate([edges, (edges[:-1] + edges[1:]) / 2]))
    return edges


def _frame_for(axis):
    e3 = np.asarray(axis, dtype=float)
    e3 = e3 / np.linalg.norm(e3)
    trial = np.eye(3)[int(np.argmin(np.abs(e3)))]
    e1 = trial - (trial @ e3) * e3
    e1 /= np.linalg.norm(e1)
    return np.column_stack([e1, np.cross(e3, e1), e3])


def _polar_rule(nodes, width):
    """Gauss rule in cos(polar angle), graded toward 0 when ``width`` is small."""
    if width >= 0.5:
        return np.polynomial.legendre.leggauss(nodes)
    edges = [max(width, 1e-8)]
    while 2 * edges[-1] < 1:
        edges.append(2 * edges[-1])
    half = np.array([0.0] + edges + [1.0])
    c, w = _composite(half, max(8, nodes // 2))
    return np.concatenate([-c[::-1], c]), np.concatenate([w[::-1], w])


def _spherical_grid(spec, axis, scale, max_width=np.inf, polar_width=1.0):
    r, wr = _composite(_radial_edges(spec.T, scale, spec.panels, max_width), max(2, spec.nodes // 2))
    c, wc = _polar_rule(spec.nodes, polar_width)
    na = spec.nodes + spec.nodes % 2                             # even, so phi + pi is a node
    phi = 2 * np.pi * (np.arange(na) + 0.5) / na
    sn = np.sqrt(1 - c**2)
    dirs = np.stack([np.outer(sn, np.cos(phi)), np.outer(sn, np.sin(phi)),
                     np.outer(c, np.ones(na))], axis=-1).reshape(-1, 3) @ _frame_for(axis).T
    wd = np.outer(wc, np.full(na, 2 * np.pi / na)).ravel()
    tau = (r[:, None, None] * dirs[None]).reshape(-1, 3)
    wts = ((wr * r**2)[:, None] * wd[None]).ravel()
    return tau, wts


_GRID_CACHE: dict = {}


def _grid(spec: QuadratureSpec, axis=None, scale: float = 1.0, max_width: float = np.inf,
          polar_width: float = 1.0):
    key = (spec.T, spec.nodes, spec.panels, spec.rule)
    if spec.rule == "spherical":
        key += (None if axis is None else tuple(np.asarray(axis, dtype=float)), scale, max_width,
                polar_width)
    if key not in _GRID_CACHE:
        if len(_GRID_CACHE) > 8:
            _GRID_CACHE.clear()
        _GRID_CACHE[key] = spec.grid(axis, scale, max_width, polar_width)
    return _GRID_CACHE[key]


GREEN_QUAD = QuadratureSpec(T=16.0, nodes=48, rule="spherical")
HEAT_QUAD = QuadratureSpec(T=16.0, nodes=48, rule="spherical")


def tail_bound(T: float, p: AnisotropyParams) -> float:
    """Upper bound for the mass of V outside the ball |tau| < T.

    Uses |tau|_l >= sqrt(a_min) |tau| on a single block, the others bounded by 1,
    and t^2/sinh^2 t <= 4 t^2 e^{-2t} / (1 - e^{-2 t_T})^2 for t >= t_T.
    """
    s = np.sqrt(p.a_min_sq)
    k = 2 * s
    mass = 16 * np.pi * s**2 * gammaincc(5, k * T) * math.gamma(5) / k**5
    return float(mass / (1 - np.exp(-k * T)) ** 2)


@dataclass(frozen=True)
class KernelValue:
    value: float
    imag: float
    tail: float
    quad_error: float | None = None

    def to_dict(self) -> dict:
        return {"value": self.value, "imag": self.imag, "tail": self.tail,
                "quad_error": self.quad_error}


def green_constant(n: int) -> float:
    """2^{2n} (2 pi)^{2n+3} / (2n+1)!."""
    return 2.0 ** (2 * n) * (2 * np.pi) ** (2 * n + 3) / math.factorial(2 * n + 1)


def _points(x, z, p):
    x = np.atleast_2d(np.asarray(x, dtype=float))
    z = np.atleast_2d(np.asarray(z, dtype=float))
    if x.shape[-1] != 4 * p.n or z.shape[-1] != 3 or x.shape[0] != z.shape[0]:
        raise ValueError("points must be (P, 4n) and (P, 3)")
    return x, z


def _peak_scale(x2, znorm, eps):
    """Width in |tau| of the peak of |f|^{-2n-2} near tau = 0."""
    return float(min(1.0, (x2 / 4 + eps * znorm) / (znorm + x2 / 4)))


POLAR_FACTOR = 0.5


def _spherical_setup(spec, x2, z, eps, p):
    nz = np.linalg.norm(z)
    axis = z / nz if nz > 0 else np.array([0.0, 0.0, 1.0])
    # in cos(angle to z) the peak of |f|^{-2n-2} has width about Re f / (r |z|);
    # on the z-axis only the contour shift keeps Re f away from 0
    polar = np.inf if nz == 0 else POLAR_FACTOR * max(x2 * np.sqrt(p.a_min_sq), eps * nz) / nz
    return _grid(spec, axis, _peak_scale(x2, nz, eps), polar_width=float(polar))


def _green_integrals(x, z, eps, spec, p, anchor=None):
    n = p.n
    power = 2 * n + 2
    xb2 = _block_sq(x)                                           # (P, n)
    out = np.empty(x.shape[0], dtype=complex)
    shared = spec.rule == "tensor" or anchor is not None
    if shared:
        if spec.rule == "tensor":
            tau, wts = _grid(spec)
        else:
            ax, az = (np.asarray(c, dtype=float) for c in anchor)
            tau, wts = _spherical_setup(spec, float(ax @ ax), az, eps, p)
    if shared and (anchor is not None or eps == 0):
        # one shift direction for the whole batch (the anchor's); by contour
        # independence any direction with zt . z > 0 gives the same value
        az = np.asarray(anchor[1], dtype=float) if anchor is not None else np.zeros(3)
        nz = np.linalg.norm(az)
        zt = az / nz if nz > 0 else np.zeros(3)
        w = tau + 1j * eps * zt if eps > 0 else tau
        u = block_u(w, p)
        q = _q(u)
        wv = wts * np.prod(_vol(u), axis=-1)
        wz = w @ z.T                                             # (N, P)
        for i in range(x.shape[0]):
            f = q @ (xb2[i] / 4) - 1j * wz[:, i]
            out[i] = np.sum(wv / f**power)
        return out
    for i in range(x.shape[0]):
        if not shared:
            tau, wts = _spherical_setup(spec, float(xb2[i].sum()), z[i], eps, p)
        nz = np.linalg.norm(z[i])
        zt = z[i] / nz if nz > 0 else np.zeros(3)
        w = tau + 1j * eps * zt if eps > 0 else tau
        u = block_u(w, p)
        f = _q(u) @ (xb2[i] / 4) - 1j * (w @ z[i])
        vals = wts * np.prod(_vol(u), axis=-1) / f**power
        out[i] = np.sum(vals)
    return out


def _green_tail(x, z, eps, spec, p):
    # |f| >= Re f >= |x|^2/4 sqrt(a_min) T + eps |z| beyond the ball (coth >= 1)
    lower = _block_sq(x).sum(-1) / 4 * np.sqrt(p.a_min_sq) * spec.T + eps * np.linalg.norm(z, axis=-1)
    shift = np.exp(2 * eps * np.sqrt(p.a_max_sq) * p.n)          # growth of |V| along the shift
    bound = tail_bound(spec.T, p) * shift / lower ** (2 * p.n + 2)
    # at x = 0, |f|^2 = (eps |z|)^2 + (tau.z)^2 and the angular average is much smaller
    axis = math.sqrt(math.pi) * math.gamma(p.n + 0.5) / (2 * math.gamma(p.n + 1)) * eps / spec.T
    return np.where(_block_sq(x).sum(-1) == 0, bound * min(1.0, axis), bound)


def green_function(x, z, p: AnisotropyParams, eps="auto", quad: QuadratureSpec | None = None,
                   estimate_error: bool = False, check_tail: bool = True, anchor=None):
    """Green's function G(x, z) of the sub-Laplacian with pole at the origin.

    G = -c_n int V(tau + i eps zt) / f(x, z, tau + i eps zt)^{2n+2} dtau with
    c_n = 2^{2n} (2 pi)^{2n+3} / (2n+1)!.  ``eps="auto"`` picks eps0/2; eps = 0 is
    allowed when x != 0.  ``x`` and ``z`` may be stacked as (P, 4n), (P, 3),
    which returns a list of values.

    The default rule is ``GREEN_QUAD`` (spherical).  ``anchor=(x0, z0)`` makes
    all points share the spherical grid built for (x0, z0), so that nearby
    points are integrated with identical nodes (finite differences need this).
    ``quad_error`` is the change against a rule with 3/4 of the nodes.
    """
    quad = quad or GREEN_QUAD
    xs, zs = _points(x, z, p)
    e0 = epsilon0(p)
    eps = e0 / 2 if eps == "auto" else float(eps)
    if not 0 <= eps < e0:
        raise ValueError(f"eps must lie in [0, {e0:.6g})")
    xb2 = _block_sq(xs).sum(-1)
    if np.any((xb2 == 0) & ~np.any(zs, axis=-1)):
        raise ValueError("the Green's function is singular at the origin")
    if eps == 0 and np.any(xb2 == 0):
        raise ValueError("x = 0 needs a shifted contour (eps > 0)")
    c = -green_constant(p.n)
    vals = c * _green_integrals(xs, zs, eps, quad, p, anchor)
    tails = abs(c) * _green_tail(xs, zs, eps, quad, p)
    errs = [None] * len(vals)
    if estimate_error:
        coarse = quad.refined(0.75)
        errs = np.abs(vals - c * _green_integrals(xs, zs, eps, coarse, p, anchor)).tolist()
    if check_tail and np.any(tails > quad.tail_tol * np.abs(vals.real)):
        raise ArithmeticError(f"tail estimate {tails.max():.3g} exceeds tolerance; increase T")
    out = [KernelValue(float(v.real), float(v.imag), float(t), e)
           for v, t, e in zip(vals, tails, errs)]
    return out[0] if np.ndim(x) == 1 else out


def _heat_grid(spec, w, t, anchor=None):
    """Grid for a batch of heat-kernel points, refined for e^{i tau.w/t}.

    Tensor rule: equal panels with about 8 nodes per period.  Spherical rule:
    polar axis along w (of ``anchor`` if given, else the batch mean), radial
    panels of at most one sixth of a period per Gauss node and enough
    angular nodes for the phase r |w| cos / t.
    """
    freq = float(np.max(np.linalg.norm(w, axis=-1))) / t
    if spec.rule == "tensor":
        need = int(np.ceil(8 * freq * 2 * spec.T / (2 * np.pi)))
        if need > spec.nodes * spec.panels:
            spec = replace(spec, panels=int(np.ceil(need / spec.nodes)))
        return spec, _grid(spec)
    ref = np.mean(w, axis=0) if anchor is None else np.asarray(anchor, dtype=float)
    nrm = np.linalg.norm(ref)
    axis = ref / nrm if nrm > 0 else np.array([0.0, 0.0, 1.0])
    ang = int(np.ceil(1.5 * spec.T * freq)) + 16
    if ang > spec.nodes:
        spec = replace(spec, nodes=ang + ang % 2)
    max_width = np.inf if freq == 0 else (spec.nodes // 2) * 2 * np.pi / (6 * freq)
    return spec, _grid(spec, axis, 1.0, max_width)


_CHUNK = 1 << 21


def _heat_integrals(y, w, t, grid, p, action_weight=False):
    """int e^{-f/t} V dtau per point; with ``action_weight`` the integrand carries f as well."""
    tau_all, wts_all = grid
    xb2 = _block_sq(y)
    step = max(1, _CHUNK // max(1, y.shape[0]))
    out = np.zeros(y.shape[0], dtype=complex)
    for k in range(0, tau_all.shape[0], step):
        tau, wts = tau_all[k:k + step], wts_all[k:k + step]
        u = block_u(tau, p)
        wv = wts * np.prod(_vol(u).real, axis=-1)
        gam = _q(u).real @ (xb2.T / 4)                           # (N, P)
        phase = tau @ w.T
        expo = np.exp(-gam / t) * np.exp(1j * phase / t)
        if action_weight:
            expo = expo * (gam - 1j * phase)
        out += np.sum(wv[:, None] * expo, axis=0)
    return out


def heat_kernel(y, w, t: float, p: AnisotropyParams, quad: QuadratureSpec | None = None,
                C: float = 1.0, estimate_error: bool = False, check_tail: bool = True,
                anchor=None, grid_t: float | None = None):
    """Heat kernel P(y, w, t) = C / t^{2n+3} int e^{-f(y, w, tau)/t} V(tau) dtau.

    The normalisation C is left to the caller (default 1).  Points may be
    stacked as in ``green_function`` and share one grid; ``anchor`` (a
    3-vector) fixes its polar axis and ``grid_t`` the time used to refine the
    grid, so that neighbouring points and times reuse identical nodes.  The
    default rule is ``HEAT_QUAD``.
    """
    if not t > 0:
        raise ValueError("t must be positive")
    quad = quad or HEAT_QUAD
    ys, ws = _points(y, w, p)
    gt = t if grid_t is None else grid_t
    spec, grid = _heat_grid(quad, ws, gt, anchor)
    scale = C / t ** (2 * p.n + 3)
    vals = scale * _heat_integrals(ys, ws, t, grid, p)
    tails = abs(scale) * tail_bound(spec.T, p) * np.exp(
        -_block_sq(ys).sum(-1) / 4 * np.sqrt(p.a_min_sq) * spec.T / t)
    errs = [None] * len(vals)
    if estimate_error:
        _, coarse = _heat_grid(spec.refined(0.75), ws, gt, anchor)
        errs = np.abs(vals - scale * _heat_integrals(ys, ws, t, coarse, p)).tolist()
    if check_tail and np.any(tails > quad.tail_tol * np.abs(vals.real)):
        raise ArithmeticError(f"tail estimate {tails.max():.3g} exceeds tolerance; increase T")
    out = [KernelValue(float(v.real), float(v.imag), float(tl), e)
           for v, tl, e in zip(vals, tails, errs)]
    return out[0] if np.ndim(y) == 1 else out


def kernel_sublaplacian(kernel, q: GroupPoint, p: AnisotropyParams, h: float, order: int = 4) -> float:
    """Finite-difference sub-Laplacian of a batched kernel at q.

    ``kernel(x, z)`` receives stacked points (P, 4n), (P, 3) and returns P values.
    """
    pts, wts = sublaplacian_stencil(q, p, h, order)
    vals = np.asarray(kernel(pts[:, :4 * p.n], pts[:, 4 * p.n:]), dtype=float)
    return float(np.dot(wts, vals))


def heat_residual(y, w, t: float, p: AnisotropyParams, h: float, quad: QuadratureSpec | None = None,
                  order: int = 2) -> tuple[float, float]:
    """(Delta_0 P - dP/dt, P) with a finite-difference sub-Laplacian of step h.

    dP/dt is integrated directly on the same grid, and all evaluations share
    that grid so that quadrature error does not enter the differences.
    """
    if not t > 2 * h:
        raise ValueError("need t > 2h")
    w_ref = np.asarray(w, dtype=float)
    t_ref = t - 2 * h

    def kern(xs, zs, tt=t):
        vals = heat_kernel(xs, zs, tt, p, quad, check_tail=False, anchor=w_ref, grid_t=t_ref)
        return [v.value for v in vals]

    q = GroupPoint(y, w)
    lap = kernel_sublaplacian(kern, q, p, h, order)
    ys, ws = _points(y, w, p)
    _, grid = _heat_grid(quad or HEAT_QUAD, ws, t_ref, w_ref)
    m = 2 * p.n + 3
    val = _heat_integrals(ys, ws, t, grid, p)[0].real
    fval = _heat_integrals(ys, ws, t, grid, p, action_weight=True)[0].real
    dt = (fval / t**2 - m * val / t) / t**m
    return lap - dt, val / t**m


# ------------------------------------------------------------------ estimates

@dataclass(frozen=True)
class EstimateProbe:
    re_gamma: float
    im_gamma: float
    re_f: float
    im_bound: float | None
    re_bound: float
    f_bound: float
    ok: bool


def estimate_probe(x, z, tau, eps: float, p: AnisotropyParams, c1: float | None = None,
                   c2: float = 0.125) -> EstimateProbe:
    """gamma and f at tau + i eps z/|z| against |Im gamma| <= c1 eps |x|^2,
    Re gamma >= c2 |x|^2 and Re f >= c2 (|x|^2 + eps |z|)."""
    x = np.asarray(x, dtype=float)
    z = np.asarray(z, dtype=float)
    w = ShiftedTau.for_point(tau, z, eps).w
    g = complex(gamma_part(x, w, p))
    f = complex(complex_action(x, z, w, p))
    x2 = float(x @ x)
    im_bound = None if c1 is None else c1 * eps * x2
    re_bound = c2 * x2
    f_bound = c2 * (x2 + eps * float(np.linalg.norm(z)))
    ok = g.real >= re_bound and f.real >= f_bound
    if im_bound is not None:
        ok = ok and abs(g.imag) <= im_bound
    return EstimateProbe(g.real, g.imag, f.real, im_bound, re_bound, f_bound, bool(ok))


def fit_estimate_constants(x, z, tau, eps: float, p: AnisotropyParams, margin: float = 2.0):
    """(c1, c2) from samples: the observed extreme ratios widened by ``margin``.

    ``x``, ``z``, ``tau`` are stacked (S, 4n), (S, 3), (S, 3).
    """
    x = np.asarray(x, dtype=float)
    z = np.asarray(z, dtype=float)
    zn = np.linalg.norm(z, axis=-1, keepdims=True)
    zt = np.where(zn > 0, z / np.where(zn > 0, zn, 1.0), 0.0)
    w = np.asarray(tau, dtype=float) + 1j * eps * zt
    g = gamma_part(x, w, p)
    f = g - 1j * np.sum(w * z, axis=-1)
    x2 = np.sum(x**2, axis=-1)
    c1 = float(np.max(np.abs(g.imag) / (eps * x2))) * margin
    c2 = min(float(np.min(g.real / x2)), float(np.min(f.real / (x2 + eps * zn[:, 0])))) / margin
    return c1, c2


def time_integral_check(f: float, n: int) -> tuple[float, float]:
    """(numeric int_0^inf u^{-2n-3} e^{-f/u} du, Gamma(2n+2) / f^{2n+2}) for real f > 0."""
    if not f > 0:
        raise ValueError("f must be positive")
    val, _ = quad(lambda u: u ** (-2 * n - 3) * np.exp(-f / u), 0, np.inf, epsabs=0, epsrel=1e-12,
                  limit=200)
    return float(val), math.gamma(2 * n + 2) / f ** (2 * n + 2)
