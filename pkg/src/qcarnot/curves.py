"""Uniformly sampled curves in Q^n: residuals, lengths, energies, translation."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.integrate import trapezoid

from .algebra import AnisotropyParams, GroupPoint, _bilinear, a_norm_sq

__all__ = [
    "SampledCurve", "derivative", "second_derivative", "horizontality_residual",
    "acceleration_residual", "horizontal_length", "kinetic_energies",
    "left_translate_curve", "counterexample_curve", "straight_line",
    "write_curve_csv", "read_curve_csv", "curve_csv_header", "polygon_length",
    "extrapolated_length",
]

DEFAULT_SAMPLES = 1001


def _floats(values):
    v = np.asarray(values)
    return v if v.dtype == np.longdouble else v.astype(float)


@dataclass(frozen=True, eq=False)
class SampledCurve:
    """Samples (x(s_i), z(s_i)) on a uniform grid s_0 < ... < s_{N-1}."""

    s: np.ndarray
    x: np.ndarray
    z: np.ndarray

    def __post_init__(self):
        s = np.array(self.s, dtype=float).reshape(-1)
        x = np.array(self.x, dtype=float)
        z = np.array(self.z, dtype=float)
        if s.size < 3:
            raise ValueError("a sampled curve needs at least 3 samples")
        if x.ndim != 2 or x.shape[0] != s.size or x.shape[1] % 4:
            raise ValueError("x must have shape (N, 4n)")
        if z.shape != (s.size, 3):
            raise ValueError("z must have shape (N, 3)")
        if np.any(np.diff(s) <= 0):
            raise ValueError("curve parameter must be strictly increasing")
        for arr in (s, x, z):
            arr.setflags(write=False)
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "z", z)

    def __len__(self):
        return self.s.size

    @property
    def n(self) -> int:
        return self.x.shape[1] // 4

    def point(self, i: int) -> GroupPoint:
        return GroupPoint(self.x[i], self.z[i])

    @property
    def points(self) -> list[GroupPoint]:
        return [self.point(i) for i in range(len(self))]

    @property
    def step(self) -> float:
        """Uniform grid spacing; raises if the grid is not uniform."""
        ds = np.diff(self.s)
        h = (self.s[-1] - self.s[0]) / (self.s.size - 1)
        if np.max(np.abs(ds - h)) > 1e-9 * max(1.0, abs(h)):
            raise ValueError("curve grid is not uniform")
        return float(h)


# one-sided end stencils of order 4, so the interior O(h^2) term dominates
_D1_END = np.array([-25, 48, -36, 16, -3])          # / 12
_D2_END = np.array([45, -154, 214, -156, 61, -10])   # / 12


def derivative(values: np.ndarray, h: float) -> np.ndarray:
    """First derivative along axis 0: central differences inside, one-sided at the ends."""
    v = _floats(values)
    if v.shape[0] < len(_D1_END):
        return np.gradient(v, h, axis=0, edge_order=2)
    out = np.empty_like(v)
    out[1:-1] = (v[2:] - v[:-2]) / 2
    k = len(_D1_END)
    c = _D1_END.astype(v.dtype)
    out[0] = np.tensordot(c, v[:k], axes=1) / 12
    out[-1] = -np.tensordot(c, v[::-1][:k], axes=1) / 12
    return out / h


def second_derivative(values: np.ndarray, h: float) -> np.ndarray:
    """Second derivative along axis 0: 3-point central inside, one-sided at the ends."""
    v = _floats(values)
    if v.shape[0] < 4:
        raise ValueError("need at least 4 samples for a second derivative")
    out = np.empty_like(v)
    out[1:-1] = v[2:] - 2 * v[1:-1] + v[:-2]
    if v.shape[0] < len(_D2_END):
        out[0] = 2 * v[0] - 5 * v[1] + 4 * v[2] - v[3]
        out[-1] = 2 * v[-1] - 5 * v[-2] + 4 * v[-3] - v[-4]
    else:
        k = len(_D2_END)
        c = _D2_END.astype(v.dtype)
        out[0] = np.tensordot(c, v[:k], axes=1) / 12
        out[-1] = np.tensordot(c, v[::-1][:k], axes=1) / 12
    return out / (h * h)


def horizontality_residual(c: SampledCurve, p: AnisotropyParams) -> np.ndarray:
    """r_m(s_i) = zdot_m - 1/2 (M_m x, xdot); shape (N, 3)."""
    h = c.step
    xdot = derivative(c.x, h)
    zdot = derivative(c.z, h)
    return zdot - 0.5 * _bilinear(c.x, xdot, p)


def acceleration_residual(c: SampledCurve, p: AnisotropyParams) -> np.ndarray:
    """zddot_m - 1/2 (M_m x, xddot); vanishes (to O(h^2)) on horizontal curves."""
    h = c.step
    return second_derivative(c.z, h) - 0.5 * _bilinear(c.x, second_derivative(c.x, h), p)


def horizontal_length(c: SampledCurve) -> float:
    """Trapezoid rule for the integral of |xdot|."""
    speed = np.linalg.norm(derivative(c.x, c.step), axis=1)
    return float(trapezoid(speed, c.s))


def polygon_length(x) -> float:
    """Sum of chord lengths |x_{i+1} - x_i|."""
    return float(np.sum(np.linalg.norm(np.diff(np.asarray(x, dtype=float), axis=0), axis=1)))


def extrapolated_length(x) -> float:
    """Richardson-extrapolated polygon length from all samples and every second one.

    The chord error is O(h^2), so (4 L_h - L_2h) / 3 is O(h^4).  Needs an odd
    number of uniform samples.
    """
    x = np.asarray(x, dtype=float)
    if x.shape[0] % 2 == 0 or x.shape[0] < 3:
        raise ValueError("need an odd number of samples")
    return (4 * polygon_length(x) - polygon_length(x[::2])) / 3


def kinetic_energies(c: SampledCurve, p: AnisotropyParams) -> np.ndarray:
    """Columns (E, E_1, E_2, E_3) = (|xdot|^2 / 2, |xdot|^2_{A_m} / 2) per sample."""
    xdot = derivative(c.x, c.step)
    e = 0.5 * np.sum(xdot**2, axis=1)
    em = 0.5 * a_norm_sq(xdot, p)
    return np.column_stack([e, em])


def left_translate_curve(q: GroupPoint, c: SampledCurve, p: AnisotropyParams) -> SampledCurve:
    """Pointwise q o c(s_i)."""
    z = c.z + q.z + 0.5 * _bilinear(np.broadcast_to(q.x, c.x.shape), c.x, p)
    return SampledCurve(c.s, c.x + q.x, z)


def straight_line(x, s=None, z=None) -> SampledCurve:
    """(s x, z) sampled on ``s`` (default: 1001 points on [0, 1])."""
    x = np.asarray(x, dtype=float)
    s = np.linspace(0.0, 1.0, DEFAULT_SAMPLES) if s is None else np.asarray(s, dtype=float)
    zz = np.zeros((s.size, 3)) if z is None else np.outer(s, np.asarray(z, dtype=float))
    return SampledCurve(s, np.outer(s, x), zz)


def counterexample_curve(s, p: AnisotropyParams, c1: float = 0.0, c2: float = 0.0) -> SampledCurve:
    """(s^2/2, s, s^2/2, s, 0, ..., 0, a_11 s^3 / 6, c1, c2): horizontal, not a geodesic."""
    s = np.asarray(s, dtype=float)
    x = np.zeros((s.size, 4 * p.n))
    x[:, 0] = s**2 / 2
    x[:, 1] = s
    x[:, 2] = s**2 / 2
    x[:, 3] = s
    z = np.column_stack([p.a[0, 0] * s**3 / 6, np.full_like(s, c1), np.full_like(s, c2)])
    return SampledCurve(s, x, z)


def curve_csv_header(n: int) -> list[str]:
    cols = ["s"]
    cols += [f"x_{k}{l}" for l in range(1, n + 1) for k in range(1, 5)]
    cols += ["z_1", "z_2", "z_3"]
    return cols


def write_curve_csv(path, c: SampledCurve) -> None:
    data = np.column_stack([c.s, c.x, c.z])
    header = ",".join(curve_csv_header(c.n))
    np.savetxt(Path(path), data, delimiter=",", header=header, comments="", fmt="%.17g")


def read_curve_csv(path) -> SampledCurve:
    path = Path(path)
    with path.open() as fh:
        header = fh.readline().strip().split(",")
    ncols = len(header)
    if (ncols - 4) % 4 or header[0] != "s":
        raise ValueError(f"{path}: not a curve CSV")
    n = (ncols - 4) // 4
    if header != curve_csv_header(n):
        raise ValueError(f"{path}: unexpected curve CSV header")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return SampledCurve(data[:, 0], data[:, 1:1 + 4 * n], data[:, 1 + 4 * n:])
