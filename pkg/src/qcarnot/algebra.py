"""Quaternions, the anisotropic block matrices and the group law of Q^n.

Coordinates are block-major: ``x[4*l + k]`` is the coordinate ``x_{k+1, l+1}``.
All indices in this module are zero-based, so ``m`` runs over ``0, 1, 2`` and
``l`` over ``0 .. n-1``.

Block-diagonal ``4n x 4n`` operators are stored as arrays of shape ``(n, 4, 4)``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "UNIT", "QUAT_MATRICES", "Quaternion", "quat_mul", "AnisotropyParams",
    "GroupPoint", "Momentum", "block_matrix", "theta_matrix", "theta_norms",
    "theta_norm", "block_apply", "block_dense", "a_norm_sq", "group_mul",
    "group_inv", "frame", "structure_constants", "dual_form", "dilate",
    "homogeneous_norm", "sublaplacian_apply", "sublaplacian_stencil",
    "sublaplacian_coordinates",
]

UNIT = np.eye(4)

# M_1, M_2, M_3 as real 4x4 matrices; row-major exactly as tabulated.
QUAT_MATRICES = np.array([
    [[0, 1, 0, 0],
     [-1, 0, 0, 0],
     [0, 0, 0, 1],
     [0, 0, -1, 0]],
    [[0, 0, 0, -1],
     [0, 0, -1, 0],
     [0, 1, 0, 0],
     [1, 0, 0, 0]],
    [[0, 0, -1, 0],
     [0, 0, 0, 1],
     [1, 0, 0, 0],
     [0, -1, 0, 0]],
], dtype=float)
for _mat in QUAT_MATRICES:
    _mat.setflags(write=False)
QUAT_MATRICES.setflags(write=False)


@dataclass(frozen=True)
class Quaternion:
    """h = a + b i + c j + d k."""

    a: float
    b: float = 0.0
    c: float = 0.0
    d: float = 0.0

    @property
    def real(self) -> float:
        return self.a

    @property
    def vector(self) -> np.ndarray:
        return np.array([self.b, self.c, self.d], dtype=float)

    def conj(self) -> "Quaternion":
        return Quaternion(self.a, -self.b, -self.c, -self.d)

    def norm(self) -> float:
        return float(np.sqrt(self.a**2 + self.b**2 + self.c**2 + self.d**2))

    def as_array(self) -> np.ndarray:
        return np.array([self.a, self.b, self.c, self.d], dtype=float)

    def __mul__(self, other: "Quaternion") -> "Quaternion":
        return quat_mul(self, other)


def quat_mul(h: Quaternion, q: Quaternion) -> Quaternion:
    """Grassmann product (a t - u.v) + (a v + t u + u x v)."""
    u, v = h.vector, q.vector
    scalar = h.a * q.a - float(u @ v)
    vec = h.a * v + q.a * u + np.cross(u, v)
    return Quaternion(scalar, *map(float, vec))


@dataclass(frozen=True, eq=False)
class AnisotropyParams:
    """The 3 x n matrix of strictly positive anisotropy constants a_{ml}."""

    a: np.ndarray

    def __post_init__(self):
        a = np.array(self.a, dtype=float, copy=True)
        if a.ndim == 1:
            a = a.reshape(3, 1)
        if a.ndim != 2 or a.shape[0] != 3 or a.shape[1] < 1:
            raise ValueError(f"anisotropy matrix must have shape (3, n), got {a.shape}")
        if not np.all(np.isfinite(a)) or np.any(a <= 0):
            raise ValueError("all anisotropy constants a_ml must be finite and > 0")
        a.setflags(write=False)
        object.__setattr__(self, "a", a)

    @classmethod
    def isotropic(cls, n: int, value: float = 1.0) -> "AnisotropyParams":
        return cls(np.full((3, n), float(value)))

    @classmethod
    def from_dict(cls, data: dict) -> "AnisotropyParams":
        a = np.asarray(data["a"], dtype=float)
        n = int(data["n"])
        if a.shape != (3, n):
            raise ValueError(f"'a' must be a 3 x {n} array, got shape {a.shape}")
        return cls(a)

    @classmethod
    def from_json(cls, path) -> "AnisotropyParams":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self) -> dict:
        return {"n": self.n, "a": self.a.tolist()}

    @property
    def n(self) -> int:
        return self.a.shape[1]

    @property
    def dim(self) -> int:
        """Topological dimension 4n + 3."""
        return 4 * self.n + 3

    @property
    def homogeneous_dim(self) -> int:
        return 4 * self.n + 6

    @property
    def a_max_sq(self) -> float:
        return float(np.max(self.a) ** 2)

    @property
    def a_min_sq(self) -> float:
        return float(np.min(self.a) ** 2)

    @property
    def a_sq(self) -> np.ndarray:
        return self.a**2

    def __eq__(self, other):
        return isinstance(other, AnisotropyParams) and np.array_equal(self.a, other.a)

    def __hash__(self):
        return hash(self.a.tobytes())

    def __repr__(self):
        return f"AnisotropyParams(a={self.a.tolist()})"


@dataclass(frozen=True, eq=False)
class GroupPoint:
    """An element (x, z) of Q^n in normal coordinates."""

    x: np.ndarray
    z: np.ndarray

    def __post_init__(self):
        x = np.array(self.x, dtype=float, copy=True).reshape(-1)
        z = np.array(self.z, dtype=float, copy=True).reshape(-1)
        if x.size % 4 or x.size == 0:
            raise ValueError("x must have length 4n")
        if z.size != 3:
            raise ValueError("z must have length 3")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(z))):
            raise ValueError("group point coordinates must be finite")
        x.setflags(write=False)
        z.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "z", z)

    @classmethod
    def identity(cls, n: int) -> "GroupPoint":
        return cls(np.zeros(4 * n), np.zeros(3))

    @classmethod
    def from_vector(cls, v) -> "GroupPoint":
        v = np.asarray(v, dtype=float)
        return cls(v[:-3], v[-3:])

    @classmethod
    def from_dict(cls, data: dict) -> "GroupPoint":
        return cls(data["x"], data["z"])

    def to_dict(self) -> dict:
        return {"x": self.x.tolist(), "z": self.z.tolist()}

    @property
    def n(self) -> int:
        return self.x.size // 4

    @property
    def blocks(self) -> np.ndarray:
        """x reshaped to (n, 4)."""
        return self.x.reshape(-1, 4)

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.x, self.z])

    def __eq__(self, other):
        return (isinstance(other, GroupPoint) and np.array_equal(self.x, other.x)
                and np.array_equal(self.z, other.z))

    def __hash__(self):
        return hash((self.x.tobytes(), self.z.tobytes()))

    def __repr__(self):
        return f"GroupPoint(x={self.x.tolist()}, z={self.z.tolist()})"


@dataclass(frozen=True, eq=False)
class Momentum:
    """Covector (xi, theta) of the Hamiltonian system."""

    xi: np.ndarray
    theta: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "xi", np.asarray(self.xi, dtype=float).reshape(-1))
        object.__setattr__(self, "theta", np.asarray(self.theta, dtype=float).reshape(3))


def _check_m(m: int) -> int:
    if m not in (0, 1, 2):
        raise ValueError(f"matrix index m must be 0, 1 or 2, got {m!r}")
    return m


def block_matrix(m: int, p: AnisotropyParams) -> np.ndarray:
    """Blocks a_{ml} M_m of the block-diagonal matrix bold-M_m, shape (n, 4, 4)."""
    _check_m(m)
    return p.a[m][:, None, None] * QUAT_MATRICES[m]


def theta_matrix(theta, p: AnisotropyParams) -> np.ndarray:
    """Blocks of M(theta) = sum_m theta_m M_m.

    ``theta`` may carry leading batch dimensions, ``(..., 3)``; the result then
    has shape ``(..., n, 4, 4)``. Complex theta is allowed.
    """
    theta = np.asarray(theta)
    coeff = theta[..., None, :] * p.a.T  # (..., n, 3)
    return np.einsum("...lm,mij->...lij", coeff, QUAT_MATRICES)


def theta_norms(theta, p: AnisotropyParams) -> np.ndarray:
    """|theta|_l = sqrt(sum_m theta_m^2 a_ml^2) for every block, shape (..., n)."""
    theta = np.asarray(theta)
    if theta.dtype.kind != "f":
        theta = theta.astype(float)
    return np.sqrt((theta**2) @ p.a_sq)


def theta_norm(theta, p: AnisotropyParams, l: int) -> float:
    if not 0 <= l < p.n:
        raise IndexError(f"block index {l} out of range for n={p.n}")
    return float(theta_norms(theta, p)[l])


def block_apply(blocks: np.ndarray, x) -> np.ndarray:
    """Multiply a block-diagonal operator by x of shape (..., 4n)."""
    x = np.asarray(x)
    xb = x.reshape(*x.shape[:-1], -1, 4)
    out = np.einsum("...lij,...lj->...li", blocks, xb)
    return out.reshape(*out.shape[:-2], -1)


def block_dense(blocks: np.ndarray) -> np.ndarray:
    """Dense 4n x 4n matrix from (n, 4, 4) blocks; for tests and small n only."""
    n = blocks.shape[0]
    out = np.zeros((4 * n, 4 * n), dtype=blocks.dtype)
    for l in range(n):
        out[4 * l:4 * l + 4, 4 * l:4 * l + 4] = blocks[l]
    return out


def a_norm_sq(x, p: AnisotropyParams) -> np.ndarray:
    """|x|^2_{A_m} = sum_l a_ml^2 |x_l|^2 for m = 0, 1, 2, shape (..., 3)."""
    x = np.asarray(x)
    blocks_sq = np.sum(x.reshape(*x.shape[:-1], -1, 4) ** 2, axis=-1)
    return blocks_sq @ p.a_sq.T


def _bilinear(x, y, p):
    """(M_m x, y) for m = 0, 1, 2; x and y may be batched."""
    x = np.asarray(x)
    y = np.asarray(y)
    xb = x.reshape(*x.shape[:-1], -1, 4)
    yb = y.reshape(*y.shape[:-1], -1, 4)
    # (M_m x_l) . y_l, summed over blocks with weight a_ml
    mx = np.einsum("mij,...lj->...mli", QUAT_MATRICES, xb)
    per_block = np.einsum("...mli,...li->...ml", mx, yb)
    return np.sum(per_block * p.a, axis=-1)


def group_mul(q: GroupPoint, q2: GroupPoint, p: AnisotropyParams) -> GroupPoint:
    """(x, z) o (x', z') = (x + x', z + z' + 1/2 (M_m x, x'))."""
    if q.x.size != 4 * p.n or q2.x.size != 4 * p.n:
        raise ValueError("group point dimensions do not match the parameters")
    return GroupPoint(q.x + q2.x, q.z + q2.z + 0.5 * _bilinear(q.x, q2.x, p))


def group_inv(q: GroupPoint) -> GroupPoint:
    return GroupPoint(-q.x, -q.z)


def frame(q: GroupPoint, p: AnisotropyParams) -> np.ndarray:
    """Coefficients of the left-invariant frame at q.

    Row ``4l + k`` holds X_{k+1,l+1}(q) in the coordinate basis
    (d/dx_11, ..., d/dx_4n, d/dz_1, d/dz_2, d/dz_3); rows ``4n .. 4n+2`` are Z_m.
    """
    n4 = 4 * p.n
    out = np.zeros((n4 + 3, n4 + 3))
    out[:n4, :n4] = np.eye(n4)
    for m in range(3):
        out[:n4, n4 + m] = 0.5 * block_apply(block_matrix(m, p), q.x)
    out[n4:, n4:] = np.eye(3)
    return out


def structure_constants(p: AnisotropyParams) -> np.ndarray:
    """c[i, j, m] with [X_i, X_j] = sum_m c[i, j, m] Z_m; shape (4n, 4n, 3).

    The z-coefficient of X_i is 1/2 (M_m x)_i, so the bracket is
    1/2 ((M_m)_ji - (M_m)_ij) = -(M_m)_ij.
    """
    n4 = 4 * p.n
    out = np.zeros((n4, n4, 3))
    for m in range(3):
        out[:, :, m] = -block_dense(block_matrix(m, p))
    return out


def dual_form(m: int, q: GroupPoint, v, p: AnisotropyParams) -> float:
    """theta_m(v) = v_{z_m} - 1/2 (M_m x, v_x)."""
    _check_m(m)
    v = np.asarray(v, dtype=float)
    n4 = 4 * p.n
    mx = block_apply(block_matrix(m, p), q.x)
    return float(v[n4 + m] - 0.5 * mx @ v[:n4])


def dilate(lam: float, q: GroupPoint) -> GroupPoint:
    if not lam > 0:
        raise ValueError("dilation factor must be positive")
    return GroupPoint(lam * q.x, lam**2 * q.z)


def homogeneous_norm(q: GroupPoint) -> float:
    """((|x|^2)^2 + |z|^2)^(1/4)."""
    return float((np.dot(q.x, q.x) ** 2 + np.dot(q.z, q.z)) ** 0.25)


_SECOND_DIFF = {
    2: ((1, -2, 1), (-1, 0, 1), 1.0),
    4: ((-1, 16, -30, 16, -1), (-2, -1, 0, 1, 2), 12.0),
}


def sublaplacian_stencil(q: GroupPoint, p: AnisotropyParams, h: float | None = None,
                         order: int = 4):
    """Points and weights with sum_i w_i g(points_i) approximating Delta_0 g(q).

    The operator is Delta_x + 1/4 sum_m |x|^2_{A_m} d^2/dz_m^2
    + sum_m (M_m x, grad_x) d/dz_m, which equals sum_kl D^2_{v_kl} g with
    v_kl = e_kl + 1/2 sum_m (M_m x)_kl e_{z_m} (the frame of ``frame``).
    Each second directional derivative uses a central stencil of the given
    ``order`` (2: three points, 4: five points) along the line q + t v_kl.
    ``h`` defaults to 1e-3 times the homogeneous norm of q (at least 1e-3).
    """
    if order not in _SECOND_DIFF:
        raise ValueError("order must be 2 or 4")
    if h is None:
        h = 1e-3 * max(homogeneous_norm(q), 1.0)
    if not h > 0:
        raise ValueError("step must be positive")
    weights, offsets, denom = _SECOND_DIFF[order]
    base = q.as_vector()
    fr = frame(q, p)[:4 * p.n]
    pts = [base]
    wts = [0.0]
    for v in fr:
        for w, o in zip(weights, offsets):
            if o == 0:
                wts[0] += w
            else:
                pts.append(base + o * h * v)
                wts.append(w)
    return np.array(pts), np.array(wts) / (denom * h * h)


def sublaplacian_apply(g, q: GroupPoint, p: AnisotropyParams, h: float | None = None,
                       order: int = 4) -> float:
    """Finite-difference value of the sub-Laplacian of ``g`` at ``q``.

    ``g`` takes a 1-D coordinate vector of length 4n + 3; see
    ``sublaplacian_stencil`` for the stencil.
    """
    pts, wts = sublaplacian_stencil(q, p, h, order)
    return float(sum(w * float(g(pt)) for pt, w in zip(pts, wts)))


def sublaplacian_coordinates(g, q: GroupPoint, p: AnisotropyParams, h: float = 1e-3) -> float:
    """Term-by-term second-order evaluation of the explicit coordinate form.

    Independent of ``sublaplacian_apply``: pure second differences for
    Delta_x and d^2/dz_m^2, a four-point cross stencil for the mixed terms.
    Costs O(n) more evaluations; intended as a test oracle.
    """
    base = q.as_vector()
    n4 = 4 * p.n
    dim = n4 + 3
    g0 = float(g(base))
    eye = np.eye(dim)

    def second(i):
        return (float(g(base + h * eye[i])) - 2 * g0 + float(g(base - h * eye[i]))) / h**2

    def mixed(i, j):
        e_i, e_j = h * eye[i], h * eye[j]
        return (float(g(base + e_i + e_j)) - float(g(base + e_i - e_j))
                - float(g(base - e_i + e_j)) + float(g(base - e_i - e_j))) / (4 * h * h)

    total = sum(second(i) for i in range(n4))
    weights_z = 0.25 * a_norm_sq(q.x, p)
    total += sum(weights_z[m] * second(n4 + m) for m in range(3))
    for m in range(3):
        mx = block_apply(block_matrix(m, p), q.x)
        for i in np.flatnonzero(mx):
            total += mx[i] * mixed(i, n4 + m)
    return total
