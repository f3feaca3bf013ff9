"""Data behind the mu-graph, the (0, z) geodesic picture and the tilted mu-equation.

Everything here returns arrays and plain dictionaries; ``write_*`` helpers
emit CSV and JSON.  Plotting is left to external tools.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .algebra import AnisotropyParams
from .connectivity import (
    connect_zero_z, mu, mu_critical, q2_mixed_closure, q2_reduced_equation, tilted_mu_roots,
)
from .curves import write_curve_csv

__all__ = [
    "mu_samples", "level_crossings", "fig1_data", "fig3_data", "an30_params", "an30_data",
    "write_figures", "scan_count", "FIG1_LEVELS", "FIG3_INDICES", "AN30_INDICES",
]

FIG1_LEVELS = (1.0, 4.0, 5.0, 8.0, 12.0)
FIG3_INDICES = (1, 2, 5)
AN30_INDICES = (1, 2, 50)
AN30_E2 = 5.0
AN30_X1 = (1.0, 0.5, 0.0, 0.0)
AN30_Z1 = 2.5


def mu_samples(max_branch: int = 3, per_branch: int = 2000, gap: float = 1e-2,
               symmetric: bool = True) -> np.ndarray:
    """(t, mu(t)) on every branch up to ``max_branch``, keeping ``gap`` away from the poles.

    With ``symmetric`` the negative half is included (mu is odd).
    """
    pieces = []
    for m in range(max_branch + 1):
        lo = m * np.pi + (gap if m else 0.0)
        t = np.linspace(lo, (m + 1) * np.pi - gap, per_branch)
        pieces.append(t)
    t = np.concatenate(pieces)
    if symmetric:
        t = np.concatenate([-t[::-1], t[t > 0]])
    return np.column_stack([t, mu(t)])


def level_crossings(level: float, slope: float = 0.0, max_branch: int = 3) -> dict:
    """Roots of mu(t) = level - slope t for t > 0 per branch, with counts."""
    roots = tilted_mu_roots(level, slope, max_branch)
    return {
        "level": level,
        "slope": slope,
        "roots": [r.tolist() for r in roots],
        "counts": [int(r.size) for r in roots],
        "total": int(sum(r.size for r in roots)),
    }


def scan_count(level: float, slope: float = 0.0, max_branch: int = 3, num: int = 10**6) -> int:
    """Sign changes of mu(t) + slope t - level on a uniform grid over (0, (max_branch+1) pi).

    mu tends to +infinity on both sides of each pole, so a pole never produces
    a spurious sign change.
    """
    t = np.linspace(0.0, (max_branch + 1) * np.pi, num + 2)[1:-1]
    s = np.sin(t)
    with np.errstate(divide="ignore", invalid="ignore"):
        g = (t - s * np.cos(t)) / s**2 + slope * t - level
    ok = np.isfinite(g)
    g = g[ok]
    return int(np.count_nonzero(np.signbit(g[:-1]) != np.signbit(g[1:])))


def fig1_data(levels=FIG1_LEVELS, max_branch: int = 3) -> dict:
    """mu samples, the critical values mu(c_m) and level crossings."""
    crit = [mu_critical(m) for m in range(1, max_branch + 1)]
    return {
        "samples": mu_samples(max_branch),
        "critical": [{"branch": m, "c": c, "mu": v} for m, (c, v) in enumerate(crit, start=1)],
        "crossings": [level_crossings(lv, 0.0, max_branch) for lv in levels],
    }


def fig3_data(indices=FIG3_INDICES, num: int = 1001) -> list:
    """(0, z) geodesics for n = 1, a = 1, z = (1, 0, 0), direction (1, 1, 0, 0)/sqrt 2."""
    p = AnisotropyParams.isotropic(1)
    direction = np.array([[1.0, 1.0, 0.0, 0.0]]) / np.sqrt(2)
    out = []
    for k in indices:
        sol = connect_zero_z([1.0, 0.0, 0.0], (k,), p, directions=direction)
        out.append((k, sol, sol.curve(num)))
    return out


def an30_params() -> AnisotropyParams:
    return AnisotropyParams(np.array([[1.0, 1.3], [1.0, 1.0], [1.0, 1.0]]))


def an30_data(indices=AN30_INDICES, e2: float = AN30_E2, max_branch: int = 3,
              per_branch: int = 2000) -> dict:
    """Reduced Q^2 equation mu(t) = level - slope(n) t for each index n.

    The second block is at rest at both ends with energy ``e2``.  Also reports
    the consistent energy from the closure, which is positive only for small n.
    """
    p = an30_params()
    x1 = np.array(AN30_X1)
    rows = []
    for n in indices:
        level, slope = q2_reduced_equation(x1, AN30_Z1, e2, n, p)
        vt, e2c = q2_mixed_closure(x1, AN30_Z1, n, p)
        rows.append({
            "index": n,
            **level_crossings(level, slope, max_branch),
            "closure_theta1": vt,
            "closure_e2": e2c,
        })
    base = level_crossings(rows[0]["level"], 0.0, max_branch)
    t = mu_samples(max_branch, per_branch, symmetric=False)
    return {"params": p.to_dict(), "x1": list(AN30_X1), "z1": AN30_Z1, "e2": e2,
            "samples": t, "unperturbed": base, "equations": rows}


def _write_json(path: Path, data) -> None:
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def write_figures(out_dir, which=("fig1", "fig3", "an30")) -> list[Path]:
    """Write the CSV/JSON files for the requested figures; returns the paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    if "fig1" in which:
        d = fig1_data()
        path = out / "fig1_mu.csv"
        np.savetxt(path, d["samples"], delimiter=",", header="t,mu", comments="", fmt="%.17g")
        written.append(path)
        path = out / "fig1_crossings.json"
        _write_json(path, {"critical": d["critical"], "crossings": d["crossings"]})
        written.append(path)
    if "fig3" in which:
        meta = []
        for k, sol, curve in fig3_data():
            path = out / f"fig3_k{k}.csv"
            write_curve_csv(path, curve)
            written.append(path)
            meta.append({"index": k, **sol.to_dict()})
        path = out / "fig3_solutions.json"
        _write_json(path, meta)
        written.append(path)
    if "an30" in which:
        d = an30_data()
        samples = d.pop("samples")
        cols = [samples[:, 0], samples[:, 1]]
        header = ["t", "mu"]
        for row in d["equations"]:
            cols.append(row["level"] - row["slope"] * samples[:, 0])
            header.append(f"rhs_n{row['index']}")
        path = out / "an30_curves.csv"
        np.savetxt(path, np.column_stack(cols), delimiter=",", header=",".join(header),
                   comments="", fmt="%.17g")
        written.append(path)
        path = out / "an30_roots.json"
        _write_json(path, d)
        written.append(path)
    return written
