"""Command-line interface: ``qcarnot {geodesic,mu,kernel,verify,figures}``.

Exit codes: 0 success, 1 verification failure, 2 bad configuration,
3 no geodesic within the caps.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import kernels as K
from .algebra import AnisotropyParams, GroupPoint
from .connectivity import check_solution, enumerate_geodesics, mu, tilted_mu_roots
from .curves import write_curve_csv
from .figures import mu_samples, write_figures
from .geodesics import GeodesicIVP, endpoint, geodesic_curve, residual_battery
from .verify import SUITES, report_json, run_all

EXIT_OK, EXIT_VERIFY, EXIT_CONFIG, EXIT_NO_SOLUTION = 0, 1, 2, 3

RAY_LAMBDAS = (0.5, 0.7071067811865476, 1.0, 1.4142135623730951, 2.0)


class ConfigError(Exception):
    pass


# ------------------------------------------------------------------ loaders

def _json_arg(value):
    """Inline JSON or a path to a JSON file."""
    if value is None:
        return None
    text = value.strip()
    if text[:1] in "[{" or text[:1].isdigit() or text[:1] == "-":
        try:
            return json.loads(text)
        except json.JSONDecodeError:
            pass
    path = Path(value)
    if not path.exists():
        raise ConfigError(f"{value}: no such file and not valid JSON")
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{value}: {exc}") from None


def load_params(value, default_n: int = 1) -> AnisotropyParams:
    if value is None:
        return AnisotropyParams.isotropic(default_n)
    try:
        return AnisotropyParams.from_dict(_json_arg(value))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad params: {exc}") from None


def load_points(value) -> list[GroupPoint]:
    """A point {"x": .., "z": ..}, a list of them, or {"points": [...]}."""
    data = _json_arg(value)
    if isinstance(data, dict) and "points" in data:
        data = data["points"]
    if isinstance(data, dict):
        data = [data]
    try:
        return [GroupPoint.from_dict(d) for d in data]
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad point: {exc}") from None


def load_quad(value) -> K.QuadratureSpec | None:
    if value is None:
        return None
    try:
        return K.QuadratureSpec.from_dict(_json_arg(value))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad quadrature spec: {exc}") from None


def _vector(text, size=None, name="vector") -> np.ndarray:
    try:
        v = np.array([float(t) for t in str(text).replace(",", " ").split()])
    except ValueError:
        raise ConfigError(f"bad {name}: {text!r}") from None
    if size is not None:
        if v.size == 1:
            v = np.full(size, v[0])
        if v.size != size:
            raise ConfigError(f"{name} needs {size} entries, got {v.size}")
    return v


def _write_json(path: Path, data) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def _out_dir(args) -> Path:
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


# ------------------------------------------------------------------ commands

def cmd_geodesic_ivp(args) -> int:
    p = load_params(args.params)
    theta = _vector(args.theta, 3, "theta")
    v0 = _vector(args.v0, 4 * p.n, "v0") if args.v0 else np.eye(4 * p.n)[0]
    iv = GeodesicIVP(v0, theta)
    out = Path(args.out or "curve.csv")
    out.parent.mkdir(parents=True, exist_ok=True)
    write_curve_csv(out, geodesic_curve(iv, p, args.samples))
    speed_sq = float(iv.v0 @ iv.v0)
    _write_json(out.with_suffix(".json"), {
        "params": p.to_dict(), "v0": iv.v0.tolist(), "theta": iv.theta.tolist(),
        "samples": args.samples, "endpoint": endpoint(iv, p).to_dict(),
        "length": np.sqrt(speed_sq), "energy": 0.5 * speed_sq,
        "battery": residual_battery(iv, p).to_dict(),
    })
    print(f"wrote {out} and {out.with_suffix('.json')}")
    return EXIT_OK


def cmd_geodesic_connect(args) -> int:
    p = load_params(args.params)
    pts = load_points(args.target)
    if len(pts) != 1:
        raise ConfigError("connect takes a single target point")
    target = pts[0]
    if target.n != p.n:
        raise ConfigError(f"target has n = {target.n}, params have n = {p.n}")
    res = enumerate_geodesics(target, p, args.max_branch, args.max_index)
    out = Path(args.out or "solutions.json")
    curve_dir = Path(args.emit_curves) if args.emit_curves else None
    if curve_dir is not None:
        curve_dir.mkdir(parents=True, exist_ok=True)
    sols = []
    for i, sol in enumerate(res):
        entry = sol.to_dict()
        chk = check_solution(sol)
        if args.tol is not None:
            chk["ok"] = bool(chk["ok"] and sol.endpoint_error <= args.tol)
        entry["checks"] = chk
        if curve_dir is not None:
            path = curve_dir / f"solution_{i:03d}.csv"
            write_curve_csv(path, sol.curve(args.samples))
            entry["curve"] = str(path)
        sols.append(entry)
    _write_json(out, {
        "params": p.to_dict(), "target": target.to_dict(), "case": res.case.value,
        "max_branch": args.max_branch, "max_index": args.max_index,
        "truncated": res.truncated,
        "note": "truncated infinite family" if res.truncated else "complete",
        "count": len(sols), "solutions": sols,
    })
    print(f"{len(sols)} solution(s), case {res.case.value}"
          + (" (truncated infinite family)" if res.truncated else ""))
    if not sols:
        return EXIT_NO_SOLUTION
    if not all(s["checks"]["ok"] for s in sols):
        print("warning: some solutions failed their checks", file=sys.stderr)
    return EXIT_OK


def cmd_mu(args) -> int:
    out = _out_dir(args)
    samples = mu_samples(args.max_branch, args.per_branch)
    np.savetxt(out / "mu.csv", samples, delimiter=",", header="t,mu", comments="", fmt="%.17g")
    levels = []
    for level in args.level:
        roots = tilted_mu_roots(level, args.slope, args.max_branch)
        levels.append({
            "level": level, "slope": args.slope,
            "roots": [r.tolist() for r in roots],
            "counts": [int(r.size) for r in roots],
            "total": int(sum(r.size for r in roots)),
            "mu_at_roots": [mu(r).tolist() for r in roots],
        })
    _write_json(out / "roots.json", {"max_branch": args.max_branch, "levels": levels})
    for d in levels:
        print(f"level {d['level']:g}, slope {d['slope']:g}: counts {d['counts']}")
    return EXIT_OK


def _kernel_points(args) -> list[GroupPoint]:
    """--point alone, --grid holding points, or --point dilated along a ray."""
    lams = None
    if args.grid == "ray":
        lams = RAY_LAMBDAS
    elif args.grid is not None:
        spec = _json_arg(args.grid)
        if not (isinstance(spec, dict) and "lambdas" in spec):
            return load_points(args.grid)
        lams = [float(v) for v in spec["lambdas"]]
    if args.point is None:
        raise ConfigError("--point is required")
    base = load_points(args.point)
    if lams is None:
        return base
    return [GroupPoint(lam * q.x, lam**2 * q.z) for q in base for lam in lams]


def cmd_kernel(args) -> int:
    p = load_params(args.params)
    pts = _kernel_points(args)
    if any(q.n != p.n for q in pts):
        raise ConfigError("point dimension does not match the parameters")
    quad = load_quad(args.quad)
    rows = []
    for q in pts:
        if args.kind == "green":
            eps = "auto" if args.eps == "auto" else float(args.eps)
            v = K.green_function(q.x, q.z, p, eps=eps, quad=quad)
            rows.append([*q.x, *q.z, v.value, v.imag, v.tail])
        else:
            if args.t is None:
                raise ConfigError("heat needs --t")
            v = K.heat_kernel(q.x, q.z, args.t, p, quad=quad)
            rows.append([*q.x, *q.z, args.t, v.value, v.imag, v.tail])
    cols = [f"x_{k}{l}" for l in range(1, p.n + 1) for k in range(1, 5)] + ["z_1", "z_2", "z_3"]
    if args.kind == "heat":
        cols.append("t")
    cols += ["value", "imag_diagnostic", "tail_estimate"]
    out = Path(args.out or f"{args.kind}.csv")
    out.parent.mkdir(parents=True, exist_ok=True)
    np.savetxt(out, np.array(rows), delimiter=",", header=",".join(cols), comments="", fmt="%.17g")
    print(f"wrote {len(rows)} value(s) to {out}")
    return EXIT_OK


def _apply_tol(results, overrides):
    """Replace tolerances; keys are "check" or "suite.check"."""
    for res in results:
        for c in res.checks:
            for key in (f"{res.name}.{c.name}", c.name):
                if key in overrides:
                    c.tol = overrides[key]
                    break


def _parse_tol(items) -> dict:
    out = {}
    for item in items or []:
        key, sep, val = item.partition("=")
        if not sep:
            raise ConfigError(f"--tol expects NAME=VALUE, got {item!r}")
        try:
            out[key.strip()] = float(val)
        except ValueError:
            raise ConfigError(f"bad tolerance {val!r}") from None
    return out


def cmd_verify(args) -> int:
    names = list(SUITES) if args.suite == "all" else [args.suite]
    if args.suite != "all" and args.suite not in SUITES:
        raise ConfigError(f"unknown suite {args.suite!r}; choose from all, {', '.join(SUITES)}")
    overrides = _parse_tol(args.tol)

    def progress(res):
        status = "PASS" if res.passed else "FAIL " + ",".join(res.failed)
        print(f"{res.name:14s} {status}", file=sys.stderr)

    results = run_all(args.seed, names, progress)
    _apply_tol(results, overrides)
    report = report_json(results, args.seed)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(report)
    else:
        sys.stdout.write(report)
    failed = [f"{r.name}.{c}" for r in results for c in r.failed]
    if failed:
        print("failed: " + ", ".join(failed), file=sys.stderr)
        return EXIT_VERIFY
    return EXIT_OK


def cmd_figures(args) -> int:
    paths = write_figures(args.out or "figures", args.which)
    for path in paths:
        print(path)
    return EXIT_OK


# ------------------------------------------------------------------ parser

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="qcarnot", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    geo = sub.add_parser("geodesic", help="geodesic initial and boundary value problems")
    gsub = geo.add_subparsers(dest="mode", required=True)
    ivp = gsub.add_parser("ivp", help="integrate from the origin with given v0 and theta")
    ivp.add_argument("--params")
    ivp.add_argument("--v0", help="initial velocity, 4n numbers (default e_1)")
    ivp.add_argument("--theta", default="0", help="three multipliers, or one for all")
    ivp.add_argument("--samples", type=int, default=1001)
    ivp.add_argument("--out", help="curve CSV (default curve.csv); the sidecar gets .json")
    ivp.set_defaults(func=cmd_geodesic_ivp)
    con = gsub.add_parser("connect", help="all geodesics from the origin to a target")
    con.add_argument("--params")
    con.add_argument("--target", "--point", dest="target", required=True,
                     help='JSON {"x": [...], "z": [...]} or a file holding it')
    con.add_argument("--max-branch", type=int, default=2)
    con.add_argument("--max-index", type=int, default=3)
    con.add_argument("--tol", type=float, help="endpoint tolerance for the ok flag")
    con.add_argument("--emit-curves", metavar="DIR", help="write one curve CSV per solution here")
    con.add_argument("--samples", type=int, default=1001)
    con.add_argument("--out", help="solutions JSON (default solutions.json)")
    con.set_defaults(func=cmd_geodesic_connect)

    mup = sub.add_parser("mu", help="mu samples and roots of mu(t) = level - slope t")
    mup.add_argument("--level", type=float, action="append", default=None)
    mup.add_argument("--slope", type=float, default=0.0)
    mup.add_argument("--max-branch", type=int, default=3)
    mup.add_argument("--per-branch", type=int, default=2000)
    mup.add_argument("--out")
    mup.set_defaults(func=cmd_mu)

    ker = sub.add_parser("kernel", help="heat kernel or Green's function values")
    ker.add_argument("kind", choices=["heat", "green"])
    ker.add_argument("--params")
    ker.add_argument("--point")
    ker.add_argument("--grid", help='"ray", {"lambdas": [...]} or a list of points')
    ker.add_argument("--t", type=float)
    ker.add_argument("--eps", default="auto")
    ker.add_argument("--quad")
    ker.add_argument("--out")
    ker.set_defaults(func=cmd_kernel)

    ver = sub.add_parser("verify", help="run verification suites")
    ver.add_argument("suite", nargs="?", default="all", help="all or one of: " + ", ".join(SUITES))
    ver.add_argument("--seed", type=int, default=0)
    ver.add_argument("--tol", action="append", help="override a tolerance, NAME=VALUE")
    ver.add_argument("--out")
    ver.set_defaults(func=cmd_verify)

    fig = sub.add_parser("figures", help="CSV/JSON data behind the figures")
    fig.add_argument("--which", nargs="+", default=["fig1", "fig3", "an30"],
                     choices=["fig1", "fig3", "an30"])
    fig.add_argument("--out")
    fig.set_defaults(func=cmd_figures)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "level", 0) is None:
        args.level = [1.0]
    try:
        return args.func(args)
    except (ConfigError, ValueError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
