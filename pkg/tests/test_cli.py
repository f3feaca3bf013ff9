import json
import subprocess
import sys

import numpy as np
import pytest

from qcarnot.algebra import AnisotropyParams, GroupPoint
from qcarnot.cli import EXIT_CONFIG, EXIT_NO_SOLUTION, EXIT_OK, EXIT_VERIFY, RAY_LAMBDAS, main
from qcarnot.connectivity import GeodesicSolution, check_solution, mu_critical
from qcarnot.curves import read_curve_csv

P2 = {"n": 2, "a": [[1.0, 0.8], [1.2, 1.0], [0.9, 1.1]]}


def run(*argv):
    return main([str(a) for a in argv])


def test_ivp_theta_zero_is_straight_line(tmp_path):
    out = tmp_path / "line.csv"
    assert run("geodesic", "ivp", "--v0", "1 -2 0.5 0", "--theta", "0", "--samples", 51,
               "--out", out) == EXIT_OK
    c = read_curve_csv(out)
    assert np.allclose(c.x, c.s[:, None] * [1, -2, 0.5, 0], atol=1e-15)
    assert np.all(c.z == 0)
    meta = json.loads(out.with_suffix(".json").read_text())
    assert meta["length"] == pytest.approx(np.sqrt(5.25))
    assert meta["energy"] == pytest.approx(5.25 / 2)
    assert meta["battery"]["ok"] and meta["theta"] == [0, 0, 0]


def test_ivp_sidecar_round_trips(tmp_path):
    out = tmp_path / "c.csv"
    run("geodesic", "ivp", "--params", json.dumps(P2), "--v0", "1 0 0.2 0 0 0.5 0 0",
        "--theta", "0.3 -0.2 0.7", "--out", out)
    meta = json.loads(out.with_suffix(".json").read_text())
    c = read_curve_csv(out)
    end = GroupPoint.from_dict(meta["endpoint"])
    assert np.allclose(c.x[-1], end.x, atol=1e-13) and np.allclose(c.z[-1], end.z, atol=1e-13)
    assert np.array_equal(AnisotropyParams.from_dict(meta["params"]).a, np.array(P2["a"]))


def test_connect_x_only_single_solution(tmp_path):
    out = tmp_path / "s.json"
    assert run("geodesic", "connect", "--target", '{"x": [1, 2, 0, 0], "z": [0, 0, 0]}',
               "--out", out) == EXIT_OK
    d = json.loads(out.read_text())
    assert d["count"] == 1 and d["case"] == "X_ONLY" and not d["truncated"]
    assert d["solutions"][0]["length"] == pytest.approx(np.sqrt(5))


def test_connect_z_only_truncated_family(tmp_path, capsys):
    out = tmp_path / "s.json"
    curves = tmp_path / "curves"
    target = tmp_path / "target.json"
    target.write_text(json.dumps({"x": [0, 0, 0, 0], "z": [1, 0, 0]}))
    assert run("geodesic", "connect", "--target", target, "--max-index", 5,
               "--emit-curves", curves, "--samples", 201, "--out", out) == EXIT_OK
    assert "truncated infinite family" in capsys.readouterr().out
    d = json.loads(out.read_text())
    assert d["count"] == 5 and d["truncated"] and d["note"] == "truncated infinite family"
    lengths = [s["length"] for s in d["solutions"]]
    assert lengths == pytest.approx(np.sqrt(4 * np.pi * np.arange(1, 6)))
    for entry in d["solutions"]:
        c = read_curve_csv(entry["curve"])
        assert np.allclose(c.z[-1], [1, 0, 0], atol=1e-10)
        assert entry["checks"]["ok"]


def test_solutions_round_trip_through_loader(tmp_path):
    out = tmp_path / "s.json"
    run("geodesic", "connect", "--params", json.dumps(P2), "--target",
        '{"x": [0.5, 0.1, -0.3, 0.2, 0.4, 0, 0.1, -0.2], "z": [0.1, -0.05, 0.2]}',
        "--max-branch", 1, "--out", out)
    d = json.loads(out.read_text())
    assert d["count"] >= 1
    for entry in d["solutions"]:
        sol = GeodesicSolution.from_dict(entry)
        assert sol.to_dict() == {k: v for k, v in entry.items() if k != "checks"}
        assert check_solution(sol)["ok"]


def test_connect_exit_codes(tmp_path):
    out = tmp_path / "s.json"
    # the origin, a malformed point, a missing file and invalid params
    assert run("geodesic", "connect", "--params", json.dumps(P2), "--target",
               '{"x": [0,0,0,0,0,0,0,0], "z": [0,0,0]}', "--out", out) == EXIT_CONFIG
    assert run("geodesic", "connect", "--target", '{"x": [1, 0], "z": [0, 0, 0]}',
               "--out", out) == EXIT_CONFIG
    assert run("geodesic", "connect", "--target", "missing.json", "--out", out) == EXIT_CONFIG
    assert run("geodesic", "connect", "--params", '{"n": 1, "a": [[0], [1], [1]]}',
               "--target", '{"x": [1,0,0,0], "z": [0,0,0]}', "--out", out) == EXIT_CONFIG


def test_connect_no_solution_exit_code(tmp_path):
    out = tmp_path / "s.json"
    # z-only targets need index >= 1; a zero cap leaves nothing to try
    assert run("geodesic", "connect", "--target", '{"x": [0,0,0,0], "z": [0,0,1]}',
               "--max-index", 0, "--out", out) == EXIT_NO_SOLUTION
    assert json.loads(out.read_text())["count"] == 0


def test_mu_counts_and_csv(tmp_path):
    c1 = mu_critical(1)[1]
    assert run("mu", "--level", c1 - 0.5, "--level", c1 + 0.5, "--max-branch", 2,
               "--per-branch", 500, "--out", tmp_path) == EXIT_OK
    roots = json.loads((tmp_path / "roots.json").read_text())
    below, above = roots["levels"]
    assert below["counts"][1] == 0 and above["counts"][1] == 2
    assert below["counts"][0] == above["counts"][0] == 1
    data = np.loadtxt(tmp_path / "mu.csv", delimiter=",", skiprows=1)
    first = data[np.abs(data[:, 0]) < np.pi]
    assert np.all(np.diff(first[:, 1]) > 0)


def test_kernel_green_ray_homogeneity(tmp_path):
    out = tmp_path / "g.csv"
    pt = '{"x": [0.6, 0.2, -0.3, 0.1], "z": [0.3, -0.5, 0.4]}'
    assert run("kernel", "green", "--point", pt, "--grid", "ray", "--out", out) == EXIT_OK
    data = np.loadtxt(out, delimiter=",", skiprows=1)
    header = out.read_text().splitlines()[0].split(",")
    assert header[-3:] == ["value", "imag_diagnostic", "tail_estimate"]
    vals = data[:, header.index("value")]
    lam = np.array(RAY_LAMBDAS)
    assert np.allclose(vals * lam**8, vals[2], rtol=1e-8)
    assert np.allclose(data[:, 0] / data[2, 0], lam)


def test_kernel_heat_needs_t_and_grid_of_points(tmp_path):
    out = tmp_path / "h.csv"
    pts = '[{"x": [0.6, 0.2, -0.3, 0.1], "z": [0.3, -0.5, 0.4]}, {"x": [0, 0, 0, 0.5], "z": [0, 0, 0.2]}]'
    assert run("kernel", "heat", "--grid", pts, "--out", out) == EXIT_CONFIG
    p1 = '{"n": 1, "a": [[1.0], [1.2], [0.9]]}'
    assert run("kernel", "heat", "--params", p1, "--grid", pts, "--t", 1.0, "--out", out) == EXIT_OK
    data = np.loadtxt(out, delimiter=",", skiprows=1)
    assert data.shape == (2, 4 + 3 + 4)
    assert data[0, -3] == pytest.approx(17.56903019314679, rel=1e-9)   # radial oracle
    assert np.all(data[:, -3] > 0)


def test_kernel_bad_quad_is_config_error(tmp_path):
    pt = '{"x": [0.6, 0.2, -0.3, 0.1], "z": [0.3, -0.5, 0.4]}'
    assert run("kernel", "green", "--point", pt, "--quad", '{"rule": "nope"}',
               "--out", tmp_path / "g.csv") == EXIT_CONFIG
    assert run("kernel", "green", "--point", pt, "--eps", 5, "--out", tmp_path / "g.csv") == EXIT_CONFIG


def test_verify_deterministic(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert run("verify", "algebra", "--seed", 42, "--out", a) == EXIT_OK
    assert run("verify", "algebra", "--seed", 42, "--out", b) == EXIT_OK
    assert a.read_bytes() == b.read_bytes()
    report = json.loads(a.read_text())
    assert report["seed"] == 42 and report["passed"]


def test_verify_tolerance_override_fails(tmp_path, capsys):
    out = tmp_path / "r.json"
    assert run("verify", "algebra", "--tol", "algebra.an1=1e-20", "--out", out) == EXIT_VERIFY
    assert "algebra.an1" in capsys.readouterr().err
    assert not json.loads(out.read_text())["passed"]
    assert run("verify", "algebra", "--tol", "bogus", "--out", out) == EXIT_CONFIG
    assert run("verify", "nope", "--out", out) == EXIT_CONFIG


def test_figures_written(tmp_path):
    assert run("figures", "--which", "fig3", "--out", tmp_path) == EXIT_OK
    meta = json.loads((tmp_path / "fig3_solutions.json").read_text())
    assert [m["index"] for m in meta] == [1, 2, 5]
    for m in meta:
        c = read_curve_csv(tmp_path / f"fig3_k{m['index']}.csv")
        assert np.allclose(c.z[-1], m["target"]["z"], atol=1e-10)


def test_console_entry_point_runs():
    res = subprocess.run([sys.executable, "-m", "qcarnot.cli", "mu", "--help"],
                         capture_output=True, text=True)
    assert res.returncode == 0 and "--level" in res.stdout
