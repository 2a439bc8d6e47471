import json
import subprocess
import sys

import numpy as np
import pytest

from masslayer import config as cfgmod
from masslayer.cli import main
from masslayer.errors import ConfigError
from masslayer.io import compare_golden, read_json, read_profile, read_table

FIG1A = {"model": {"name": "cubic", "params": {"alpha": 0.2, "beta": 0.5}},
         "d": 1.0, "xi": 0.35, "eps": 0.01, "grid_n": 4096}


def _run(tmp_path, command, cfg, name=None, extra=()):
    cfg_path = tmp_path / f"{name or command}.json"
    cfg_path.write_text(json.dumps(cfg))
    out = tmp_path / (name or command)
    code = main([command, "--config", str(cfg_path), "--out", str(out), "--quiet", *extra])
    return code, out


def test_check_cubic(tmp_path):
    code, out = _run(tmp_path, "check", FIG1A)
    assert code == 0
    s = read_json(out / "summary.json")
    assert s["status"] == "ok" and abs(s["results"]["v_star"]) < 1e-12
    assert s["results"]["j_at_v_lower"] < 0 < s["results"]["j_at_v_upper"]


def test_check_hill(tmp_path):
    code, _ = _run(tmp_path, "check", {"model": {"name": "hill", "params": {"kappa": 0.067}}})
    assert code == 0


def test_hill_kappa_out_of_range_is_config_error(tmp_path):
    code, out = _run(tmp_path, "check", {"model": {"name": "hill", "params": {"kappa": 0.2}}})
    assert code == 2
    assert not out.exists()


@pytest.mark.parametrize("raw", [
    {"model": {"name": "cubic"}, "bogus": 1},
    {"model": {"name": "cubic", "params": {"gamma": 1.0}}},
    {"model": {"name": "quartic"}},
    {"model": {"name": "cubic"}, "eps": -1},
    {"model": {"name": "cubic"}, "spectrum": {"window": 3}},
])
def test_config_validation(raw):
    with pytest.raises(ConfigError):
        cfgmod.resolve(raw)


def test_bad_json(tmp_path):
    p = tmp_path / "c.json"
    p.write_text("{not json")
    assert main(["check", "--config", str(p), "--quiet"]) == 2


def test_analyze_fig1a(tmp_path):
    code, out = _run(tmp_path, "analyze", FIG1A)
    assert code == 0
    r = read_json(out / "summary.json")["results"]
    assert abs(r["x_star"] - 0.650) <= 1e-12 and abs(r["v_star"]) <= 1e-12
    assert r["verdict"] == "predicted stable (J'(v*) > 0)"
    q = read_table(out / "profiles/q_profile.csv", expected=["zeta", "q", "q_prime"])
    assert np.all(np.diff(q["q"]) > 0)
    resolved = read_json(out / "config.resolved.json")
    assert resolved["tolerances"]["root_residual"] == 1e-12


def test_analyze_fig2(tmp_path):
    cfg = {"model": {"name": "hill", "params": {"kappa": 0.067}}, "xi": 2.3}
    code, out = _run(tmp_path, "analyze", cfg)
    r = read_json(out / "summary.json")["results"]
    assert code == 0
    assert abs(r["x_star"] - 0.660) <= 5e-3 and abs(r["v_star"] - 1.802) <= 5e-3


def test_analyze_xi_out_of_range(tmp_path):
    code, out = _run(tmp_path, "analyze", {**FIG1A, "xi": 1.5})
    assert code == 2
    s = read_json(out / "summary.json")
    assert s["status"] == "failed" and s["error"]["type"] == "XiOutOfRange"


def test_missing_xi(tmp_path):
    cfg = dict(FIG1A)
    del cfg["xi"]
    code, _ = _run(tmp_path, "analyze", cfg)
    assert code == 2


def test_solve_fig1a(tmp_path):
    code, out = _run(tmp_path, "solve", FIG1A)
    assert code == 0
    x, u, v = read_profile(out / "profiles/profile.csv")
    assert u.min() == pytest.approx(0.0, abs=1e-2) and u.max() == pytest.approx(1.0, abs=1e-2)
    s = read_json(out / "summary.json")["results"]["solution"]
    assert abs(s["layer_x"] - 0.650) <= 2e-3


def test_solve_determinism_and_round_trip(tmp_path):
    cfg = {**FIG1A, "eps": 0.02, "grid_n": 401}
    _, a = _run(tmp_path, "solve", cfg, name="a")
    _, b = _run(tmp_path, "solve", cfg, name="b")
    for rel in ("summary.json", "profiles/profile.csv", "config.resolved.json"):
        assert (a / rel).read_bytes() == (b / rel).read_bytes()
    resolved = read_json(a / "config.resolved.json")
    _, c = _run(tmp_path, "solve", resolved, name="c")
    assert (a / "summary.json").read_bytes() == (c / "summary.json").read_bytes()
    assert compare_golden(c, a, default_tol=0.0).passed


def test_solve_continuation(tmp_path):
    cfg = {**FIG1A, "eps_list": [0.04, 0.02, 0.01], "grid_n": 2001}
    code, out = _run(tmp_path, "solve", cfg)
    assert code == 0
    t = read_table(out / "profiles/continuation.csv")
    assert list(t["eps"]) == [0.04, 0.02, 0.01]
    assert (out / "profiles/profile_eps0.01.csv").exists()


def test_spectrum_single(tmp_path):
    code, out = _run(tmp_path, "spectrum", {**FIG1A, "eps": 0.02, "grid_n": 401})
    assert code == 0
    ev = read_table(out / "spectra/eigenvalues.csv", expected=["re", "im", "mass_functional"])
    r = read_json(out / "summary.json")["results"]
    assert ev["re"][0] == r["critical"][0] < 0


def test_spectrum_scaling(tmp_path):
    cfg = {**FIG1A, "eps_list": [0.04, 0.02, 0.01]}
    del cfg["grid_n"]
    code, out = _run(tmp_path, "spectrum", cfg)
    assert code == 0
    t = read_table(out / "spectra/scaling.csv")
    assert "eps" in t and "lambda_re" in t
    r = read_json(out / "summary.json")["results"]
    assert r["scaling"]["slope"] == pytest.approx(-1.2122, rel=0.05)


def test_simulate(tmp_path):
    cfg = {**FIG1A, "eps": 0.02, "grid_n": 401,
           "simulate": {"t_end": 100.0, "dt": 0.1, "shift": 0.05, "fit_window": [20, 100],
                        "snapshot_every": 50.0}}
    code, out = _run(tmp_path, "simulate", cfg)
    assert code == 0
    tr = read_table(out / "traces/trace.csv", expected=["t", "mass", "layer_x"])
    assert np.max(np.abs(tr["mass"] - 0.35)) <= 1e-11
    r = read_json(out / "summary.json")["results"]
    assert r["decay_fit"]["rate"] < 0
    assert len(list((out / "profiles").glob("snapshot_*.csv"))) == 3


def test_sweep_fig2c(tmp_path):
    kappas = [0.02, 0.04, 0.06, 0.08, 0.1, 0.12]
    cfg = {"model": {"name": "hill"},
           "sweep": {"command": "check", "axes": {"model.params.kappa": kappas}}}
    code, out = _run(tmp_path, "sweep", cfg, extra=("--workers", "2"))
    assert code == 0
    t = read_table(out / "sweep.csv")
    assert list(t["model.params.kappa"]) == kappas
    assert np.all(t["j_at_v_lower"] < 0) and np.all(t["j_at_v_upper"] > 0)
    index = read_json(out / "index.json")
    assert [r["status"] for r in index["runs"]] == ["ok"] * 6


def test_sweep_records_failures(tmp_path):
    cfg = {**FIG1A, "sweep": {"command": "analyze", "axes": {"xi": [0.35, 1.5]}}}
    code, out = _run(tmp_path, "sweep", cfg)
    assert code == 2
    runs = read_json(out / "index.json")["runs"]
    assert [r["status"] for r in runs] == ["ok", "failed"]
    assert runs[1]["error"]["type"] == "XiOutOfRange"


def test_sweep_without_block(tmp_path):
    code, _ = _run(tmp_path, "sweep", FIG1A)
    assert code == 2


def test_console_entry(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps(FIG1A))
    res = subprocess.run([sys.executable, "-m", "masslayer", "analyze", "--config", str(p),
                          "--out", str(tmp_path / "o")], capture_output=True, text=True)
    assert res.returncode == 0
    assert "predicted stable (J'(v*) > 0)" in res.stdout
