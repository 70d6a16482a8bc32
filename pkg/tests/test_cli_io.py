import json
import math
import os

import numpy as np
import pytest

from kickpend import Params, State, flow
from kickpend.cli import DEFAULTS, ConfigError, load_config, main, resolve_settings
from kickpend.grid import GridField, read_grid, write_grid
from kickpend.io import read_events, read_trajectory, write_events, write_trajectory
from kickpend.poincare import basin_grid


def _read(path):
    with open(path, "rb") as fh:
        return fh.read()


def test_trajectory_round_trip(tmp_path, params):
    tr = flow(State(0.2, 2.1), 20.0, params)
    write_trajectory(tr, params, tmp_path / "t.csv")
    write_events(tr.events, tmp_path / "e.csv")
    back = read_trajectory(tmp_path / "t.csv")
    assert np.array_equal(back.t, tr.t) and np.array_equal(back.p, tr.p)
    assert np.allclose(np.exp(1j * back.theta), np.exp(1j * tr.theta), atol=1e-15)
    ev = read_events(tmp_path / "e.csv", params)
    assert len(ev) == len(tr.events) > 0
    for a, b in zip(ev, tr.events):
        assert a.time == b.time and a.side == b.side and a.post.p == b.post.p


def test_bad_header(tmp_path):
    (tmp_path / "x.csv").write_text("a,b\n1,2\n")
    with pytest.raises(ValueError):
        read_trajectory(tmp_path / "x.csv")


def test_grid_round_trip(tmp_path, params):
    th, p = np.linspace(-1, 1, 3), np.linspace(0, 2, 2)
    vals = (np.arange(6) + 0.1j * np.arange(6)).reshape(2, 3) / 7.0
    status = np.array([["converged"] * 3, ["truncated", "diverged", "error"]], dtype=object)
    gf = GridField(th, p, vals, status, params, {"kind": "test"})
    write_grid(gf, tmp_path / "g.csv")
    back = read_grid(tmp_path / "g.csv")
    assert np.array_equal(back.values, vals) and np.array_equal(back.status, status)
    assert back.params == params and back.meta["kind"] == "test"


def test_basin_round_trip(tmp_path, params):
    gf = basin_grid(((-1.0, 1.0), (-2.5, 2.5)), (4, 5), 0.7, 1e-6, params)
    write_grid(gf, tmp_path / "b.csv", label=True)
    assert _read(tmp_path / "b.csv").startswith(b"theta,p,label,status\n")
    back = read_grid(tmp_path / "b.csv")
    assert np.array_equal(back.values, gf.values)


def test_precedence_matrix(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"params": {"k": 0.02}, "integrator": {"rel_tol": 1e-9},
                               "window": {"p": [-1, 1]}, "workers": 2}))
    conf = load_config(cfg)
    s = resolve_settings({"k": None, "workers": 3, "mu1": None}, conf)
    assert s["k"] == 0.02                 # config over default
    assert s["workers"] == 3              # CLI over config
    assert s["mu1"] == DEFAULTS["mu1"]    # default when neither
    assert s["p_range"] == [-1, 1] and s["rel_tol"] == 1e-9
    s = resolve_settings({"k": 0.05}, conf)
    assert s["k"] == 0.05


@pytest.mark.parametrize("text", ['{"params": {"bogus": 1}}', '{"nope": 1}', "[1]", "{not json"])
def test_bad_config(tmp_path, text):
    cfg = tmp_path / "c.json"
    cfg.write_text(text)
    with pytest.raises(ConfigError):
        load_config(cfg)
    assert main(["simulate", "--t", "1", "--config", str(cfg), "--out", str(tmp_path)]) == 2


def test_simulate(tmp_path, capsys):
    rc = main(["simulate", "--theta0", "0.2", "--p0", "2.0", "--t", "10", "--dt", "0.5", "--out", str(tmp_path)])
    assert rc == 0
    out = capsys.readouterr().out
    assert out.startswith("events: ")
    tr = read_trajectory(tmp_path / "trajectory.csv")
    assert tr.t.size == 21 and tr.t[-1] == 10.0


@pytest.mark.parametrize("argv,code", [
    (["simulate", "--t", "0"], 2),
    (["simulate", "--t", "5", "--theta-star", "4"], 2),
    (["simulate", "--t", "5", "--dt", "-1"], 2),
    (["simulate", "--theta0", "0", "--p0", "3", "--t", "50", "--max-events", "2"], 3),
    (["sweep", "timeavg", "--resolution", "1", "1"], 2),
    (["sweep", "damped-eig", "--k", "3", "--resolution", "2", "2"], 2),
    (["analyze", "energy-map"], 2),
    (["frobnicate"], 2),
])
def test_exit_codes(tmp_path, argv, code):
    assert main(argv + ["--out", str(tmp_path)]) == code


def test_sweep_outputs_and_determinism(tmp_path):
    args = ["sweep", "timeavg", "--theta-range", "-1", "1", "--p-range", "-0.5", "0.5",
            "--resolution", "3", "2", "--T-max", "20"]
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(args + ["--out", str(a), "--workers", "1"]) == 0
    assert main(args + ["--out", str(b), "--workers", "2"]) == 0
    for name in ("sweep_timeavg.csv", "sweep_timeavg.json"):
        assert _read(a / name) == _read(b / name)
    assert os.path.exists(a / "sweep_timeavg.timing.json")
    side = json.loads((a / "sweep_timeavg.json").read_text())
    assert side["resolution"] == [3, 2] and side["kind"] == "time_average"


def test_damped_sweep_files(tmp_path):
    rc = main(["sweep", "damped-eig", "--k", "0.03", "--resolution", "2", "2", "--T-max", "100",
               "--theta-range", "-0.5", "0.5", "--p-range", "-0.5", "0.5", "--out", str(tmp_path)])
    assert rc == 0
    mod = read_grid(tmp_path / "damped_modulus.csv")
    ph = read_grid(tmp_path / "damped_phase.csv")
    assert np.all(mod.values.real > 0) and np.all(np.abs(ph.values.real) <= math.pi)


def test_analyze_reports(tmp_path):
    assert main(["analyze", "poincare", "--p0", "2.5", "--n", "4", "--out", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "analyze_poincare.json").read_text())
    assert rep["sequence"] == [2.5, -1.5, 0.5, -0.5, 0.5] and rep["settle_index"] == 2
    assert main(["analyze", "energy-map", "--delta", "0.01", "--out", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "analyze_energy_map.json").read_text())
    assert abs(rep["H_fp"] - 0.6281605319424065) < 1e-11
    assert main(["analyze", "spectrum", "--I", "0.5", "--J", "4", "--M", "16", "--out", str(tmp_path)]) == 0
