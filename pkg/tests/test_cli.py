import copy
import io
import json
import subprocess
import sys

import numpy as np
import pytest

from syncert.cli import main

K3 = {"num_nodes": 3, "edges": [[1, 2, 1.0], [1, 3, 1.0], [2, 3, 1.0]]}
PATH3 = {"num_nodes": 3, "edges": [[1, 2, 1.0], [2, 3, 1.0]]}
EMPTY3 = {"num_nodes": 3, "edges": []}

RING = {
    "model": {
        "model": "ring_oscillator",
        "n": 3,
        "eta": [1.0, 1.0, 1.0],
        "alpha": [1.5, 1.0, 1.0],
        "beta": [1.0, 1.0, 1.0],
        "d": [0.5, 0.4, 0.0],
        "graphs": [K3, PATH3, EMPTY3],
    }
}


def run(tmp_path, command, config, name="run.json", env_seed=None, monkeypatch=None):
    path = tmp_path / name
    path.write_text(json.dumps(config, indent=2))
    out = tmp_path / "out"
    if monkeypatch is not None:
        if env_seed is None:
            monkeypatch.delenv("SYNCERT_SEED", raising=False)
        else:
            monkeypatch.setenv("SYNCERT_SEED", str(env_seed))
    stream = io.StringIO()
    code = main([command, "--config", str(path), "--out", str(out)], stream=stream)
    return code, stream.getvalue(), out


def with_(base, **updates):
    cfg = copy.deepcopy(base)
    for key, value in updates.items():
        section, field = key.split("__") if "__" in key else (None, key)
        (cfg[section] if section else cfg)[field] = value
    return cfg


def test_certify_feasible(tmp_path):
    code, text, out = run(tmp_path, "certify", RING)
    assert code == 0
    ratio = float(text.split("secant ratio: ")[1].split()[0])
    assert ratio < 8
    assert "result: feasible" in text and "predicted rate" in text
    cert = json.loads((out / "certificate.json").read_text())
    assert cert["feasible"] and cert["lambda2"] == pytest.approx([1.5, 0.4, 0.0])
    assert (out / "report.txt").read_text() == text


def test_certify_infeasible_when_gain_inflated(tmp_path):
    cfg = with_(RING, model__alpha=[4.0, 4.0, 4.0])
    code, text, _ = run(tmp_path, "certify", cfg)
    assert code == 2 and "result: infeasible" in text


def test_certify_missing_graphs(tmp_path, capsys):
    cfg = copy.deepcopy(RING)
    del cfg["model"]["graphs"]
    code, _, _ = run(tmp_path, "certify", cfg)
    assert code == 1
    err = capsys.readouterr().err
    assert "graphs" in err and "run.json:" in err


def test_unknown_key_rejected_with_line(tmp_path, capsys):
    cfg = with_(RING, colour="blue")
    code, _, _ = run(tmp_path, "certify", cfg)
    assert code == 1
    err = capsys.readouterr().err
    line = int(err.split("run.json:")[1].split(":")[0])
    assert '"colour"' in (tmp_path / "run.json").read_text().splitlines()[line - 1]


def test_malformed_json(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text('{\n  "model": {,}\n}\n')
    assert main(["eig", "--config", str(path)]) == 1
    assert "bad.json:2:" in capsys.readouterr().err


def test_directed_without_positive_lambda2_refused(tmp_path):
    cfg = copy.deepcopy(RING)
    cfg["model"]["graphs"][0] = {"num_nodes": 3, "edges": [[1, 2, 1.0]], "symmetric": False}
    code, text, _ = run(tmp_path, "certify", cfg)
    assert code == 2 and "no positive lambda2" in text


def test_certify_generic_hull(tmp_path):
    cfg = {"model": {"model": "generic", "n": 2,
                     "bound": {"kind": "hull_cone", "Z": [[[-1.0, 1.0], [0.0, -1.0]]]},
                     "graphs": [PATH3, EMPTY3]}}
    code, text, _ = run(tmp_path, "certify", cfg)
    assert code == 0 and "method: hull_cone" in text


def test_eig_table(tmp_path):
    cfg = {"model": {"model": "linear", "n": 1, "A": [[-1.0]], "graphs": [K3]},
           "grid": {"length": np.pi, "cells": 400, "a": [1.0]}}
    code, text, _ = run(tmp_path, "eig", cfg)
    rows = [line.split() for line in text.splitlines()[1:]]
    assert code == 0
    assert rows[0][1] == "graph" and float(rows[0][2]) == pytest.approx(3.0)
    assert rows[1][1] == "elliptic" and float(rows[1][2]) == pytest.approx(1.0, abs=1e-4)


def test_eig_mixed_graphs_scaled(tmp_path):
    code, text, _ = run(tmp_path, "eig", RING)
    values = [float(line.split()[2]) for line in text.splitlines()[1:]]
    assert code == 0 and values == pytest.approx([3 * 0.5, 0.4, 0.0])


def test_simulate_ode_outputs_and_determinism(tmp_path, monkeypatch):
    cfg = with_(RING, numerics={"dt": 0.01, "t_end": 5.0, "seed": 3})
    code, text, out = run(tmp_path, "simulate-ode", cfg, monkeypatch=monkeypatch)
    assert code == 0 and "fitted_rate=" in text and "predicted_rate=" in text
    first = (out / "trajectory.csv").read_bytes(), (out / "metrics.csv").read_bytes()
    assert first[1].startswith(b"t,sync_error\n")
    run(tmp_path, "simulate-ode", cfg, monkeypatch=monkeypatch)
    assert first == ((out / "trajectory.csv").read_bytes(), (out / "metrics.csv").read_bytes())
    run(tmp_path, "simulate-ode", cfg, env_seed=99, monkeypatch=monkeypatch)
    assert (out / "trajectory.csv").read_bytes() != first[0]


def test_simulate_ode_identical_ic(tmp_path):
    cfg = with_(RING, numerics={"dt": 0.01, "t_end": 5.0, "identical_ic": True})
    code, _, out = run(tmp_path, "simulate-ode", cfg)
    err = np.loadtxt(out / "metrics.csv", delimiter=",", skiprows=1)[:, 1]
    assert code == 0 and err.max() <= 1e-10


def test_simulate_ode_uncoupled_linear_rate(tmp_path):
    cfg = {"model": {"model": "linear", "n": 2, "A": [[-0.7, 0.0], [0.0, -0.7]],
                     "graphs": [EMPTY3, EMPTY3]},
           "numerics": {"dt": 0.01, "t_end": 6.0, "seed": 1}}
    code, text, _ = run(tmp_path, "simulate-ode", cfg)
    rate = float(text.split("fitted_rate=")[1].split()[0])
    assert code == 0 and rate == pytest.approx(0.7, abs=1e-6)


def test_simulate_ode_divergence_exit(tmp_path, capsys):
    cfg = {"model": {"model": "linear", "n": 1, "A": [[400.0]], "graphs": [PATH3]},
           "numerics": {"dt": 0.1, "t_end": 100.0}}
    with np.errstate(over="ignore", invalid="ignore"):
        code, _, _ = run(tmp_path, "simulate-ode", cfg)
    assert code == 3 and "diverged at t=" in capsys.readouterr().err


PDE = {
    "model": {"model": "linear", "n": 2, "A": [[0.0, 0.0], [0.0, 0.0]]},
    "grid": {"length": 1.0, "cells": 40, "a": [0.5, 1.0]},
    "numerics": {"t_end": 0.05, "seed": 2, "record_every": 20, "snapshot_every": 2},
}


def test_simulate_pde_conserves_mean(tmp_path):
    code, text, out = run(tmp_path, "simulate-pde", PDE)
    drift = float(text.split("max_mean_drift=")[1].split()[0])
    assert code == 0 and drift <= 1e-10
    assert (out / "snapshots.csv").read_text().startswith("t,xi,component,value\n")
    assert (out / "pi_norm.csv").read_text().startswith("t,pi_norm\n")
    lam = np.loadtxt(out / "lambda2.csv", delimiter=",", skiprows=1)
    assert lam[:, 1] == pytest.approx([0.5 * np.pi ** 2, np.pi ** 2], rel=1e-3)


def test_simulate_pde_constant_ic_uniform(tmp_path):
    cfg = with_(PDE, numerics={"t_end": 0.05, "identical_ic": True})
    code, _, out = run(tmp_path, "simulate-pde", cfg)
    norms = np.loadtxt(out / "pi_norm.csv", delimiter=",", skiprows=1)[:, 1]
    assert code == 0 and norms.max() <= 1e-15


def test_simulate_pde_cfl_violation(tmp_path, capsys):
    cfg = with_(PDE, numerics={"t_end": 0.05, "dt": 0.01})
    code, _, _ = run(tmp_path, "simulate-pde", cfg)
    assert code == 1 and "max admissible dt" in capsys.readouterr().err


SWEEP = {"sweep": {"draws": 6, "n": 3}, "numerics": {"seed": 5}}


def test_sweep_determinism_and_columns(tmp_path):
    code, _, out = run(tmp_path, "sweep", SWEEP)
    first = (out / "sweep.csv").read_bytes()
    header = first.splitlines()[0].decode().split(",")
    assert code == 0
    assert header[:2] == ["draw", "eta_1"] and "secant_ratio" in header and "agree" in header
    assert len(first.splitlines()) == 7
    run(tmp_path, "sweep", SWEEP)
    assert (out / "sweep.csv").read_bytes() == first


def test_sweep_empty_range(tmp_path):
    code, _, out = run(tmp_path, "sweep", {"sweep": {"draws": 10, "eta": [2.0, 1.0]}})
    lines = (out / "sweep.csv").read_text().splitlines()
    assert code == 0 and len(lines) == 1 and lines[0].startswith("draw,")


def test_console_script(tmp_path):
    path = tmp_path / "run.json"
    path.write_text(json.dumps(RING))
    proc = subprocess.run([sys.executable, "-m", "syncert.cli", "eig", "--config", str(path)],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and "graph" in proc.stdout
