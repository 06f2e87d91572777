"""``syncert`` command-line interface.

Usage::

    syncert <command> --config run.json [--out DIR]

Commands: ``certify``, ``simulate-ode``, ``simulate-pde``, ``eig``, ``sweep``.
Exit codes: 0 success/feasible, 1 usage or configuration error, 2 not
certified, 3 simulation diverged. ``SYNCERT_SEED`` overrides the config seed.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

import jsonschema
import numpy as np

from . import cert, ringosc, simode, simpde
from .errors import DivergenceError, InputError, SyncertError
from .graph import ComponentGraph, build_laplacian

EXIT_OK, EXIT_ERROR, EXIT_INFEASIBLE, EXIT_DIVERGED = 0, 1, 2, 3

FLOAT_FMT = simode.FLOAT_FMT

_num = {"type": "number"}
_vec = {"type": "array", "items": _num}
_mat = {"type": "array", "items": _vec}
_range = {"type": "array", "items": _num, "minItems": 2, "maxItems": 2}

GRAPH_SCHEMA = {
    "type": "object",
    "properties": {
        "num_nodes": {"type": "integer", "minimum": 1},
        "edges": {"type": "array", "items": {"type": "array", "items": _num,
                                             "minItems": 3, "maxItems": 3}},
        "symmetric": {"type": "boolean"},
    },
    "required": ["num_nodes"],
    "additionalProperties": False,
}

MODEL_SCHEMA = {
    "type": "object",
    "properties": {
        "model": {"enum": ["ring_oscillator", "linear", "generic"]},
        "n": {"type": "integer", "minimum": 1},
        "eta": _vec, "alpha": _vec, "beta": _vec, "d": _vec,
        "A": _mat,
        "bound": {
            "type": "object",
            "properties": {
                "kind": {"enum": ["hull_cone", "box"]},
                "Z": {"type": "array", "items": _mat},
                "S": {"type": "array", "items": _mat},
                "A0": _mat, "B": {"type": "array", "items": _vec},
                "C": {"type": "array", "items": _vec},
            },
            "required": ["kind"],
            "additionalProperties": False,
        },
        "graphs": {"type": "array", "items": GRAPH_SCHEMA},
    },
    "required": ["model", "n"],
    "additionalProperties": False,
}

CONFIG_SCHEMA = {
    "type": "object",
    "properties": {
        "model": MODEL_SCHEMA,
        "method": {"enum": ["auto", "box", "hull_cone", "secant_diagonal"]},
        "grid": {
            "type": "object",
            "properties": {
                "length": {"type": "number", "exclusiveMinimum": 0},
                "cells": {"type": "integer", "minimum": 3},
                "a": {"type": "array", "items": {"anyOf": [_num, _vec]}},
                "alpha": {"type": "number", "exclusiveMinimum": 0},
            },
            "required": ["length", "cells", "a"],
            "additionalProperties": False,
        },
        "numerics": {
            "type": "object",
            "properties": {
                "dt": {"type": "number", "exclusiveMinimum": 0},
                "t_end": {"type": "number", "exclusiveMinimum": 0},
                "seed": {"type": "integer"},
                "x0": {"anyOf": [_vec, _mat]},
                "ic_scale": _num,
                "identical_ic": {"type": "boolean"},
                "window_fraction": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                "record_every": {"type": "integer", "minimum": 1},
                "snapshot_every": {"type": "integer", "minimum": 1},
                "state_box": _range,
            },
            "additionalProperties": False,
        },
        "sweep": {
            "type": "object",
            "properties": {
                "draws": {"type": "integer", "minimum": 0},
                "n": {"type": "integer", "minimum": 3},
                "eta": _range, "alphabeta": _range, "lambda2": _range,
                "exclude_band": {"type": "number", "minimum": 0},
            },
            "additionalProperties": False,
        },
        "outputs": {
            "type": "object",
            "additionalProperties": {"type": "string"},
        },
    },
    "additionalProperties": False,
}

DEFAULT_OUTPUTS = {
    "report": "report.txt",
    "certificate": "certificate.json",
    "trajectory": "trajectory.csv",
    "metrics": "metrics.csv",
    "snapshots": "snapshots.csv",
    "pi_norm": "pi_norm.csv",
    "lambda2": "lambda2.csv",
    "sweep": "sweep.csv",
}

NUMERIC_DEFAULTS = {
    "t_end": 20.0,
    "seed": 0,
    "ic_scale": 1.0,
    "identical_ic": False,
    "window_fraction": 0.6,
    "record_every": 1,
    "snapshot_every": 100,
}


class ConfigError(SyncertError):
    """Configuration problem; ``key`` names the JSON key used to anchor the message."""

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key


def _line_of(text, key):
    needle = f'"{key}"'
    for lineno, line in enumerate(text.splitlines(), start=1):
        if needle in line:
            return lineno
    return 1


def load_config(path):
    """Parse and validate a run configuration; errors carry a line number."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config: {exc.strerror}") from None
    try:
        config = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: invalid JSON: {exc.msg}") from None
    validator = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
    errors = sorted(validator.iter_errors(config), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        keys = [k for k in err.absolute_path if isinstance(k, str)]
        if err.validator == "additionalProperties":
            extra = sorted(set(err.instance) - set(err.schema.get("properties", {})))
            keys = keys + extra[:1]
        line = _line_of(text, keys[-1]) if keys else 1
        where = "/".join(str(k) for k in err.absolute_path) or "<root>"
        raise ConfigError(f"{path}:{line}: {where}: {err.message}")
    return config


def _numerics(config):
    out = dict(NUMERIC_DEFAULTS)
    out.update(config.get("numerics", {}))
    env_seed = os.environ.get("SYNCERT_SEED")
    if env_seed is not None:
        try:
            out["seed"] = int(env_seed)
        except ValueError:
            raise ConfigError(f"SYNCERT_SEED must be an integer, got {env_seed!r}") from None
    return out


def _require(mapping, key, where):
    if key not in mapping:
        raise ConfigError(f"{where} is missing required key '{key}'", key=where.split(".")[-1])
    return mapping[key]


def _ring_params(model):
    n = model["n"]
    vals = {k: _require(model, k, "model") for k in ("eta", "alpha", "beta")}
    d = model.get("d", [0.0] * n)
    for name, v in list(vals.items()) + [("d", d)]:
        if len(v) != n:
            raise ConfigError(f"model.{name} has {len(v)} entries, expected n={n}", key=name)
    return ringosc.RingOscillatorParams(vals["eta"], vals["alpha"], vals["beta"], d)


def _graphs(model):
    graphs = [ComponentGraph.from_json(g) for g in _require(model, "graphs", "model")]
    if len(graphs) != model["n"]:
        raise ConfigError(f"model.graphs has {len(graphs)} entries, expected n={model['n']}", key="graphs")
    return graphs


def _bound(model):
    kind = model["model"]
    n = model["n"]
    if kind == "ring_oscillator":
        return ringosc.box_bound(_ring_params(model))
    if kind == "linear":
        return cert.JacobianBound.hull_cone([np.asarray(_require(model, "A", "model"), float)])
    cfg = _require(model, "bound", "model")
    if cfg["kind"] == "hull_cone":
        b = cert.JacobianBound.hull_cone(_require(cfg, "Z", "bound"), cfg.get("S", []))
    else:
        B = np.asarray(cfg.get("B", []), float).reshape(-1, n)
        C = np.asarray(cfg.get("C", []), float).reshape(-1, n)
        if B.shape != C.shape:
            raise ConfigError("bound.B and bound.C must list the same number of vectors", key="B")
        b = cert.JacobianBound.box(_require(cfg, "A0", "bound"), list(zip(B, C)))
    if b.n != n:
        raise ConfigError(f"bound dimension {b.n} does not match n={n}", key="bound")
    return b


def _reaction(model):
    kind = model["model"]
    if kind == "ring_oscillator":
        p = _ring_params(model)
        return (lambda x: ringosc.vector_field(p, x)), (lambda x: ringosc.jacobian(p, x))
    if kind == "linear":
        A = np.asarray(_require(model, "A", "model"), float)
        if A.shape != (model["n"], model["n"]):
            raise ConfigError("model.A must be n x n", key="A")
        return (lambda x: x @ A.T), (lambda x: A)
    raise ConfigError("simulation needs a 'ring_oscillator' or 'linear' model", key="model")


def _network(model):
    f, jac = _reaction(model)
    graphs = _graphs(model)
    N = graphs[0].num_nodes
    if any(g.num_nodes != N for g in graphs):
        raise ConfigError("all graphs must have the same num_nodes", key="graphs")
    scales = model.get("d", [1.0] * model["n"]) if model["model"] == "ring_oscillator" \
        else [1.0] * model["n"]
    laps = [build_laplacian(g, scale=s) for g, s in zip(graphs, scales)]
    weights = [s * g.weight_matrix() for g, s in zip(graphs, scales)]
    net = simode.NetworkModel(N, model["n"], f, jac, [lap.matrix for lap in laps], weights)
    return net, laps


def _grid(config):
    g = _require(config, "grid", "config")
    grid = simpde.PdeGrid(float(g["length"]), int(g["cells"]))
    rows = []
    for entry in g["a"]:
        if isinstance(entry, list):
            if len(entry) != grid.cells + 1:
                raise ConfigError(f"grid.a rows need {grid.cells + 1} face values", key="a")
            rows.append(entry)
        else:
            rows.append([float(entry)] * (grid.cells + 1))
    a = np.asarray(rows, float)
    alpha = g.get("alpha", float(a[:, 1:-1].min()))
    return grid, simpde.DiffusionProfile(a, alpha)


def _outputs(config, out_dir):
    names = dict(DEFAULT_OUTPUTS)
    names.update(config.get("outputs", {}))
    out_dir.mkdir(parents=True, exist_ok=True)
    return {k: out_dir / v for k, v in names.items()}


def _fmt(x):
    return FLOAT_FMT % x


def _matrix_lines(M, indent="    "):
    return [indent + "  ".join(f"{v: .6e}" for v in row) for row in np.atleast_2d(M)]


def cmd_certify(config, out_dir, stream):
    model = _require(config, "model", "config")
    bound = _bound(model)
    if "grid" in config and "graphs" not in model:
        grid, prof = _grid(config)
        lam = np.array([simpde.discretize_operator(grid, prof, k).lambda2 for k in range(prof.n)])
        sources = ["elliptic"] * prof.n
        coupled = list(range(prof.n))
        flagged = []
    else:
        scales = model.get("d", [1.0] * model["n"]) if model["model"] == "ring_oscillator" \
            else [1.0] * model["n"]
        laps = [build_laplacian(g, scale=s) for g, s in zip(_graphs(model), scales)]
        lam = np.array([lap.lambda2 for lap in laps])
        sources = ["graph"] * len(laps)
        coupled = [k for k, lap in enumerate(laps) if not lap.is_zero]
        flagged = [k for k, lap in enumerate(laps) if not lap.has_positive_lambda2]
    outputs = _outputs(config, out_dir)
    method = config.get("method", "auto")

    lines = ["synchronization certificate report", ""]
    lines.append("component  source    lambda2")
    for k, (lv, src) in enumerate(zip(lam, sources), start=1):
        lines.append(f"{k:9d}  {src:8s}  {_fmt(lv)}")
    lines.append("")
    if model["model"] == "ring_oscillator":
        p = _ring_params(model)
        try:
            ok, ratio, threshold = cert.secant_criterion(p.eta, p.alphabeta, lam)
            lines.append(f"secant ratio: {_fmt(ratio)}")
            lines.append(f"secant threshold sec^n(pi/n): {_fmt(threshold)} ({'pass' if ok else 'fail'})")
            cyc = cert.cyclic_permutation(bound.augmented(lam))
            if cyc is not None:
                cok, _, cth = cert.cyclic_secant(cyc[1])
                lines.append(f"augmented cycle threshold sec^2n(pi/2n): {_fmt(cth)} "
                             f"({'pass' if cok else 'fail'})")
        except InputError as exc:
            lines.append(f"secant criterion not applicable: {exc}")
        lines.append("")

    if flagged:
        result = cert.Failure(method, "no positive lambda2 for directed component(s) "
                              + ", ".join(str(k + 1) for k in flagged), lam)
    else:
        result = cert.certify(bound, lam, coupled, method=method)
    lines.append(f"method: {result.method}")
    payload = {"feasible": bool(result.ok), "method": result.method,
               "lambda2": lam.tolist(), "coupled_components": [k + 1 for k in coupled]}
    if result.ok:
        rate = simode.predicted_rate(result)
        lines.append("result: feasible")
        lines.append(f"epsilon: {_fmt(result.epsilon)}")
        lines.append(f"predicted rate: {_fmt(rate)}")
        lines.append("P:")
        lines.extend(_matrix_lines(result.P))
        payload.update(P=result.P.tolist(), epsilon=result.epsilon, predicted_rate=rate,
                       residuals=np.asarray(result.residuals).tolist())
    else:
        lines.append("result: infeasible")
        lines.append(f"reason: {result.reason}")
        payload["reason"] = result.reason
    text = "\n".join(lines) + "\n"
    outputs["report"].write_text(text)
    outputs["certificate"].write_text(json.dumps(payload, indent=2) + "\n")
    stream.write(text)
    return EXIT_OK if result.ok else EXIT_INFEASIBLE


def _initial_state(num, shape, rng, shared_axis):
    """Explicit ``x0`` or a seeded uniform draw; ``identical_ic`` copies one slice along ``shared_axis``."""
    if "x0" in num:
        x0 = np.asarray(num["x0"], float)
        if x0.size != int(np.prod(shape)):
            raise ConfigError(f"numerics.x0 has {x0.size} entries, expected {int(np.prod(shape))}",
                              key="x0")
        return x0.reshape(shape)
    x0 = num["ic_scale"] * rng.uniform(-1.0, 1.0, shape)
    if num["identical_ic"]:
        x0 = np.broadcast_to(np.take(x0, [0], axis=shared_axis), shape).copy()
    return x0


def cmd_simulate_ode(config, out_dir, stream):
    model = _require(config, "model", "config")
    net, laps = _network(model)
    num = _numerics(config)
    rng = np.random.default_rng(num["seed"])
    x0 = _initial_state(num, (net.N, net.n), rng, shared_axis=0)
    lam = net.lambda2s()
    if "dt" in num:
        dt = num["dt"]
    elif model["model"] == "ring_oscillator":
        dt = 0.01 / max(float(np.max(model["eta"])), float(np.max(lam, initial=0.0)))
    else:
        dt = 0.01 / max(float(np.max(np.abs(model["A"]))), float(np.max(lam, initial=0.0)), 1e-12)
    box = num.get("state_box")
    traj = simode.simulate(net, x0.reshape(-1), num["t_end"], dt,
                           state_box=None if box is None else (box[0], box[1]),
                           record_every=num["record_every"])
    metrics = simode.sync_error(traj, net.N, net.n)
    outputs = _outputs(config, out_dir)
    traj.write_csv(outputs["trajectory"], net.N, net.n)
    metrics.write_csv(outputs["metrics"])

    fitted = "n/a"
    if np.max(metrics.error_norm) > 1e-12:
        try:
            fit = simode.fit_decay_rate(metrics.times, metrics.error_norm, num["window_fraction"])
            fitted = _fmt(fit.rate) + (" (floored)" if fit.floored else "")
        except InputError:
            pass
    predicted = "n/a"
    if all(lap.has_positive_lambda2 for lap in laps):
        try:
            result = cert.certify(_bound(model), lam, net.coupled, method=config.get("method", "auto"))
            if result.ok:
                predicted = _fmt(simode.predicted_rate(result))
        except InputError:
            pass
    summary = (f"samples={len(traj.times)} dt={_fmt(dt)} final_sync_error={_fmt(metrics.error_norm[-1])} "
               f"max_sync_error={_fmt(np.max(metrics.error_norm))} "
               f"fitted_rate={fitted} predicted_rate={predicted}")
    if traj.left_box_at is not None:
        summary += f" left_state_box_at={_fmt(traj.left_box_at)}"
    stream.write(summary + "\n")
    return EXIT_OK


def cmd_simulate_pde(config, out_dir, stream):
    model = _require(config, "model", "config")
    f, _ = _reaction(model)
    grid, prof = _grid(config)
    if prof.n != model["n"]:
        raise ConfigError(f"grid.a has {prof.n} components, model has n={model['n']}", key="a")
    num = _numerics(config)
    rng = np.random.default_rng(num["seed"])
    x0 = _initial_state(num, (prof.n, grid.cells), rng, shared_axis=1)
    dt = num.get("dt", simpde.max_stable_dt(grid, prof))
    lam = np.array([simpde.discretize_operator(grid, prof, k).lambda2 for k in range(prof.n)])
    traj = simpde.simulate_pde(grid, prof, f, x0, num["t_end"], dt, record_every=num["record_every"])
    outputs = _outputs(config, out_dir)
    snap = simpde.PdeTrajectory(traj.times[::num["snapshot_every"]],
                                traj.fields[::num["snapshot_every"]])
    snap.write_snapshots(outputs["snapshots"], grid)
    norms = traj.pi_norms(grid)
    with open(outputs["pi_norm"], "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "pi_norm"])
        for t, v in zip(traj.times, norms):
            w.writerow([_fmt(t), _fmt(v)])
    with open(outputs["lambda2"], "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["component", "lambda2"])
        for k, v in enumerate(lam, start=1):
            w.writerow([k, _fmt(v)])
    drift = np.max(np.abs(traj.fields.mean(axis=2) - traj.fields[0].mean(axis=1)))
    fitted = "n/a"
    if np.max(norms) > 1e-12:
        try:
            fit = simode.fit_decay_rate(traj.times, norms, num["window_fraction"])
            fitted = _fmt(fit.rate)
        except InputError:
            pass
    predicted = "n/a"
    try:
        result = cert.certify(_bound(model), lam, list(range(prof.n)), method=config.get("method", "auto"))
        if result.ok:
            predicted = _fmt(simode.predicted_rate(result))
    except InputError:
        pass
    stream.write("component  lambda2\n")
    for k, v in enumerate(lam, start=1):
        stream.write(f"{k:9d}  {_fmt(v)}\n")
    stream.write(f"samples={len(traj.times)} dt={_fmt(dt)} final_pi_norm={_fmt(norms[-1])} "
                 f"max_mean_drift={_fmt(drift)} fitted_rate={fitted} predicted_rate={predicted}\n")
    return EXIT_OK


def cmd_eig(config, out_dir, stream):
    rows = []
    model = config.get("model")
    if model is not None and "graphs" in model:
        scales = model.get("d", [1.0] * model["n"]) if model["model"] == "ring_oscillator" \
            else [1.0] * model["n"]
        for k, (g, s) in enumerate(zip(_graphs(model), scales), start=1):
            lap = build_laplacian(g, scale=s)
            rows.append((k, "graph", lap.lambda2))
    if "grid" in config:
        grid, prof = _grid(config)
        for k in range(prof.n):
            rows.append((k + 1, "elliptic", simpde.discretize_operator(grid, prof, k).lambda2))
    if not rows:
        raise ConfigError("eig needs model.graphs or a grid", key="model")
    stream.write("component  source    lambda2\n")
    for k, src, v in rows:
        stream.write(f"{k:9d}  {src:8s}  {_fmt(v)}\n")
    return EXIT_OK


def sweep_draws(cfg, seed):
    """Seeded ring-oscillator draws outside the band around the secant threshold.

    Each draw has its own derived seed, so rows do not depend on each other.
    Yields ``(index, eta, alphabeta, lambda2, ratio, secant_pass, lmi_feasible,
    cyclic_secant_pass)``; an inverted range yields nothing.
    """
    n = cfg.get("n", 3)
    draws = cfg.get("draws", 200)
    eta_r = cfg.get("eta", [0.5, 2.0])
    ab_r = cfg.get("alphabeta", [0.5, 4.0])
    lam_r = cfg.get("lambda2", [0.0, 2.0])
    band = cfg.get("exclude_band", 0.05)
    if any(r[0] > r[1] for r in (eta_r, ab_r, lam_r)):
        return
    threshold = cert.secant_threshold(n)
    children = np.random.SeedSequence(seed).spawn(draws)
    for i, child in enumerate(children):
        rng = np.random.default_rng(child)
        for _ in range(10000):
            eta = rng.uniform(*eta_r, n)
            ab = rng.uniform(*ab_r, n)
            lam = rng.uniform(*lam_r, n)
            ratio = float(np.prod(ab) / np.prod(eta + lam))
            if abs(ratio - threshold) > band * threshold:
                break
        else:
            raise InputError("could not draw parameters outside the excluded band")
        passed, ratio, threshold = cert.secant_criterion(eta, ab, lam)
        p = ringosc.RingOscillatorParams(eta, ab, np.ones(n), np.zeros(n))
        bound = ringosc.box_bound(p)
        coupled = [k for k in range(n) if lam[k] > 0]
        result = cert.certify_box(bound, lam, coupled)
        cyc = cert.cyclic_permutation(bound.augmented(lam))
        cyc_pass = cert.cyclic_secant(cyc[1])[0]
        yield i, eta, ab, lam, ratio, passed, result.ok, cyc_pass


def sweep_header(n):
    cols = ["draw"]
    for name in ("eta", "alphabeta", "lambda2"):
        cols += [f"{name}_{k}" for k in range(1, n + 1)]
    return cols + ["secant_ratio", "secant_pass", "lmi_feasible", "agree",
                   "cyclic_secant_pass", "agree_cyclic"]


def cmd_sweep(config, out_dir, stream):
    cfg = config.get("sweep", {})
    num = _numerics(config)
    n = cfg.get("n", 3)
    outputs = _outputs(config, out_dir)
    total = agree = agree_cyc = 0
    with open(outputs["sweep"], "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(sweep_header(n))
        for i, eta, ab, lam, ratio, passed, feasible, cyc_pass in sweep_draws(cfg, num["seed"]):
            total += 1
            agree += passed == feasible
            agree_cyc += cyc_pass == feasible
            w.writerow([i] + [_fmt(v) for v in np.concatenate([eta, ab, lam])]
                       + [_fmt(ratio), int(passed), int(feasible), int(passed == feasible),
                          int(cyc_pass), int(cyc_pass == feasible)])
    if total:
        stream.write(f"draws={total} agreement_secant={agree / total:.4f} "
                     f"agreement_cyclic_secant={agree_cyc / total:.4f}\n")
    else:
        stream.write("draws=0\n")
    return EXIT_OK


COMMANDS = {
    "certify": cmd_certify,
    "simulate-ode": cmd_simulate_ode,
    "simulate-pde": cmd_simulate_pde,
    "eig": cmd_eig,
    "sweep": cmd_sweep,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="syncert", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, help="JSON run configuration")
    parser.add_argument("--out", default=".", help="output directory (default: current)")
    return parser


def main(argv=None, stream=None):
    stream = stream or sys.stdout
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config)
        return COMMANDS[args.command](config, Path(args.out), stream)
    except DivergenceError as exc:
        sys.stderr.write(f"syncert: diverged at t={exc.time:.6g}: {exc}\n")
        return EXIT_DIVERGED
    except ConfigError as exc:
        if getattr(exc, "key", None):
            line = _line_of(Path(args.config).read_text(), exc.key)
            sys.stderr.write(f"syncert: {args.config}:{line}: {exc}\n")
        else:
            sys.stderr.write(f"syncert: {exc}\n")
        return EXIT_ERROR
    except SyncertError as exc:
        sys.stderr.write(f"syncert: {exc}\n")
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
