"""Command-line front end: ``kickpend simulate | sweep <kind> | analyze <kind>``.

Settings resolve in three layers: built-in defaults, then a JSON config file
(``--config``), then explicit command-line flags.

Exit codes: 0 success, 2 usage or configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
import time

import numpy as np

from .dynamics import IntegratorOptions, Params, State, flow
from .errors import DomainError, KickpendError

log = logging.getLogger("kickpend")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3

DEFAULTS = {
    "mu1": 1.0, "mu2": 1.0, "theta_star": math.pi / 3, "k": 0.0,
    "rel_tol": 1e-10, "abs_tol": 1e-10, "max_step": 0.5, "event_time_tol": 1e-12,
    "grazing_p_tol": 1e-10, "max_time": 1000.0, "max_events": 100_000,
    "theta_range": [-math.pi, math.pi], "p_range": [-3.0, 3.0], "resolution": [400, 400],
    "observable": "hamiltonian", "lambda": "0", "T_max": None,
    "out": ".", "workers": 0, "seed": 0,
    # simulate
    "theta0": 0.0, "p0": 0.0, "t": None, "dt": None,
    # sweep basin
    "target_p1": 0.7, "tol": 1e-6,
    # analyze
    "n": 10, "samples": 0, "delta": None, "n_samples": 20, "I": [0.3, 0.5, 0.7], "J": 256, "M": 4096,
}

PARAM_KEYS = ("mu1", "mu2", "theta_star", "k")
OPT_KEYS = ("rel_tol", "abs_tol", "max_step", "event_time_tol", "grazing_p_tol", "max_time", "max_events")
SECTIONS = {"params": PARAM_KEYS, "integrator": OPT_KEYS}


class ConfigError(Exception):
    pass


def load_config(path) -> dict:
    """Flatten a JSON config file into the flat settings namespace."""
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config root must be an object")
    flat = {}
    for key, val in raw.items():
        if key in SECTIONS:
            if not isinstance(val, dict):
                raise ConfigError(f"section {key!r} must be an object")
            for sub, v in val.items():
                if sub not in SECTIONS[key]:
                    raise ConfigError(f"unknown key {key}.{sub}")
                flat[sub] = v
        elif key == "window":
            if not isinstance(val, dict) or set(val) - {"theta", "p"}:
                raise ConfigError("window must be an object with 'theta' and/or 'p'")
            if "theta" in val:
                flat["theta_range"] = val["theta"]
            if "p" in val:
                flat["p_range"] = val["p"]
        elif key in DEFAULTS:
            flat[key] = val
        else:
            raise ConfigError(f"unknown config key {key!r}")
    return flat


def resolve_settings(cli: dict, config: dict | None = None) -> dict:
    """Defaults < config file < command line (``None`` means "not given")."""
    out = dict(DEFAULTS)
    out.update(config or {})
    out.update({k: v for k, v in cli.items() if v is not None and k in DEFAULTS})
    return out


def _complex(text) -> complex:
    if isinstance(text, (list, tuple)) and len(text) == 2:
        return complex(float(text[0]), float(text[1]))
    try:
        return complex(str(text).replace(" ", "").replace("i", "j"))
    except ValueError as exc:
        raise ConfigError(f"bad complex value {text!r}") from exc


def build_params(s: dict) -> Params:
    try:
        return Params(*(float(s[k]) for k in PARAM_KEYS))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid params: {exc}") from exc


def build_options(s: dict) -> IntegratorOptions:
    try:
        vals = {k: float(s[k]) for k in OPT_KEYS}
        vals["max_events"] = int(s["max_events"])
        return IntegratorOptions(**vals)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid integrator options: {exc}") from exc


def _window(s: dict):
    try:
        th = [float(x) for x in s["theta_range"]]
        p = [float(x) for x in s["p_range"]]
        res = [int(x) for x in s["resolution"]]
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid window: {exc}") from exc
    if len(th) != 2 or len(p) != 2 or len(res) != 2:
        raise ConfigError("window ranges and resolution need two values each")
    if res[0] < 1 or res[1] < 1:
        raise ConfigError("resolution must be at least 1x1")
    if (th[1] <= th[0] and res[0] > 1) or (p[1] <= p[0] and res[1] > 1):
        raise ConfigError("window must be nonempty")
    return (tuple(th), tuple(p)), tuple(res)


def _outdir(s: dict) -> str:
    out = s["out"]
    try:
        os.makedirs(out, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {out}: {exc}") from exc
    if not os.access(out, os.W_OK):
        raise ConfigError(f"output directory {out} is not writable")
    return out


def _write_json(path, obj) -> None:
    with open(path, "w") as fh:
        if isinstance(obj, str):
            fh.write(obj)
        else:
            json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


# commands -------------------------------------------------------------------

def cmd_simulate(s: dict) -> int:
    from .io import write_events, write_trajectory

    params, opts = build_params(s), build_options(s)
    if s["t"] is None:
        raise ConfigError("simulate needs --t")
    duration = float(s["t"])
    if not duration > 0:
        raise ConfigError("duration --t must be positive")
    out = _outdir(s)
    t_eval = None
    if s["dt"] is not None:
        dt = float(s["dt"])
        if not dt > 0:
            raise ConfigError("--dt must be positive")
        t_eval = np.arange(0.0, duration + 0.5 * dt, dt)
        t_eval = t_eval[t_eval <= duration]
    traj = flow(State(float(s["theta0"]), float(s["p0"])), duration, params, opts, t_eval=t_eval)
    write_trajectory(traj, params, os.path.join(out, "trajectory.csv"))
    write_events(traj.events, os.path.join(out, "events.csv"))
    H = traj.energies(params)[-1]
    print(f"events: {len(traj.events)}")
    print(f"final H: {H:.17g}")
    return EXIT_OK


SWEEP_OPS = {"timeavg": "time_average", "laplace": "laplace_average",
             "basin": "basin", "damped-eig": "damped_eigenfunction"}


def cmd_sweep(s: dict, kind: str) -> int:
    from .averages import grid_sweep
    from .grid import GridField, write_grid

    params, opts = build_params(s), build_options(s)
    window, res = _window(s)
    out = _outdir(s)
    op = SWEEP_OPS[kind]
    lam = _complex(s["lambda"])
    T_max = None if s["T_max"] is None else float(s["T_max"])
    if T_max is not None and not T_max > 0:
        raise ConfigError("T_max must be positive")
    start = time.perf_counter()
    try:
        gf = grid_sweep(op, window, res, params, opts, observable=s["observable"], lam=lam,
                        T_max=T_max, workers=int(s["workers"]),
                        target_p1=float(s["target_p1"]), tol=float(s["tol"]))
    except DomainError as exc:
        raise ConfigError(str(exc)) from exc
    wall = time.perf_counter() - start
    if kind == "damped-eig":
        files = {"damped_modulus.csv": np.abs(gf.values), "damped_phase.csv": np.angle(gf.values)}
        for name, field_ in files.items():
            part = GridField(gf.theta_axis, gf.p_axis, field_.astype(complex), gf.status,
                             gf.params, dict(gf.meta, field=name.split("_")[1][:-4]))
            write_grid(part, os.path.join(out, name))
        stem = "damped"
    else:
        stem = f"sweep_{kind.replace('-', '_')}"
        write_grid(gf, os.path.join(out, stem + ".csv"), label=(kind == "basin"))
    # wall time lives apart from the data so repeated runs stay byte-identical
    _write_json(os.path.join(out, stem + ".timing.json"),
                {"wall_time_s": wall, "workers": int(s["workers"])})
    counts = gf.counts()
    print(json.dumps(counts, sort_keys=True))
    if counts.get("error", 0) == gf.values.size:
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_analyze(s: dict, kind: str) -> int:
    params, opts = build_params(s), build_options(s)
    out = _outdir(s)
    if kind == "poincare":
        report = _analyze_poincare(s, params)
    elif kind == "dissipation":
        from .energy_map import collect_dissipation, dissipation_report, fit_retention

        if not params.k > 0:
            raise ConfigError("dissipation analysis needs --k > 0")
        samples, skipped = collect_dissipation(params, int(s["n_samples"]), opts)
        model = fit_retention(samples, params)
        report = json.loads(dissipation_report(samples, model, params.k))
        report["skipped_H"] = skipped
    elif kind == "energy-map":
        report = _analyze_energy_map(s, params, opts)
    else:
        from .action_angle import fourier_coefficients

        I = s["I"] if isinstance(s["I"], list) else [s["I"]]
        table = fourier_coefficients(s["observable"], [float(x) for x in I], int(s["J"]), int(s["M"]), params)
        report = json.loads(table.to_json())
    path = os.path.join(out, f"analyze_{kind.replace('-', '_')}.json")
    _write_json(path, report)
    summary = {k: v for k, v in report.items() if not isinstance(v, (list, dict))}
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


def _analyze_poincare(s: dict, params: Params) -> dict:
    from .poincare import GAMMA, iterate_T, p_critical, settle_index
    from .errors import Unsettled

    enc = lambda v: "GAMMA" if v is GAMMA else v
    p0 = float(s["p0"])
    seq = iterate_T(p0, int(s["n"]), params)
    report = {"p_cr": p_critical(params), "p0": p0, "sequence": [enc(v) for v in seq]}
    try:
        st = settle_index(p0, params)
        report["settle_index"] = st.n
        report["absorbed"] = st.absorbed
    except Unsettled:
        report["settle_index"] = None
    if int(s["samples"]) > 0:
        # settle-bound check on random momenta (the only use of --seed)
        rng = np.random.default_rng(int(s["seed"]))
        ps = rng.uniform(-10.0, 10.0, int(s["samples"]))
        from .poincare import settle_index_array

        idx, _ = settle_index_array(ps, params)
        report["random_check"] = {
            "seed": int(s["seed"]), "n": int(ps.size),
            "max_excess": int(np.max(idx - np.ceil(np.abs(ps)))),
        }
    return report


def _analyze_energy_map(s: dict, params: Params, opts: IntegratorOptions) -> dict:
    from .energy_map import (DissipationModel, collect_dissipation, energy_map_report,
                             fit_retention)

    if s["delta"] is not None:
        delta = float(s["delta"])
        if not 0.0 <= delta < 1.0:
            raise ConfigError("--delta must lie in [0, 1)")
        model = DissipationModel.from_delta(delta)
    elif params.k > 0:
        samples, _ = collect_dissipation(params, int(s["n_samples"]), opts)
        model = fit_retention(samples, params)
    else:
        raise ConfigError("energy-map needs --delta or --k > 0")
    report = json.loads(energy_map_report(model, params))
    report["delta"] = model.delta
    return report


# parser ---------------------------------------------------------------------

def _add_common(p: argparse.ArgumentParser, top: bool) -> None:
    # subcommand copies use SUPPRESS so they never clobber values given earlier
    d = None if top else argparse.SUPPRESS
    g = p.add_argument_group("global")
    g.add_argument("--config", default=d, help="JSON config file")
    g.add_argument("--out", default=d, help="output directory")
    g.add_argument("--workers", type=int, default=d, help="worker threads (0 = all cores)")
    g.add_argument("--seed", type=int, default=d, help="seed for random test points")
    m = p.add_argument_group("model")
    m.add_argument("--mu1", type=float, default=d)
    m.add_argument("--mu2", type=float, default=d)
    m.add_argument("--theta-star", dest="theta_star", type=float, default=d)
    m.add_argument("--k", type=float, default=d)
    i = p.add_argument_group("integrator")
    i.add_argument("--rtol", dest="rel_tol", type=float, default=d)
    i.add_argument("--atol", dest="abs_tol", type=float, default=d)
    i.add_argument("--max-step", dest="max_step", type=float, default=d)
    i.add_argument("--event-tol", dest="event_time_tol", type=float, default=d)
    i.add_argument("--max-time", dest="max_time", type=float, default=d)
    i.add_argument("--max-events", dest="max_events", type=int, default=d)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="kickpend", description=__doc__.splitlines()[0])
    _add_common(ap, top=True)
    sub = ap.add_subparsers(dest="command", required=True)
    N = argparse.SUPPRESS

    sim = sub.add_parser("simulate", help="integrate one trajectory")
    _add_common(sim, top=False)
    sim.add_argument("--theta0", type=float, default=N)
    sim.add_argument("--p0", type=float, default=N)
    sim.add_argument("--t", type=float, default=N, help="duration in seconds")
    sim.add_argument("--dt", type=float, default=N, help="output spacing (default: integrator steps)")

    sw = sub.add_parser("sweep", help="grid sweeps")
    sw_sub = sw.add_subparsers(dest="kind", required=True)
    for kind in SWEEP_OPS:
        q = sw_sub.add_parser(kind)
        _add_common(q, top=False)
        q.add_argument("--obs", dest="observable", default=N)
        q.add_argument("--lambda", dest="lambda", default=N, help="complex, e.g. -0.015+0.9999j")
        q.add_argument("--T-max", dest="T_max", type=float, default=N)
        q.add_argument("--theta-range", dest="theta_range", type=float, nargs=2, default=N)
        q.add_argument("--p-range", dest="p_range", type=float, nargs=2, default=N)
        q.add_argument("--resolution", type=int, nargs=2, default=N)
        q.add_argument("--target-p1", dest="target_p1", type=float, default=N)
        q.add_argument("--tol", type=float, default=N)

    an = sub.add_parser("analyze", help="single-shot analyses")
    an_sub = an.add_subparsers(dest="kind", required=True)
    for kind in ("poincare", "dissipation", "energy-map", "spectrum"):
        q = an_sub.add_parser(kind)
        _add_common(q, top=False)
        q.add_argument("--p0", type=float, default=N)
        q.add_argument("--n", type=int, default=N)
        q.add_argument("--samples", type=int, default=N)
        q.add_argument("--delta", type=float, default=N)
        q.add_argument("--n-samples", dest="n_samples", type=int, default=N)
        q.add_argument("--obs", dest="observable", default=N)
        q.add_argument("--I", dest="I", type=float, nargs="+", default=N)
        q.add_argument("--J", type=int, default=N)
        q.add_argument("--M", type=int, default=N)
    return ap


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    ap = build_parser()
    try:
        ns = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    cli = vars(ns)
    try:
        config = load_config(cli["config"]) if cli.get("config") else {}
        s = resolve_settings(cli, config)
        if ns.command == "simulate":
            return cmd_simulate(s)
        if ns.command == "sweep":
            return cmd_sweep(s, ns.kind)
        return cmd_analyze(s, ns.kind)
    except (ConfigError, DomainError) as exc:
        print(f"kickpend: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except KickpendError as exc:
        print(f"kickpend: numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
