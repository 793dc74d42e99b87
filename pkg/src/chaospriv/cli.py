"""Command-line front end.

Exit codes: 0 success, 1 invalid input, 2 non-convergence or failed check,
3 I/O error.
"""

import argparse
import copy
import csv
import hashlib
import json
import logging
import math
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .channel import SessionConfig, Server, Station, run_session
from .channel.transport import parse_address, send_frames, serve_station
from .chaossim import (INPUT_MAPS, AffineResponder, ConstantDriver, DivergenceError, LorenzDriver,
                       convergence_certificate, estimate_density, select_delay,
                       simulate_cascade, stationarity_check, sync_report, zero_one_chaos_test)
from .chaossim.io import load_trajectory, write_binary, write_csv
from .chaossim.sync import settle_time
from .ingest import AttributeEncoding, DatasetSummary, load_adult, problem_from_summary
from .noiseopt import NoiseDesignProblem, SolverOptions, solve
from .prng import CellPartition, build_cells
from .probmodel import Pmf

log = logging.getLogger("chaospriv")

EXIT_OK, EXIT_INVALID, EXIT_FAILED, EXIT_IO = 0, 1, 2, 3

DEFAULT_CONFIG = {
    "base": 2,
    "seed": 0,
    "data": {"paths": None, "encoding": None},
    "solver": {"max_iterations": 100_000, "step_rule": "backtracking",
               "gradient_tol": 1e-8, "objective_tol": 1e-12},
    "system": {"driver": "lorenz", "A": [[-1.0, 0.0], [0.0, -2.5]], "input_map": "quad-sine",
               "output_index": 1, "P": None},
    "simulation": {"dt": 1e-3, "driver_ic": [1.0, 1.0, 1.0],
                   "responder_ics": [[150.0, 150.0], [-150.0, -150.0]],
                   "sync_t_end": 40.0, "transient": 50.0, "delta": 0.05,
                   "density_t_end": 20_000.0, "trajectory_format": "binary",
                   # quantised driving signal: reserved, only null is accepted
                   "input_quantization": None},
    "check": {"bound": 1000.0, "bounded_t_end": 200.0, "chaos_delta": 0.2, "chaos_samples": 20_000,
              "k_min": 0.9, "sync_eps": 1e-9, "sync_by": 20.0},
    "stationarity": {"ic_count": 20, "t_end": 20_000.0, "delta": 0.05, "ks_max": 0.02},
    "cells": {"tau_threshold": 0.05},
    "channel": {"n_queries": 10_000, "t_start": 50.0, "ideal_sync": False,
                "station_ic": [-150.0, -150.0]},
    "report": {"trajectory_t_end": 40.0, "trajectory_every": 10, "density_bins": 200,
               "stream_symbols": 2000},
}


class CheckFailed(Exception):
    pass


# -- JSON -----------------------------------------------------------------

def _fmt(obj):
    if isinstance(obj, dict):
        return "{" + ", ".join(f"{json.dumps(str(k))}: {_fmt(v)}" for k, v in obj.items()) + "}"
    if isinstance(obj, (list, tuple)):
        return "[" + ", ".join(_fmt(v) for v in obj) + "]"
    if isinstance(obj, np.ndarray):
        return _fmt(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if obj is None:
        return "null"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return format(x, ".17g") if math.isfinite(x) else "null"
    if isinstance(obj, str):
        return json.dumps(obj)
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def dumps(obj):
    """Deterministic JSON: insertion-ordered keys, floats with 17 significant digits."""
    return _fmt(obj) + "\n"


def write_json(path, obj):
    Path(path).write_text(dumps(obj))
    return path


def read_json(path):
    with open(path) as fh:
        return json.load(fh)


# -- config ---------------------------------------------------------------

def _merge(base, override, where="config"):
    out = copy.deepcopy(base)
    for k, v in override.items():
        if k not in out:
            raise ValueError(f"{where}: unknown key {k!r}")
        if isinstance(out[k], dict) and isinstance(v, dict):
            out[k] = _merge(out[k], v, f"{where}.{k}")
        else:
            out[k] = v
    return out


def load_config(path=None, seed=None, base=None):
    cfg = DEFAULT_CONFIG if path is None else _merge(DEFAULT_CONFIG, read_json(path))
    cfg = copy.deepcopy(cfg)
    if seed is not None:
        cfg["seed"] = seed
    if base is not None:
        cfg["base"] = base
    _validate(cfg)
    return cfg


def _validate(cfg):
    sim = cfg["simulation"]
    if cfg["base"] not in (2, "2", "e"):
        raise ValueError("config.base must be 2 or 'e'")
    if not isinstance(cfg["seed"], int) or cfg["seed"] < 0:
        raise ValueError("config.seed must be a non-negative integer")
    for key in ("dt", "delta", "sync_t_end", "density_t_end"):
        if not sim[key] > 0:
            raise ValueError(f"config.simulation.{key} must be positive")
    if sim["transient"] < 0:
        raise ValueError("config.simulation.transient must be non-negative")
    if sim["trajectory_format"] not in ("binary", "csv"):
        raise ValueError("config.simulation.trajectory_format must be 'binary' or 'csv'")
    if sim["input_quantization"] is not None:
        raise ValueError("config.simulation.input_quantization: quantised driving is not supported")
    if cfg["system"]["driver"] not in ("lorenz", "constant"):
        raise ValueError("config.system.driver must be 'lorenz' or 'constant'")
    if cfg["system"]["input_map"] not in INPUT_MAPS:
        raise ValueError(f"config.system.input_map must be one of {sorted(INPUT_MAPS)}")
    st = cfg["stationarity"]
    if st["ic_count"] < 2:
        raise ValueError("config.stationarity.ic_count must be at least 2")
    if not 0 < cfg["cells"]["tau_threshold"] <= 1:
        raise ValueError("config.cells.tau_threshold must lie in (0, 1]")
    if cfg["channel"]["n_queries"] < 0:
        raise ValueError("config.channel.n_queries must be non-negative")


def build_systems(cfg):
    s = cfg["system"]
    if s["driver"] == "lorenz":
        driver = LorenzDriver()
    else:
        driver = ConstantDriver(dimension=len(cfg["simulation"]["driver_ic"]))
    responder = AffineResponder(A=np.asarray(s["A"], dtype=float), input_map=INPUT_MAPS[s["input_map"]],
                                output_index=s["output_index"])
    return driver, responder


def solver_options(cfg):
    s = cfg["solver"]
    return SolverOptions(max_iterations=s["max_iterations"], step_rule=s["step_rule"],
                         gradient_tol=s["gradient_tol"], objective_tol=s["objective_tol"])


def load_problem(path, base):
    """Problem JSON, or a dataset summary turned into a problem."""
    data = read_json(path)
    if "p_x" in data and "p_y_given_x" in data:
        return NoiseDesignProblem.from_dict(data, base=base)
    if "counts" in data and "x_alphabet" in data:
        return problem_from_summary(DatasetSummary.from_dict(data), base=base)
    raise ValueError(f"{path}: neither a problem (p_x, p_y_given_x) nor a dataset summary")


def _base_arg(cfg):
    return 2 if cfg["base"] in (2, "2") else "e"


# -- steps ----------------------------------------------------------------

def step_ingest(cfg, out):
    enc = cfg["data"]["encoding"]
    encoding = AttributeEncoding.load(enc) if enc else AttributeEncoding.default()
    summary = load_adult(cfg["data"]["paths"], encoding)
    if summary.dropped_rows:
        log.info("dropped %d rows", summary.dropped_rows)
    return write_json(out / "summary.json", summary.to_dict())


def step_solve(cfg, problem_path, out):
    problem = load_problem(problem_path, _base_arg(cfg))
    sol = solve(problem, solver_options(cfg))
    doc = sol.to_dict()
    doc["leakage_without_noise"] = problem.leakage_without_noise()
    path = write_json(out / "solution.json", doc)
    if not sol.converged:
        raise CheckFailed(f"solver did not converge in {sol.iterations} iterations")
    return path


def _check_boundedness(cfg, driver, responder):
    sim, chk = cfg["simulation"], cfg["check"]
    run = simulate_cascade(driver, [responder], sim["driver_ic"], [sim["responder_ics"][0]],
                           dt=sim["dt"], t_end=chk["bounded_t_end"])
    sup = max(float(np.max(np.abs(run.driver.states))), float(np.max(np.abs(run.responders[0].states))))
    return {"passed": bool(np.isfinite(sup) and sup < chk["bound"]), "sup_norm": sup,
            "bound": chk["bound"]}


def _check_certificate(cfg, driver, responder):
    P = cfg["system"]["P"]
    cert = convergence_certificate(responder, None if P is None else np.asarray(P, dtype=float))
    return dict(passed=cert.valid, **cert.to_dict())


def _check_chaos(cfg, driver, responder):
    sim, chk = cfg["simulation"], cfg["check"]
    every = int(round(chk["chaos_delta"] / sim["dt"]))
    skip = int(round(sim["transient"] / chk["chaos_delta"]))
    t_end = (skip + chk["chaos_samples"]) * chk["chaos_delta"]
    run = simulate_cascade(driver, [responder], sim["driver_ic"], [sim["responder_ics"][0]],
                           dt=sim["dt"], t_end=t_end, record_every=every)
    k_drv = zero_one_chaos_test(run.driver.outputs[skip:], seed=cfg["seed"])
    k_rsp = zero_one_chaos_test(run.responders[0].outputs[skip:], seed=cfg["seed"])
    return {"passed": bool(k_drv >= chk["k_min"] and k_rsp >= chk["k_min"]),
            "K_driver": k_drv, "K_responder": k_rsp, "k_min": chk["k_min"],
            "delta": chk["chaos_delta"]}


def _check_sync(cfg, driver, responder):
    sim, chk = cfg["simulation"], cfg["check"]
    u = simulate_cascade(driver, [], sim["driver_ic"], [], dt=sim["dt"], t_end=sim["sync_t_end"]).driver
    z1, z2 = sim["responder_ics"][:2]
    with warnings.catch_warnings():
        # an invalid certificate is already its own failed step
        warnings.simplefilter("ignore")
        rep = sync_report(responder, u, z1, z2)
    settle = settle_time(rep.times, rep.error_series, chk["sync_eps"])
    return dict(passed=bool(settle is not None and settle <= chk["sync_by"]),
                settle_time=settle, eps=chk["sync_eps"], by=chk["sync_by"], **rep.to_dict())


def _check_stationarity(cfg, driver, responder):
    sim, st = cfg["simulation"], cfg["stationarity"]
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        stat = stationarity_check(responder, driver, ic_count=st["ic_count"], dt=sim["dt"],
                                  t_end=st["t_end"], delta=st["delta"], seed=cfg["seed"],
                                  transient=sim["transient"])
    msgs = [str(w.message) for w in caught]
    for m in msgs:
        log.warning("%s", m)
    return dict(passed=bool(stat.max_ks <= st["ks_max"] and not stat.degenerate),
                ks_max=st["ks_max"], warnings=msgs, **stat.to_dict())


CHECK_STEPS = (("boundedness", _check_boundedness), ("certificate", _check_certificate),
               ("chaos", _check_chaos), ("synchronization", _check_sync),
               ("stationarity", _check_stationarity))


def run_checks(cfg):
    """Every synthesis check; a diverging simulation fails its step instead of aborting."""
    driver, responder = build_systems(cfg)
    steps = {}
    for name, fn in CHECK_STEPS:
        try:
            steps[name] = fn(cfg, driver, responder)
        except DivergenceError as exc:
            steps[name] = {"passed": False, "error": str(exc)}
    failed = [k for k, v in steps.items() if not v["passed"]]
    return {"passed": not failed, "failed_steps": failed, "steps": steps}


def step_check(cfg, out):
    report = run_checks(cfg)
    path = write_json(out / "check.json", report)
    if not report["passed"]:
        raise CheckFailed("failed checks: " + ", ".join(report["failed_steps"]))
    return path


def step_simulate(cfg, out):
    driver, responder = build_systems(cfg)
    sim = cfg["simulation"]
    dt = sim["dt"]
    u = simulate_cascade(driver, [], sim["driver_ic"], [], dt=dt, t_end=sim["sync_t_end"]).driver
    z1, z2 = sim["responder_ics"][:2]
    rep = sync_report(responder, u, z1, z2)
    paths = [write_json(out / "sync.json", rep.to_dict())]
    with open(out / "sync_error.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "error"])
        w.writerows(zip(map(repr, rep.times.tolist()), map(repr, rep.error_series.tolist())))
    paths.append(out / "sync_error.csv")

    every = int(round(sim["delta"] / dt))
    run = simulate_cascade(driver, [responder], sim["driver_ic"], [sim["responder_ics"][0]],
                           dt=dt, t_end=sim["transient"] + sim["density_t_end"], record_every=every)
    skip = int(round(sim["transient"] / sim["delta"]))
    traj = run.responders[0].subsample(1, start=skip)
    if sim["trajectory_format"] == "binary":
        paths.append(out / "server_output.cptj")
        write_binary(traj, paths[-1])
    else:
        paths.append(out / "server_output.csv")
        write_csv(traj, paths[-1])
    return paths


def step_cells(cfg, trajectory_path, solution_path, out):
    traj = load_trajectory(trajectory_path)
    sol = read_json(solution_path)
    p_v = Pmf.from_dict(sol["p_v_star"], normalize=True)
    threshold = cfg["cells"]["tau_threshold"]
    tau = select_delay(traj.outputs, traj.dt, threshold)
    part = build_cells(estimate_density(traj.outputs), p_v, delay_tau=tau, delta=traj.dt,
                       tau_threshold=threshold)
    return write_json(out / "partition.json", part.to_dict())


def session_config(cfg, problem, partition, ideal_sync=None):
    driver, responder = build_systems(cfg)
    sim, ch = cfg["simulation"], cfg["channel"]
    ideal = ch["ideal_sync"] if ideal_sync is None else ideal_sync
    return SessionConfig(problem, partition, driver=driver, responder=responder,
                         driver_ic=tuple(sim["driver_ic"]), server_ic=tuple(sim["responder_ics"][0]),
                         station_ic=None if ideal else tuple(ch["station_ic"]), dt=sim["dt"],
                         t_start=ch["t_start"], seed=cfg["seed"])


def step_channel(cfg, problem_path, partition_path, out, ideal_sync=None, log_path=None):
    problem = load_problem(problem_path, _base_arg(cfg))
    part = CellPartition.from_dict(read_json(partition_path))
    sc = session_config(cfg, problem, part, ideal_sync)
    rep = run_session(sc, cfg["channel"]["n_queries"], keep_log=log_path is not None)
    if log_path is not None:
        Path(log_path).write_bytes(rep.message_log)
    return write_json(out / "channel.json", rep.to_dict())


def step_report(cfg, out, solution_path, partition_path, problem_path):
    """Plot-ready CSV series; see docs/figures.md for the columns."""
    driver, responder = build_systems(cfg)
    sim, rc = cfg["simulation"], cfg["report"]
    dt = sim["dt"]
    paths = []
    ics = sim["responder_ics"][:2]
    run = simulate_cascade(driver, [responder, responder], sim["driver_ic"], ics, dt=dt,
                           t_end=rc["trajectory_t_end"], record_every=rc["trajectory_every"])
    s1, s2 = run.responders[0].outputs, run.responders[1].outputs
    paths.append(_write_rows(out / "fig_trajectories.csv", ["t", "u", "s1", "s2"],
                             zip(run.driver.times, run.driver.outputs, s1, s2)))
    full = simulate_cascade(driver, [responder, responder], sim["driver_ic"], ics, dt=dt,
                            t_end=rc["trajectory_t_end"])
    err = np.abs(full.responders[0].outputs - full.responders[1].outputs)
    paths.append(_write_rows(out / "fig_sync_error.csv", ["t", "error"],
                             zip(full.driver.times, err)))

    st = cfg["stationarity"]
    stat = stationarity_check(responder, driver, ic_count=st["ic_count"], dt=dt, t_end=st["t_end"],
                              delta=st["delta"], seed=cfg["seed"], transient=sim["transient"])
    pooled = estimate_density(stat.pooled(), rc["density_bins"])
    edges = pooled.bin_edges
    cols = [np.histogram(s, bins=edges)[0] / s.size / np.diff(edges) for s in stat.samples]
    paths.append(_write_rows(out / "fig_densities.csv",
                             ["s", "pooled"] + [f"run_{i}" for i in range(len(cols))],
                             zip(pooled.bin_centers, pooled.density, *cols)))
    grid = np.linspace(*pooled.support, 1001)
    paths.append(_write_rows(out / "fig_cdf.csv", ["s", "F"], zip(grid, pooled.cdf(grid))))

    problem = load_problem(problem_path, _base_arg(cfg))
    part = CellPartition.from_dict(read_json(partition_path))
    sol = read_json(solution_path)
    p_v = Pmf.from_dict(sol["p_v_star"], normalize=True)
    sc = session_config(cfg, problem, part, ideal_sync=True)
    n = rc["stream_symbols"]
    server = Server(sc)
    station = Station(sc)
    for frame in server.frames(n):
        station.handle(frame)
    pts = part.symbols.points[:, 0]
    times = (sc.schedule(n) * dt).tolist()
    paths.append(_write_rows(out / "fig_streams.csv", ["k", "t", "v_server", "v_station"],
                             zip(range(n), times, pts[server.noise_indices], pts[station.noise_idx])))
    f_srv = np.bincount(server.noise_indices, minlength=part.size) / max(n, 1)
    f_sta = np.bincount(station.noise_idx, minlength=part.size) / max(n, 1)
    paths.append(_write_rows(out / "fig_pmfs.csv", ["v", "target", "server", "station"],
                             zip(pts, p_v.probs, f_srv, f_sta)))
    return paths


def _write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([format(float(v), ".17g") if not isinstance(v, (int, np.integer)) else int(v)
                        for v in row])
    return path


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def step_pipeline(cfg, out, ideal_sync=None):
    artifacts = []
    failures = []
    artifacts.append(step_ingest(cfg, out))
    try:
        artifacts.append(step_solve(cfg, out / "summary.json", out))
    except CheckFailed as exc:
        failures.append(str(exc))
    try:
        artifacts.append(step_check(cfg, out))
    except CheckFailed as exc:
        failures.append(str(exc))
        artifacts.append(out / "check.json")
    artifacts += step_simulate(cfg, out)
    traj = out / ("server_output.cptj" if cfg["simulation"]["trajectory_format"] == "binary"
                  else "server_output.csv")
    artifacts.append(step_cells(cfg, traj, out / "solution.json", out))
    artifacts.append(step_channel(cfg, out / "summary.json", out / "partition.json", out, ideal_sync))
    artifacts += step_report(cfg, out, out / "solution.json", out / "partition.json",
                             out / "summary.json")
    manifest = {"version": __version__, "seed": cfg["seed"], "base": _base_arg(cfg),
                "artifacts": {Path(p).name: _sha256(p) for p in artifacts},
                "failures": failures}
    write_json(out / "manifest.json", manifest)
    if failures:
        raise CheckFailed("; ".join(failures))
    return out / "manifest.json"


# -- argument parsing -----------------------------------------------------

def _parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config; omitted keys take defaults")
    common.add_argument("--seed", type=int, help="overrides config seed")
    common.add_argument("--base", choices=["2", "e"], help="log base for information quantities")
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="chaospriv", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("ingest", parents=[common], help="dataset -> summary.json")
    sp = sub.add_parser("solve-noise", parents=[common], help="problem or summary -> solution.json")
    sp.add_argument("problem")
    sub.add_parser("check", parents=[common], help="boundedness, certificate, chaos, sync, stationarity")
    sub.add_parser("simulate-sync", parents=[common], help="sync error series and output trajectory")
    sp = sub.add_parser("build-cells", parents=[common], help="trajectory + solution -> partition.json")
    sp.add_argument("trajectory")
    sp.add_argument("solution")
    sp = sub.add_parser("run-channel", parents=[common], help="query session -> channel.json")
    sp.add_argument("problem")
    sp.add_argument("partition")
    sp.add_argument("--ideal-sync", action="store_true", default=None)
    sp.add_argument("--log", help="write the framed message log here")
    grp = sp.add_mutually_exclusive_group()
    grp.add_argument("--listen", metavar="HOST:PORT", help="run the station, accept one server")
    grp.add_argument("--connect", metavar="HOST:PORT", help="run the server, stream to a station")
    sp = sub.add_parser("report", parents=[common], help="plot-ready CSV series")
    sp.add_argument("--solution", required=True)
    sp.add_argument("--partition", required=True)
    sp.add_argument("--problem", required=True)
    sp = sub.add_parser("pipeline", parents=[common], help="run every step with one config")
    sp.add_argument("--ideal-sync", action="store_true", default=None)
    return p


def _dispatch(args, cfg, out):
    cmd = args.command
    if cmd == "ingest":
        return step_ingest(cfg, out)
    if cmd == "solve-noise":
        return step_solve(cfg, args.problem, out)
    if cmd == "check":
        return step_check(cfg, out)
    if cmd == "simulate-sync":
        return step_simulate(cfg, out)
    if cmd == "build-cells":
        return step_cells(cfg, args.trajectory, args.solution, out)
    if cmd == "run-channel":
        if args.listen or args.connect:
            return _remote_channel(args, cfg, out)
        return step_channel(cfg, args.problem, args.partition, out, args.ideal_sync, args.log)
    if cmd == "report":
        return step_report(cfg, out, args.solution, args.partition, args.problem)
    if cmd == "pipeline":
        return step_pipeline(cfg, out, args.ideal_sync)
    raise ValueError(f"unknown command {cmd!r}")


def _remote_channel(args, cfg, out):
    problem = load_problem(args.problem, _base_arg(cfg))
    part = CellPartition.from_dict(read_json(args.partition))
    sc = session_config(cfg, problem, part, args.ideal_sync)
    if args.listen:
        host, port = parse_address(args.listen)
        report = serve_station(Station(sc), host, port)
        return write_json(out / "channel.json", report.to_dict())
    host, port = parse_address(args.connect)
    sent = send_frames(Server(sc).frames(cfg["channel"]["n_queries"]), host, port)
    log.info("sent %d frames", sent)
    return None


def main(argv=None):
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, args.seed, args.base)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        result = _dispatch(args, cfg, out)
    except CheckFailed as exc:
        print(f"chaospriv: {exc}", file=sys.stderr)
        return EXIT_FAILED
    except OSError as exc:
        print(f"chaospriv: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except DivergenceError as exc:
        print(f"chaospriv: simulation failed: {exc}", file=sys.stderr)
        return EXIT_FAILED
    except (ValueError, TypeError, KeyError) as exc:
        print(f"chaospriv: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    if result is not None:
        for p in result if isinstance(result, list) else [result]:
            print(p)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
