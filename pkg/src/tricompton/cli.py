"""Command line front end: scenario-driven grids, sweeps, totals and points.

Subcommands::

    tricompton run SCENARIO        execute a scenario file
    tricompton validate SCENARIO   check a scenario, print derived quantities
    tricompton total ...           one total cross section
    tricompton point ...           one differential point (and entanglement for TC)

Exit codes: 0 success, 1 validation error, 2 numerical flag (non-converged
Romberg rows or SDP; suppressed by ``--allow-flagged``), 3 I/O error.
"""

import argparse
import csv
import io
import json
import math
import os
import platform
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import __version__, entanglement, quadrature, xsec
from .kinematics import KinematicsError, boost_config_to_rest_frame, doppler_to_lab, doppler_to_rest
from .scenario import (
    PROCESSES,
    Range,
    ScenarioError,
    grid_bounds,
    load_scenario,
    parse_scenario,
    validation_report,
)

SENTINEL = -999.0
RESULT_SCHEMA = "tricompton.result/1"
EXIT_OK, EXIT_VALIDATION, EXIT_FLAGGED, EXIT_IO = 0, 1, 2, 3
DEFAULT_SEED = 0
DEFAULT_SAMPLES = 20000


@dataclass
class Result:
    """A table (``columns`` + ``rows``) or a JSON ``document``, plus run metadata."""

    columns: list = field(default_factory=list)  # [(name, unit)]
    rows: list = field(default_factory=list)
    document: dict = None
    flagged: bool = False
    diagnostics: dict = field(default_factory=dict)


# -- helpers ------------------------------------------------------------------------


def _clean(x):
    """JSON-safe scalar: non-finite and masked values become the sentinel."""
    if x is np.ma.masked:
        return SENTINEL
    if isinstance(x, (np.floating, float)):
        return float(x) if math.isfinite(x) else SENTINEL
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, np.ndarray):
        return _clean(x.tolist())
    return x


def _column(values):
    """Masked / non-finite entries to the sentinel, as a float array."""
    arr = np.ma.filled(np.ma.masked_invalid(np.ma.asarray(values, dtype=float)), SENTINEL)
    return np.asarray(arr, dtype=float).ravel()


def _map(fn, items, threads):
    """Order-preserving map, threaded when ``threads > 1``."""
    if threads > 1 and len(items) > 1:
        with ThreadPoolExecutor(threads) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def _chunks(n, parts):
    bounds = np.linspace(0, n, max(1, min(parts, n)) + 1).astype(int)
    return [slice(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:])]


def _tol(scenario, key, default):
    return scenario.numerics.get(key, default)


# -- tasks --------------------------------------------------------------------------------


def _tc_grid_values(scenario, config, w1, w2, theta, phi, channel, frame):
    """Differential TC cross section and lab omega_3 over a meshgrid."""
    if frame == "rest":
        return xsec.dsigma_tc_via_rest_frame(config, w1, w2, theta, phi, channel, scenario.spin)
    value = xsec.dsigma_tc_grid(config, w1, w2, theta, phi, channel, scenario.spin)
    kin = xsec.tc_kinematics(config, w1, w2, theta, phi)
    return value, np.where(kin.valid, kin.omega[..., 2], np.nan)


def _energy_mesh(scenario, config):
    lo, hi = grid_bounds(config)
    w1 = scenario.grid["omega1"].resolve(lo, hi)
    w2 = scenario.grid["omega2"].resolve(lo, hi)
    return np.meshgrid(w1, w2, indexing="ij")


def task_grid_s(scenario, opts):
    config = scenario.beam.config()
    frame = scenario.frame_for(config)
    theta, phi = scenario.angles(3)
    w1, w2 = _energy_mesh(scenario, config)
    bar = scenario.task == "grid-Sbar"
    channels = ("summed",) if bar else scenario.channels["TC"]
    cols, w3 = [], None
    for ch in channels:
        value, w3 = _tc_grid_values(scenario, config, w1, w2, theta, phi, ch, frame)
        cols.append(_column(xsec.s_value(value)))
    columns = [("omega1", "MeV"), ("omega2", "MeV"), ("omega3", "MeV")]
    columns += [("Sbar", "log10(b MeV^-2 sr^-3)")] if bar else [(f"S_{ch}", "log10(b MeV^-2 sr^-3)") for ch in channels]
    rows = np.column_stack([w1.ravel(), w2.ravel(), _column(w3)] + cols)
    masked = int(np.sum(cols[0] == SENTINEL))
    return Result(columns, rows, diagnostics={"compute_frame": frame, "cells": int(w1.size), "masked_cells": masked})


def task_grid_tau_q(scenario, opts):
    config = scenario.beam.config()
    frame = scenario.frame_for(config)
    theta, phi = scenario.angles(3)
    w1, w2 = _energy_mesh(scenario, config)
    if frame == "rest":
        work, _ = boost_config_to_rest_frame(config)
        r1, t1 = doppler_to_rest(w1, theta[0], config.gamma)
        r2, t2 = doppler_to_rest(w2, theta[1], config.gamma)
        _, t3 = doppler_to_rest(1.0, theta[2], config.gamma)
        th = np.stack(np.broadcast_arrays(t1, t2, t3 + 0 * t1), axis=-1)
        rho, _, valid = entanglement.density_matrices(work, r1, r2, th, phi, scenario.spin)
    else:
        rho, _, valid = entanglement.density_matrices(config, w1, w2, theta, phi, scenario.spin)
    gap_tol = _tol(scenario, "gap_tol", entanglement.DEFAULT_GAP_TOL)
    flat_rho = rho.reshape(-1, 8, 8)
    cells = [int(i) for i in np.flatnonzero(valid.ravel())]

    def solve(i):
        t, cert = entanglement.tau(flat_rho[i], gap_tol=gap_tol)
        return t, entanglement.von_neumann_entropy(flat_rho[i]), cert.diagnostics

    results = _map(solve, cells, opts.threads)
    n = w1.size
    tau_col, q_col, obj_col, flag_col = (np.full(n, np.nan) for _ in range(4))
    flag_col[:] = 0.0
    for i, (t, q, diag) in zip(cells, results):
        tau_col[i], q_col[i], obj_col[i] = t, q, diag["objective"]
        flag_col[i] = float(diag["flagged"])
    value, w3 = _tc_grid_values(scenario, config, w1, w2, theta, phi, "summed", frame)
    sbar = _column(xsec.s_value(value))
    columns = [("omega1", "MeV"), ("omega2", "MeV"), ("omega3", "MeV"), ("tau", ""), ("Q", "bit"),
               ("Sbar", "log10(b MeV^-2 sr^-3)"), ("witness_objective", ""), ("sdp_flagged", "")]  # fmt: skip
    rows = np.column_stack(
        [w1.ravel(), w2.ravel(), _column(w3), _column(tau_col), _column(q_col), sbar, _column(obj_col), flag_col]
    )
    n_flag = int(flag_col.sum())
    diag = {"compute_frame": frame, "cells": int(n), "solved_cells": len(cells), "sdp_flagged_cells": n_flag,
            "gap_tol": gap_tol, "spin": scenario.spin}  # fmt: skip
    return Result(columns, rows, flagged=n_flag > 0, diagnostics=diag)


def task_angular_sweep(scenario, opts):
    config = scenario.beam.config()
    frame = scenario.frame_for(config)
    theta_lab, (abscissa, x) = scenario.sweep(config.gamma)
    columns = [(abscissa, "")] if abscissa != "theta" else []
    columns.append(("theta", "rad"))
    data = ([x] if abscissa != "theta" else []) + [theta_lab]
    rel_tol = _tol(scenario, "rel_tol", quadrature.DEFAULT_REL_TOL)
    max_level = _tol(scenario, "max_level", quadrature.DEFAULT_MAX_LEVEL)
    diagnostics, flagged = {"compute_frame": frame}, False
    for proc in scenario.processes:
        n = PROCESSES[proc]
        chans = scenario.channels[proc]
        theta = np.repeat(theta_lab[:, None], n, axis=1)
        phi = np.broadcast_to(2.0 * np.pi * np.arange(1, n + 1) / 3.0, theta.shape)
        if n == 1:
            # single Compton has no free energy: the differential value is the distribution
            work = config
            if frame == "rest":
                vals = _sc_rest(config, theta[:, 0], phi[:, 0], chans, scenario.spin)
            else:
                vals = np.stack([xsec.dsigma_sc_grid(work, theta, phi, ch, scenario.spin) for ch in chans], -1)
            diag = {"flagged_rows": 0}
        else:

            def part(sl, n=n, theta=theta, phi=phi, chans=chans):
                return quadrature.angular_distribution(
                    config, theta[sl], phi[sl], chans, scenario.spin, frame, rel_tol, max_level
                )

            parts = _map(part, _chunks(len(theta_lab), opts.threads), opts.threads)
            vals = np.concatenate([p[0] for p in parts])
            diag = {
                "flagged_rows": int(sum(p[1]["flagged_rows"] for p in parts)),
                "max_level": int(max(p[1]["max_level"] for p in parts)),
            }
        diagnostics[proc] = diag
        flagged = flagged or diag["flagged_rows"] > 0
        for j, ch in enumerate(chans):
            columns.append((f"{proc}_{ch}", f"b sr^-{n}"))
            data.append(_column(vals[:, j]))
    return Result(columns, np.column_stack(data), flagged=flagged, diagnostics=diagnostics)


def _sc_rest(config, theta_lab, phi, chans, spin):
    """Lab single-Compton distribution evaluated in the rest frame and converted with 1/J-tilde."""
    from .kinematics import cross_section_jacobian_Jtilde

    rest, _ = boost_config_to_rest_frame(config)
    _, theta_r = doppler_to_rest(1.0, theta_lab, config.gamma)
    scale = 1.0 / cross_section_jacobian_Jtilde(theta_r, gamma=config.gamma)
    kin = xsec.sc_kinematics(rest, theta_r[:, None], phi[:, None])
    w1_lab, _ = doppler_to_lab(kin.omega[..., 0], theta_r, config.gamma)
    keep = kin.valid & (w1_lab > config.cutoff)
    w = xsec.channel_weights(rest, kin, "both")
    cols = [np.where(keep, xsec.reduce_full_tensor(w, ch, 1, spin, rest), 0.0) * scale for ch in chans]
    return np.stack(cols, axis=-1)


def task_total_vs_omega0(scenario, opts):
    beam = scenario.beam
    omegas = beam.omega0.resolve() if isinstance(beam.omega0, Range) else np.array([beam.omega0])
    samples, seed = opts.samples, opts.seed
    rel_tol = _tol(scenario, "total_rel_tol", quadrature.TOTAL_REL_TOL)
    max_level = _tol(scenario, "total_max_level", quadrature.TOTAL_MAX_LEVEL)
    shards = max(scenario.numerics.get("shards", 1), opts.threads)
    ratio = _tol(scenario, "er_ratio", 5.0)
    columns = [("omega0", "MeV"), ("cutoff", "MeV")]
    for p in scenario.processes:
        columns += [(f"sigma_{p}", "b"), (f"sigma_{p}_err", "b")]
    for p in scenario.processes:
        if p != "SC":
            columns += [(f"sigma_{p}_NR", "b"), (f"sigma_{p}_ER", "b")]
    rows, diagnostics, flagged, warnings = [], {}, False, []
    for w0 in omegas:
        config = beam.config(float(w0))
        frame = scenario.frame_for(config)
        work = boost_config_to_rest_frame(config)[0] if frame == "rest" else config
        row, extra = [float(w0), config.cutoff], []
        at_rest = abs(work.e_i - work.m) <= 1e-12 * work.m
        for p in scenario.processes:
            n = PROCESSES[p]
            if p == "SC" and at_rest and frame == "lab":
                row += [xsec.sigma_sc_total(work.omega0, work.m), 0.0]
                continue
            try:
                est = quadrature.total_cross_section(p, work, samples, seed, shards, opts.threads, rel_tol, max_level)
            except ValueError as exc:
                warnings.append(f"omega0={float(w0)!r} {p}: {exc}")
                row += [0.0, 0.0]
                continue
            row += [est.value, est.stderr]
            diagnostics[f"{p}@{float(w0)!r}"] = est.diagnostics
            flagged = flagged or est.flagged
            if n == 2:
                extra += [xsec.sigma_dc_nr(work.omega0, work.m), xsec.sigma_er(work.omega0, 1, ratio, work.m)]
            elif n == 3:
                extra += [xsec.sigma_tc_nr(work.omega0, work.m), xsec.sigma_er(work.omega0, 2, ratio, work.m)]
        rows.append(row + extra)
    diagnostics["warnings"] = warnings
    diagnostics["er_ratio"] = ratio
    diagnostics["romberg_rel_tol"] = rel_tol
    return Result(columns, np.asarray(rows, dtype=float), flagged=flagged, diagnostics=diagnostics)


def task_single_point(scenario, opts):
    proc = scenario.process
    n = PROCESSES[proc]
    config = scenario.beam.config()
    frame = scenario.frame_for(config)
    legs = scenario.detector["legs"][:n]
    theta = np.array([leg["theta"] for leg in legs])
    phi = np.array([leg["phi"] for leg in legs])
    omegas = [leg["omega"] for leg in legs[: n - 1]]
    values, units = [], {1: "b sr^-1", 2: "b MeV^-1 sr^-2", 3: "b MeV^-2 sr^-3"}[n]
    doc = {"process": proc, "compute_frame": frame, "spin": scenario.spin}
    if n == 3 and frame == "rest":
        for ch in scenario.channels[proc]:
            v, w3 = xsec.dsigma_tc_via_rest_frame(config, omegas[0], omegas[1], theta, phi, ch, scenario.spin)
            values.append({"channel": ch, "value": float(v), "unit": units})
        omega_all = omegas + [float(w3)]
        valid = bool(np.isfinite(w3))
    else:
        kin = {1: xsec.sc_kinematics, 2: xsec.dc_kinematics, 3: xsec.tc_kinematics}[n](config, *omegas, theta, phi)
        grid = {1: xsec.dsigma_sc_grid, 2: xsec.dsigma_dc_grid, 3: xsec.dsigma_tc_grid}[n]
        for ch in scenario.channels[proc]:
            v = grid(config, *omegas, theta, phi, ch, scenario.spin)
            values.append({"channel": ch, "value": float(v), "unit": units})
        valid = bool(kin.valid)
        omega_all = [float(w) for w in np.ravel(kin.omega)]
    doc["point"] = {"omega0_MeV": config.omega0, "e_i_MeV": config.e_i, "cutoff_MeV": config.cutoff,
                    "omega_MeV": omega_all, "theta_rad": theta.tolist(), "phi_rad": phi.tolist(),
                    "allowed": valid}  # fmt: skip
    doc["values"] = values
    flagged = False
    if n == 3 and valid:
        spin = "summed" if scenario.spin == "averaged" else scenario.spin
        if frame == "rest":
            work, _ = boost_config_to_rest_frame(config)
            r1, t1 = doppler_to_rest(np.asarray(omegas[0]), theta[0], config.gamma)
            r2, t2 = doppler_to_rest(np.asarray(omegas[1]), theta[1], config.gamma)
            _, t3 = doppler_to_rest(1.0, theta[2], config.gamma)
            rho, kappa, ok = entanglement.density_matrices(work, r1, r2, np.array([t1, t2, t3]), phi, spin)
        else:
            rho, kappa, ok = entanglement.density_matrices(config, omegas[0], omegas[1], theta, phi, spin)
        if bool(ok):
            rho = np.asarray(rho)
            t, cert = entanglement.tau(rho, gap_tol=_tol(scenario, "gap_tol", entanglement.DEFAULT_GAP_TOL))
            check = cert.verify()
            flagged = bool(cert.diagnostics["flagged"]) or not check["ok"]
            meta = {"kappa": float(kappa), "spin": spin, "frame": frame}
            doc["density_matrix"] = json.loads(entanglement.to_json(rho, meta))
            doc["entanglement"] = {
                "tau": t,
                "Q_bits": entanglement.von_neumann_entropy(rho),
                "witness": cert.diagnostics,
                "certificate": check,
            }
    return Result(document=doc, flagged=flagged, diagnostics={"compute_frame": frame})


TASK_RUNNERS = {
    "grid-S": task_grid_s,
    "grid-Sbar": task_grid_s,
    "grid-tau-Q": task_grid_tau_q,
    "angular-sweep": task_angular_sweep,
    "total-vs-omega0": task_total_vs_omega0,
    "single-point": task_single_point,
}


# -- output ---------------------------------------------------------------------------------


def _metadata(scenario, opts, result, wall):
    return {
        "schema": RESULT_SCHEMA,
        "tool": "tricompton",
        "version": __version__,
        "task": scenario.task,
        "name": scenario.name,
        "scenario": scenario.raw,
        "seed": opts.seed,
        "samples": opts.samples,
        "numerics": scenario.numerics,
        "rng": quadrature.RNG_ALGORITHM,
        "masked_sentinel": SENTINEL,
        "columns": [{"name": c, "unit": u} for c, u in result.columns],
        "flagged": result.flagged,
        "diagnostics": result.diagnostics,
        "environment": {"python": platform.python_version(), "numpy": np.__version__},
        "wall_time_s": wall,
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
    }


def _csv_text(result):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([c for c, _ in result.columns])
    for row in np.atleast_2d(result.rows):
        writer.writerow([repr(float(v)) for v in row])
    return buf.getvalue()


def _json_text(result, metadata):
    if result.document is not None:
        doc = dict(result.document)
    else:
        doc = {"columns": [{"name": c, "unit": u} for c, u in result.columns],
               "rows": [[float(v) for v in row] for row in np.atleast_2d(result.rows)]}  # fmt: skip
    doc["metadata"] = metadata
    return json.dumps(_clean(doc), indent=1, default=str) + "\n"


def output_format(scenario, opts, path):
    if opts.format:
        return opts.format
    if scenario.output.get("format"):
        return scenario.output["format"]
    if path and path.endswith(".json"):
        return "json"
    return "json" if scenario.task == "single-point" else "csv"


def write_result(scenario, opts, result, wall, stdout):
    """Write the table/document; CSV output gets a ``.meta.json`` sidecar when written to a file."""
    path = opts.output or scenario.output.get("path")
    fmt = output_format(scenario, opts, path)
    if fmt == "csv" and result.document is not None:
        raise ScenarioError("output.format", "single-point results are JSON only")
    meta = _metadata(scenario, opts, result, wall)
    text = _csv_text(result) if fmt == "csv" else _json_text(result, meta)
    if not path or path == "-":
        stdout.write(text)
        return []
    folder = os.path.dirname(path)
    if folder:
        os.makedirs(folder, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    written = [path]
    if fmt == "csv":
        with open(path + ".meta.json", "w", encoding="utf-8") as fh:
            fh.write(json.dumps(_clean(meta), indent=1, default=str) + "\n")
        written.append(path + ".meta.json")
    return written


# -- argument parsing ----------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ScenarioError("arguments", message)


def _global_flags(parser, suppress):
    default = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    parser.add_argument("--seed", type=int, default=default(None), help="Monte Carlo seed")
    parser.add_argument("--samples", type=int, default=default(None), help="Monte Carlo angle samples")
    parser.add_argument("--threads", type=int, default=default(1), help="worker threads")
    parser.add_argument("--output", "-o", default=default(None), help="output path ('-' for stdout)")
    parser.add_argument("--format", choices=("csv", "json"), default=default(None))
    parser.add_argument("--allow-flagged", action="store_true", default=default(False),
                        help="exit 0 even when numerical flags are raised")  # fmt: skip


def _beam_flags(parser):
    parser.add_argument("--process", required=True, choices=sorted(PROCESSES))
    parser.add_argument("--omega0", required=True, help="incoming photon energy, e.g. '180 keV'")
    parser.add_argument("--e-i", default="m", help="electron energy (default: at rest)")
    parser.add_argument("--cutoff", required=True, help="threshold: energy, 'omega0/50' or 'e_i/100'")
    parser.add_argument("--polarization", default="x", choices=("x", "y", "1", "2"))
    parser.add_argument("--compute-frame", default="auto", choices=("auto", "lab", "rest"))


def build_parser():
    parser = _Parser(prog="tricompton", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"tricompton {__version__}")
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    common = _Parser(add_help=False)
    _global_flags(common, suppress=True)

    p = sub.add_parser("run", parents=[common], help="execute a scenario file")
    p.add_argument("scenario")
    p = sub.add_parser("validate", parents=[common], help="validate a scenario without computing")
    p.add_argument("scenario")
    p = sub.add_parser("total", parents=[common], help="total cross section by Monte Carlo")
    _beam_flags(p)
    p = sub.add_parser("point", parents=[common], help="differential cross section at one point")
    _beam_flags(p)
    p.add_argument("--omega", nargs="*", default=[], help="energies of all but the last photon")
    p.add_argument("--theta", nargs="+", required=True, help="polar angles (rad, or 'pi - x')")
    p.add_argument("--phi", nargs="+", required=True, help="azimuths (rad)")
    p.add_argument("--channel", action="append", help="polarization channel (repeatable)")
    p.add_argument("--spin", default="averaged", choices=("averaged", "summed"))
    return parser


def _beam_doc(args):
    return {"omega0": args.omega0, "e_i": args.e_i, "cutoff": args.cutoff, "polarization": args.polarization}


def _scenario_from_args(args):
    """Scenario mapping for the ``total`` and ``point`` subcommands."""
    if args.command == "total":
        doc = {"schema": 1, "task": "total-vs-omega0", "process": args.process,
               "beam": dict(_beam_doc(args), omega0=[args.omega0]), "compute_frame": args.compute_frame,
               "output": {"format": "json"}}  # fmt: skip
        return parse_scenario(doc)
    n = PROCESSES[args.process]
    if len(args.theta) != n or len(args.phi) != n:
        raise ScenarioError("arguments", f"{args.process} needs {n} --theta and --phi values")
    if len(args.omega) != n - 1:
        raise ScenarioError("arguments", f"{args.process} needs {n - 1} --omega values")
    legs = [{"theta": t, "phi": p} for t, p in zip(args.theta, args.phi)]
    for leg, w in zip(legs, args.omega):
        leg["omega"] = w
    for leg in legs:
        for key in ("theta", "phi"):
            try:
                leg[key] = float(leg[key])
            except ValueError:
                pass
    doc = {"schema": 1, "task": "single-point", "process": args.process, "beam": _beam_doc(args),
           "compute_frame": args.compute_frame, "detector": {"legs": legs},
           "channels": args.channel or "final-summed", "spin": args.spin}  # fmt: skip
    return parse_scenario(doc)


def _resolve_opts(args, scenario):
    num = scenario.numerics
    args.seed = args.seed if args.seed is not None else num.get("seed", DEFAULT_SEED)
    args.samples = args.samples if args.samples is not None else num.get("samples", DEFAULT_SAMPLES)
    if args.samples < 1000:
        raise ScenarioError("--samples", "need at least 1000 samples")
    if args.threads < 1:
        raise ScenarioError("--threads", "must be >= 1")
    return args


def run_scenario(scenario, opts, stdout=None):
    """Execute a validated scenario and write its output; returns ``(Result, written paths)``."""
    stdout = stdout or sys.stdout
    start = time.perf_counter()
    result = TASK_RUNNERS[scenario.task](scenario, opts)
    wall = time.perf_counter() - start
    return result, write_result(scenario, opts, result, wall, stdout)


def main(argv=None, stdout=None, stderr=None):
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    try:
        args = build_parser().parse_args(argv)
        if args.command in ("run", "validate"):
            scenario = load_scenario(args.scenario)
        else:
            scenario = _scenario_from_args(args)
        if args.command == "validate":
            report = validation_report(scenario)
            stdout.write(json.dumps(_clean(report), indent=1) + "\n")
            return EXIT_OK
        opts = _resolve_opts(args, scenario)
        result, written = run_scenario(scenario, opts, stdout)
    except (ScenarioError, KinematicsError) as exc:
        stderr.write(f"validation error: {exc}\n")
        return EXIT_VALIDATION
    except OSError as exc:
        stderr.write(f"I/O error: {exc}\n")
        return EXIT_IO
    for path in written:
        stderr.write(f"wrote {path}\n")
    if result.flagged:
        stderr.write("numerical flag raised (see metadata diagnostics)\n")
        if not opts.allow_flagged:
            return EXIT_FLAGGED
    return EXIT_OK


def main_exit():
    sys.exit(main())


if __name__ == "__main__":
    main_exit()
