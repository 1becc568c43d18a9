"""Command-line front end: ``cavity-scatter run|sweep|compare|preset``.

Exit codes: 0 success, 2 usage or validation error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import logging
import math
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .adapt import AdaptError, AdaptOptions, adapt_solve
from .postprocess import RcsCurve, backscatter, export_field, sweep_scenario
from .scenario import PRESETS, Scenario, ScenarioError, dump_scenario, load_scenario, preset
from .solver import SingularMatrixError, SolverError
from .specfun import SpecfunDomainError, SpecfunOverflowError

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NUMERIC = 3

log = logging.getLogger("cavity_scatter")


class UsageError(Exception):
    pass


def _configure_logging() -> None:
    level = os.environ.get("CAVITY_SCATTER_LOG", "warn").lower()
    levels = {"error": logging.ERROR, "warn": logging.WARNING, "warning": logging.WARNING, "info": logging.INFO, "debug": logging.DEBUG}
    logging.basicConfig(level=levels.get(level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")


def parse_grid(text: str) -> np.ndarray:
    """``start:step:stop`` (inclusive) or a comma-separated list."""
    text = text.strip()
    if not text:
        return np.zeros(0)
    try:
        if ":" in text:
            a, step, b = (float(x) for x in text.split(":"))
            if step <= 0:
                raise UsageError("grid step must be positive")
            if b < a:
                return np.zeros(0)
            n = int(math.floor((b - a) / step + 1e-9)) + 1
            return a + step * np.arange(n)
        return np.array([float(x) for x in text.split(",") if x.strip()])
    except ValueError as exc:
        raise UsageError(f"cannot parse grid {text!r}") from exc


def _common(p: argparse.ArgumentParser) -> None:
    src = p.add_mutually_exclusive_group()
    src.add_argument("--preset", help=f"benchmark preset ({', '.join(PRESETS)})")
    src.add_argument("--scenario", type=Path, help="scenario JSON document")
    p.add_argument("--theta", type=float, help="incidence angle in radians")
    p.add_argument("--polarization", choices=("TM", "TE"), help="must match the scenario if given")
    p.add_argument("--tau", type=float, default=0.5)
    p.add_argument("--tol", type=float)
    p.add_argument("--max-dof", type=int, default=15000)
    p.add_argument("--max-iterations", type=int, default=60)
    p.add_argument("--sigma0", type=float)
    p.add_argument("--rho-factor", type=float, help="rho = factor * R")
    p.add_argument("--m-pml", type=int)
    p.add_argument("--degree", type=int, choices=(1, 2))
    p.add_argument("--method", choices=("pml", "tbc"), default="pml")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", type=Path, default=Path("."))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cavity-scatter", description="Adaptive PML/TBC solver for open-cavity scattering")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="adaptive solve of one scenario")
    _common(run)
    for name in ("sweep", "compare"):
        sp = sub.add_parser(name, help="backscatter RCS sweep" if name == "sweep" else "PML vs TBC sweep")
        _common(sp)
        axis = sp.add_mutually_exclusive_group(required=True)
        axis.add_argument("--angles", help="incidence angles in degrees, start:step:stop")
        axis.add_argument("--freqs", help="frequencies in GHz, start:step:stop")
    pr = sub.add_parser("preset", help="list presets or emit a preset scenario document")
    pr.add_argument("action", choices=("list", "emit"))
    pr.add_argument("name", nargs="?")
    pr.add_argument("--out", type=Path)
    return parser


def resolve_scenario(args) -> Scenario:
    """Preset or file, then command-line overrides."""
    if args.scenario is not None:
        try:
            s = load_scenario(args.scenario.read_text())
        except OSError as exc:
            raise UsageError(f"cannot read scenario file: {exc}") from exc
    elif args.preset is not None:
        if args.preset not in PRESETS:
            raise UsageError(f"unknown preset {args.preset!r}; available presets: {', '.join(PRESETS)}")
        s = preset(args.preset)
    else:
        raise UsageError("one of --preset or --scenario is required")
    if args.polarization is not None and args.polarization != s.polarization:
        raise UsageError(f"polarization override {args.polarization} does not match scenario polarization {s.polarization}")
    changes = {}
    if args.theta is not None:
        changes["theta"] = args.theta
    if args.sigma0 is not None:
        changes["sigma0"] = args.sigma0
    if args.rho_factor is not None:
        changes["rho"] = args.rho_factor * s.R
    if args.m_pml is not None:
        changes["m_pml"] = args.m_pml
    if args.degree is not None:
        changes["fem_degree"] = args.degree
    return s.replace(**changes) if changes else s


def resolve_options(args, method: str | None = None) -> AdaptOptions:
    if args.threads < 1:
        raise UsageError("--threads must be >= 1")
    try:
        return AdaptOptions(
            tau=args.tau,
            tol=args.tol,
            max_dof=args.max_dof,
            max_iterations=args.max_iterations,
            method=method or args.method,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def cmd_run(args) -> int:
    s = resolve_scenario(args)
    opts = resolve_options(args)
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    res = adapt_solve(s, opts)
    wall = time.perf_counter() - t0
    res.history.to_csv(out / "history.csv", include_time=False)
    res.history.to_csv(out / "timing.csv", include_time=True)
    res.report.to_csv(out / "estimate.csv")
    export_field(res.field, out / "field.vtk", res.report)
    P, sig, db = backscatter(res.field)
    last = res.history[-1]
    reason = "tol" if opts.tol is not None and last.eps_h <= opts.tol else (
        "max_dof" if opts.max_dof is not None and last.dof_count >= opts.max_dof else "max_iterations"
    )
    summary = [
        f"scenario: {s.name}",
        f"method: {opts.method}",
        f"polarization: {s.polarization}",
        f"theta_rad: {s.theta:.10f}",
        f"iterations: {len(res.history)}",
        f"dof: {last.dof_count}",
        f"dof_physical: {last.dof_physical}",
        f"eps_h: {last.eps_h:.6e}",
        f"eps_pml: {last.eps_pml:.6e}",
        f"backscatter_rcs_db: {db:.6f}",
        f"stop: {reason}",
        f"wall_time_s: {wall:.2f}",
    ]
    (out / "summary.txt").write_text("\n".join(summary) + "\n")
    print("\n".join(summary))
    return EXIT_OK


def _axis(args):
    if args.angles is not None:
        return "angle_deg", parse_grid(args.angles)
    return "frequency_ghz", parse_grid(args.freqs)


def _sweep(s: Scenario, axis: str, values, opts: AdaptOptions, threads: int) -> RcsCurve:
    def one(v):
        return backscatter(adapt_solve(sweep_scenario(s, axis, v), opts).field)[2]

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            dbs = list(ex.map(one, values))
    else:
        dbs = [one(v) for v in values]
    return RcsCurve(axis, values, np.array(dbs), s.polarization, opts.method)


def _grid_or_fail(args):
    axis, values = _axis(args)
    if values.size == 0:
        raise UsageError("empty sweep grid")
    if len(values) > 1 and np.any(np.diff(values) <= 0):
        raise UsageError("sweep grid must be strictly increasing")
    return axis, values


def cmd_sweep(args) -> int:
    s = resolve_scenario(args)
    axis, values = _grid_or_fail(args)
    opts = resolve_options(args)
    args.out.mkdir(parents=True, exist_ok=True)
    curve = _sweep(s, axis, values, opts, args.threads)
    curve.to_csv(args.out / "rcs.csv")
    print(f"wrote {len(values)} rows to {args.out / 'rcs.csv'}")
    return EXIT_OK


def cmd_compare(args) -> int:
    s = resolve_scenario(args)
    axis, values = _grid_or_fail(args)
    args.out.mkdir(parents=True, exist_ok=True)
    curves = {}
    for method in ("pml", "tbc"):
        curves[method] = _sweep(s, axis, values, resolve_options(args, method), args.threads)
        curves[method].to_csv(args.out / f"rcs_{method}.csv")
    delta = curves["pml"].rcs_db - curves["tbc"].rcs_db
    with open(args.out / "delta.csv", "w") as fh:
        fh.write("axis,value,delta_db\n")
        for v, d in zip(values, delta):
            fh.write(f"{axis},{v:.6f},{d:.6f}\n")
    summary = f"points: {len(values)}\nmax_abs_delta_db: {np.max(np.abs(delta)):.6f}\nmean_abs_delta_db: {np.mean(np.abs(delta)):.6f}\n"
    (args.out / "summary.txt").write_text(summary)
    print(summary, end="")
    return EXIT_OK


def cmd_preset(args) -> int:
    if args.action == "list":
        print("\n".join(PRESETS))
        return EXIT_OK
    if args.name is None:
        raise UsageError("preset emit needs a preset name")
    if args.name not in PRESETS:
        raise UsageError(f"unknown preset {args.name!r}; available presets: {', '.join(PRESETS)}")
    text = dump_scenario(preset(args.name)) + "\n"
    if args.out is not None:
        args.out.write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


COMMANDS = {"run": cmd_run, "sweep": cmd_sweep, "compare": cmd_compare, "preset": cmd_preset}


def main(argv=None) -> int:
    _configure_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        return COMMANDS[args.command](args)
    except (UsageError, ScenarioError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (AdaptError, SingularMatrixError, SolverError, SpecfunDomainError, SpecfunOverflowError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
