"""Command-line entry point.

Subcommands: ``macro``, ``micro``, ``converge``, ``cell`` and ``audit``.
Exit codes: 0 success, 1 invalid input, 2 solver failure, 3 unresolved
sphere, 4 failed check.
"""

from __future__ import annotations

import argparse
import itertools
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from . import analysis as an
from . import io as hio
from .audit import run_audit
from .config import RunConfig, describe_schema
from .errors import ConfigError, HomogenLabError, SolverError, UnresolvedSphere
from .grid import RRule, build_perforated_domain, min_cells_for_radius, sample_source
from .homogenized import closure_residual, picard_macro
from .linalg import SolverConfig
from .micro import picard_micro

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_SOLVER = 2
EXIT_RESOLUTION = 3
EXIT_CHECK = 4

WORKERS_ENV = "HOMOGENLAB_WORKERS"

logger = logging.getLogger("homogenlab")


class _Parser(argparse.ArgumentParser):
    # usage errors are validation failures, not solver failures
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value configuration file")
    common.add_argument("--out", help="output directory (default: output.dir)")
    common.add_argument("--workers", type=int, help=f"parallel sweep workers (default: ${WORKERS_ENV} or 1)")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override one setting")
    common.add_argument("-v", "--verbose", action="count", default=0)

    p = _Parser(prog="homogenlab", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("--print-schema", action="store_true", help="list every setting with its default and exit")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.add_parser("macro", parents=[common], help="solve the homogenized model")
    sub.add_parser("micro", parents=[common], help="solve the perforated model at the first eps")
    sub.add_parser("converge", parents=[common], help="eps sweep against the homogenized model")
    sub.add_parser("cell", parents=[common], help="single-sphere drag and corrector energies")
    sub.add_parser("audit", parents=[common], help="randomized checks of the averaging estimates")
    return p


def resolve_workers(flag):
    if flag is not None:
        n = flag
    else:
        env = os.environ.get(WORKERS_ENV, "").strip()
        try:
            n = int(env) if env else 1
        except ValueError:
            raise ConfigError(f"{WORKERS_ENV}={env!r} is not an integer", key=WORKERS_ENV) from None
    if n < 1:
        raise ConfigError("worker count must be at least 1", key="--workers")
    return n


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def _manifest(cfg: RunConfig, command, results):
    entries = {k: v for k, v in cfg.manifest().items()}
    entries["run.command"] = command
    entries["run.version"] = __version__
    for k, v in results.items():
        entries[f"result.{k}"] = _fmt(v)
    return entries


def _write_fields(out: Path, stem, grid, u, scalars):
    vectors = {"u": u.cell_centered()}
    hio.write_cell_fields(out / f"{stem}_cells.vtk", grid, scalars, vectors)
    for d in range(3):
        hio.write_face_component(out / f"{stem}_u{'xyz'[d]}.vtk", grid, u, d)


def _max_div(u, mask=None):
    div = np.abs(u.divergence())
    if mask is not None:
        div = div[mask]
    return float(div.max()) if div.size else 0.0


# subcommands


def cmd_macro(cfg: RunConfig, out: Path, workers=1):
    grid = cfg.grid()
    params = cfg.params()
    sol = picard_macro(grid, params, cfg.solver(), cfg["picard.relax"], cfg["picard.max_outer"])
    g = sample_source(params.g, grid)
    closure = closure_residual(sol.theta, sol.tau, g, params.b, params.gamma)
    _write_fields(
        out, "macro", grid, sol.u, {"theta": sol.theta.values, "tau": sol.tau.values, "p": sol.p.values}
    )
    results = {
        "picard_iters": sol.picard_iters,
        "picard_residual": sol.picard_residual,
        "closure_residual": closure,
        "max_div_u": _max_div(sol.u),
    }
    hio.write_manifest(out / "manifest.txt", _manifest(cfg, "macro", results))
    print(f"macro: {sol.picard_iters} Picard iterations, closure residual {closure:.3e}")
    print(f"max |theta| = {np.max(np.abs(sol.theta.values)):.6g}, |u|_L2 = {sol.u.l2_norm():.6g}")
    return EXIT_OK


def _domain(cfg: RunConfig, eps):
    return build_perforated_domain(cfg.box(), eps, cfg["domain.gamma"], cfg.grid(), RRule(cfg["domain.R_rule"]))


def cmd_micro(cfg: RunConfig, out: Path, workers=1):
    eps = cfg["domain.epsilons"][0]
    dom = _domain(cfg, eps)
    sol = picard_micro(dom, cfg.params(), cfg.solver(), cfg["picard.relax"], cfg["picard.max_outer"])
    scalars = {"theta": sol.theta.values, "p": sol.p.values, "phase": dom.phase_mask.astype(float)}
    _write_fields(out, "micro", dom.grid, sol.u, scalars)
    results = {
        "eps": eps,
        "r_eps": dom.r_eps,
        "R_eps": dom.R_eps,
        "n_spheres": dom.n_spheres,
        "solid_cells": int(np.count_nonzero(dom.solid)),
        "picard_iters": sol.picard_iters,
        "picard_residual": sol.picard_residual,
        "max_div_u_fluid": _max_div(sol.u, dom.fluid),
    }
    hio.write_manifest(out / "manifest.txt", _manifest(cfg, "micro", results))
    print(f"micro: eps={eps:.6g}, {dom.n_spheres} spheres of radius {dom.r_eps:.6g}, {sol.picard_iters} Picard iterations")
    print(f"max |theta| = {np.max(np.abs(sol.theta.values)):.6g}, |u|_L2 = {sol.u.l2_norm():.6g}")
    return EXIT_OK


def _check_resolution(cfg: RunConfig):
    """Raise UnresolvedSphere naming the grid that resolves every eps of the sweep."""
    hmax = max(cfg.grid().h)
    worst = None
    for eps in cfg["domain.epsilons"]:
        r = cfg["domain.gamma"] * eps**3
        if r < 2.0 * hmax:
            need = min_cells_for_radius(cfg.box(), r)
            worst = max(worst or 0, need)
    if worst is not None:
        raise UnresolvedSphere(
            f"grid.n={cfg['grid.n']} does not resolve every sphere of the sweep; use grid.n >= {worst}",
            min_cells=worst,
        )


def _micro_run(cfg: RunConfig, eps):
    t0 = time.perf_counter()
    dom = _domain(cfg, eps)
    sol = picard_micro(dom, cfg.params(), cfg.solver(), cfg["picard.relax"], cfg["picard.max_outer"])
    return dom, sol, time.perf_counter() - t0


def _map(fn, args, workers):
    if workers <= 1 or len(args) <= 1:
        return [fn(*a) for a in args]
    with ProcessPoolExecutor(max_workers=min(workers, len(args))) as pool:
        futures = [pool.submit(fn, *a) for a in args]
        return [f.result() for f in futures]


def cmd_converge(cfg: RunConfig, out: Path, workers=1):
    eps_list = cfg["domain.epsilons"]
    if len(eps_list) < 2:
        raise ConfigError("domain.epsilons: a sweep needs at least two values", key="domain.epsilons")
    if any(b >= a for a, b in itertools.pairwise(eps_list)):
        raise ConfigError("domain.epsilons: values must be strictly decreasing", key="domain.epsilons")
    _check_resolution(cfg)
    for eps in eps_list:
        _domain(cfg, eps)  # geometry errors surface before any solve

    grid = cfg.grid()
    params = cfg.params()
    timings = cfg["output.timings"]
    t0 = time.perf_counter()
    macro = picard_macro(grid, params, cfg.solver(), cfg["picard.relax"], cfg["picard.max_outer"])
    macro_seconds = time.perf_counter() - t0
    runs = _map(_micro_run, [(cfg, e) for e in eps_list], workers)

    report = an.ConvergenceReport()
    for dom, sol, secs in runs:
        report.add(an.micro_macro_errors(sol, macro, dom, b=params.b, seconds=secs if timings else 0.0))
    hio.write_csv(out / "convergence.csv", an.CSV_COLUMNS, [r.csv_values() for r in report.rows])
    diag_cols = ["eps", "n_spheres", "apriori_energy", "measure_total", "measure_deficit", "macro_picard_iters"]
    diag_rows = []
    for row, (dom, _, _) in zip(report.rows, sorted(runs, key=lambda t: -t[0].epsilon)):
        diag_rows.append(
            [row.eps, dom.n_spheres, row.apriori_energy, row.measure_total, row.box_volume - row.measure_total,
             row.macro_picard_iters]
        )
    hio.write_csv(out / "diagnostics.csv", diag_cols, diag_rows)
    g = sample_source(params.g, grid)
    results = {
        "closure_residual": closure_residual(macro.theta, macro.tau, g, params.b, params.gamma),
        "err_theta_decreasing": report.strictly_decreasing("err_theta_L2"),
        "apriori_energy_spread": report.spread("apriori_energy"),
        "ratio_p24_spread": report.spread("ratio_p24"),
    }
    if timings:
        results["macro_seconds"] = macro_seconds
    hio.write_manifest(out / "manifest.txt", _manifest(cfg, "converge", results))
    if cfg["output.plots"]:
        from .plotting import plot_convergence

        plot_convergence(report, out / "convergence.png")

    print(",".join(an.CSV_COLUMNS))
    for r in report.rows:
        print(",".join(_fmt(v) for v in r.csv_values()))
    if not results["err_theta_decreasing"]:
        print("temperature error is not strictly decreasing along the sweep", file=sys.stderr)
        return EXIT_CHECK
    return EXIT_OK


def _drag_run(r, R, cells, scfg):
    return an.cell_stokes_drag(r, R, cells, scfg)


def cmd_cell(cfg: RunConfig, out: Path, workers=1):
    r = cfg["cell.r"]
    R_list = cfg["cell.R_list"]
    if any(R < 4.0 * r for R in R_list):
        raise ConfigError("cell.R_list: the drag box needs R >= 4 r", key="cell.R_list")
    quad_n = cfg["cell.quad_n"]
    energy_rows = []
    for R in cfg["cell.energy_R_list"]:
        e = an.corrector_energy(r, R, quad_n)
        cap = an.capacity(r, R)
        energy_rows.append([r, R, e, cap, e / cap])
    scfg = SolverConfig(rel_tol=cfg["cell.rel_tol"], abs_tol=cfg["solver.abs_tol"], max_iter=cfg["solver.max_iter"])
    drags = _map(_drag_run, [(r, R, cfg["cell.cells_per_radius"], scfg) for R in R_list], workers)
    drag_rows = [[R / r, d.cells, d.drag, d.ratio, d.iterations] for R, d in zip(R_list, drags)]
    hio.write_csv(out / "cell_drag.csv", ["R_over_r", "cells", "drag", "drag_ratio", "uzawa_iters"], drag_rows)
    hio.write_csv(out / "cell_energy.csv", ["r1", "r2", "energy", "capacity", "ratio"], energy_rows)
    results = {f"drag_ratio_R{_fmt(R)}": d.ratio for R, d in zip(R_list, drags)}
    hio.write_manifest(out / "manifest.txt", _manifest(cfg, "cell", results))
    if cfg["output.plots"]:
        from .plotting import plot_drag

        plot_drag([(row[0], row[3]) for row in drag_rows], [(row[1] / r, row[4]) for row in energy_rows],
                  out / "cell.png")

    print("R/r      cells  drag              drag/(6 pi r)")
    for row in drag_rows:
        print(f"{row[0]:<8.4g} {row[1]:<6d} {row[2]:<17.10g} {row[3]:.10g}")
    print()
    print("r1       r2       energy            4 pi r1 r2/(r2-r1)  ratio")
    for row in energy_rows:
        print(f"{row[0]:<8.4g} {row[1]:<8.4g} {row[2]:<17.10g} {row[3]:<19.10g} {row[4]:.8f}")
    return EXIT_OK


def cmd_audit(cfg: RunConfig, out: Path, workers=1):
    results = run_audit(
        cfg.grid(),
        cfg["domain.epsilons"],
        cfg["domain.gamma"],
        seed=cfg["audit.seed"],
        n_profiles=cfg["audit.n_profiles"],
        n_fields=cfg["audit.n_fields"],
        corrector_power=cfg["audit.corrector_power"],
        quad_n=cfg["audit.quad_n"],
        R_rule=RRule(cfg["domain.R_rule"]),
    )
    lines = [r.line() for r in results]
    (out / "audit.txt").write_text("\n".join(lines) + "\n")
    hio.write_manifest(
        out / "manifest.txt", _manifest(cfg, "audit", {f"{r.name}.passed": r.passed for r in results})
    )
    for line in lines:
        print(line)
    return EXIT_OK if all(r.passed for r in results) else EXIT_CHECK


COMMANDS = {
    "macro": cmd_macro,
    "micro": cmd_micro,
    "converge": cmd_converge,
    "cell": cmd_cell,
    "audit": cmd_audit,
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.print_schema:
        print("\n".join(describe_schema()))
        return EXIT_OK
    if not args.command:
        parser.print_usage(sys.stderr)
        return EXIT_INVALID
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = RunConfig.load(args.config, args.set)
        workers = resolve_workers(args.workers)
        out = Path(args.out or cfg["output.dir"])
        out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](cfg, out, workers)
    except UnresolvedSphere as exc:
        print(f"unresolved sphere: {exc}", file=sys.stderr)
        if exc.min_cells:
            print(f"suggested grid.n = {exc.min_cells}", file=sys.stderr)
        return EXIT_RESOLUTION
    except SolverError as exc:
        print(f"solver failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except ConfigError as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (HomogenLabError, ValueError, OSError) as exc:
        print(f"invalid input: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
