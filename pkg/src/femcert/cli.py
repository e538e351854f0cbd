"""Command-line front end.

Exit codes: 0 success, 2 configuration or I/O error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import ast
import csv
import io
import logging
import math
import operator
import sys
from concurrent.futures import ThreadPoolExecutor
from typing import Optional, Sequence

import numpy as np
from scipy.sparse.linalg import ArpackError, ArpackNoConvergence

from . import constants
from .certify import (
    REPORT_COLUMNS,
    certify_run,
    convergence_study,
    is_unit_square,
    report_row,
    reports_to_csv,
)
from .femcore import SolverError, project_mean, solve_poisson_cr
from .fields import parse_builtin
from .flux import FluxConformityError, build_rt_flux, solve_modified_cr
from .svg import Series, line_plot
from .trimesh import MeshError, check_shape_range, generate_friedrichs_keller, read_mesh, write_mesh

log = logging.getLogger("femcert")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3

NUMERICAL_ERRORS = (SolverError, FluxConformityError, np.linalg.LinAlgError, ArpackError, ArpackNoConvergence, FloatingPointError)


class ConfigError(Exception):
    pass


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.17g}"


# ----------------------------------------------------------------- parsing

_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul, ast.Div: operator.truediv, ast.Pow: operator.pow}
_UNOPS = {ast.USub: operator.neg, ast.UAdd: operator.pos}
_NAMES = {"pi": math.pi, "e": math.e}


def parse_real(text: str) -> float:
    """Evaluate a small arithmetic expression such as ``pi/2`` or ``2*pi/3``."""

    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return float(node.value)
        if isinstance(node, ast.Name) and node.id in _NAMES:
            return _NAMES[node.id]
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            return _BINOPS[type(node.op)](ev(node.left), ev(node.right))
        if isinstance(node, ast.UnaryOp) and type(node.op) in _UNOPS:
            return _UNOPS[type(node.op)](ev(node.operand))
        raise ConfigError(f"cannot evaluate {text!r}")

    try:
        value = ev(ast.parse(text.strip(), mode="eval"))
    except (SyntaxError, ZeroDivisionError) as exc:
        raise ConfigError(f"cannot evaluate {text!r}: {exc}") from None
    if not math.isfinite(value):
        raise ConfigError(f"{text!r} is not finite")
    return value


def parse_grid(text: str) -> list[float]:
    """Inclusive grid ``A0:A1:STEP``."""
    parts = text.split(":")
    if len(parts) != 3:
        raise ConfigError(f"grid {text!r} must be A0:A1:STEP")
    a0, a1, step = (parse_real(p) for p in parts)
    if step <= 0 or a1 < a0:
        raise ConfigError(f"grid {text!r} needs A0 <= A1 and STEP > 0")
    count = int(math.floor((a1 - a0) / step + 1e-9)) + 1
    return [round(a0 + k * step, 12) for k in range(count)]


def parse_int_list(text: str, what: str) -> list[int]:
    try:
        values = [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise ConfigError(f"{what} must be a comma-separated list of integers, got {text!r}") from None
    if not values or min(values) < 1:
        raise ConfigError(f"{what} must hold positive integers, got {text!r}")
    return values


def parse_ids(text: str) -> list[str]:
    try:
        return [constants.constant_id(t.strip()) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _load(spec: str):
    try:
        return parse_builtin(spec)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _write(path: str, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


# ----------------------------------------------------------------- commands


def cmd_mesh_gen(args) -> int:
    _write(args.output, write_mesh(generate_friedrichs_keller(args.fk)))
    return EXIT_OK


def _atlas_rows(ids, alphas, theta, n, poly_degree):
    jobs = [(j, a) for j in ids for a in alphas]

    def run(job):
        j, a = job
        try:
            return constants.estimate(j, a, theta, n, poly_degree), None
        except NUMERICAL_ERRORS as exc:
            return None, f"failed:{type(exc).__name__}"

    workers = constants.worker_count()
    if workers == 1:
        results = [run(job) for job in jobs]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, jobs))
    return jobs, results


def cmd_constants(args) -> int:
    ids = parse_ids(args.J)
    alphas = parse_grid(args.alpha)
    theta = parse_real(args.theta)
    for a in alphas:
        try:
            check_shape_range(a, theta)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    jobs, results = _atlas_rows(ids, alphas, theta, args.n, args.poly_degree)

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(constants.ATLAS_COLUMNS)
    failed = 0
    for (j, a), (est, err) in zip(jobs, results):
        if est is None:
            failed += 1
            w.writerow([j, _fmt(a), _fmt(theta), "", "", err, args.n, args.poly_degree])
        else:
            w.writerow(
                [est.id, _fmt(est.alpha), _fmt(est.theta), _fmt(est.lower),
                 _fmt(est.upper), est.method, _fmt(est.n), _fmt(est.poly_degree)]
            )
    _write(args.output, buf.getvalue())

    if args.svg:
        series = []
        for j in ids:
            rows = [est for (jj, _), (est, _) in zip(jobs, results) if jj == j and est is not None]
            xs = [r.alpha for r in rows]
            series.append(Series(xs, [r.lower for r in rows], f"C{j} lower"))
            series.append(Series(xs, [r.upper for r in rows], f"C{j} upper", dashed=True, markers=False))
        _write(args.svg, line_plot(series, f"error constants, theta = {theta:.4g}", "alpha", "C"))
    if failed:
        log.error("%d of %d atlas points failed", failed, len(jobs))
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_converge(args) -> int:
    f = _load(args.f)
    if f.exact_solution is None:
        raise ConfigError(f"load {args.f!r} has no closed-form exact solution")
    N_list = parse_int_list(args.N, "--N")
    reports = convergence_study(f, f.exact_solution, N_list)
    _write(args.output, reports_to_csv(reports))
    if args.svg and not args.no_svg:
        h = [r.h for r in reports]
        series = [
            Series(h, [r.energy_err for r in reports], "energy error"),
            Series(h, [r.apriori_energy for r in reports], "a priori energy", dashed=True),
            Series(h, [r.l2_err for r in reports], "L2 error"),
            Series(h, [r.apriori_l2 for r in reports], "a priori L2", dashed=True),
            Series(h, [r.flux_err for r in reports], "flux error"),
            Series(h, [r.apost_flux for r in reports], "hypercircle", dashed=True),
        ]
        _write(args.svg, line_plot(series, "errors and bounds", "h*", "error", loglog=True))
    return EXIT_OK


SOLVE_REPORT_COLUMNS = REPORT_COLUMNS + ["C6h", "max_angle_deg", "warning"]


def cmd_solve(args) -> int:
    f = _load(args.f)
    if args.fk is not None:
        mesh = generate_friedrichs_keller(args.fk)
        convex = True
        N = args.fk
    else:
        try:
            with open(args.mesh, encoding="utf-8") as fh:
                mesh = read_mesh(fh)
        except MeshError as exc:
            raise ConfigError(f"{args.mesh}: {exc}") from None
        convex = args.convex
        N = None
    exact = f.exact_solution if is_unit_square(mesh) else None
    report = certify_run(mesh, f, exact, convex=convex, N=N)

    u_h = solve_poisson_cr(mesh, f)
    fbar = project_mean(mesh, f)
    p = build_rt_flux(mesh, solve_modified_cr(mesh, fbar), fbar)
    _write(f"{args.output}_solution.csv", u_h.to_csv())
    _write(f"{args.output}_flux.csv", p.to_csv())

    gc = report.constants
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SOLVE_REPORT_COLUMNS)
    w.writerow(report_row(report) + [_fmt(gc.C6h), _fmt(math.degrees(gc.max_angle)), "; ".join(report.warnings)])
    _write(f"{args.output}_report.csv", buf.getvalue())
    return EXIT_OK


# ----------------------------------------------------------------- entry


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="femcert", description="Certified CR finite element error bounds.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("mesh-gen", help="write a Friedrichs-Keller mesh of the unit square")
    p.add_argument("--fk", type=int, required=True)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_mesh_gen)

    p = sub.add_parser("constants", help="atlas of error constants over an alpha grid")
    p.add_argument("--J", required=True, help="comma-separated ids from " + ",".join(constants.CONSTANT_IDS))
    p.add_argument("--alpha", required=True, help="A0:A1:STEP, inclusive")
    p.add_argument("--theta", default="pi/2", help="angle in radians; expressions such as pi/2 accepted")
    p.add_argument("--n", type=int, default=32)
    p.add_argument("--poly-degree", type=int, default=8)
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--svg")
    p.set_defaults(func=cmd_constants)

    p = sub.add_parser("converge", help="convergence study on Friedrichs-Keller meshes")
    p.add_argument("--N", default="4,8,16,32,64")
    p.add_argument("--f", default="builtin:sinsin")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--svg")
    p.add_argument("--no-svg", action="store_true")
    p.set_defaults(func=cmd_converge)

    p = sub.add_parser("solve", help="single certified solve")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--mesh")
    src.add_argument("--fk", type=int)
    p.add_argument("--f", required=True)
    p.add_argument("-o", "--output", required=True, help="output prefix")
    p.add_argument("--convex", action="store_true", help="domain is convex (implied by --fk)")
    p.set_defaults(func=cmd_solve)
    return parser


def _validate(args) -> None:
    for name in ("fk", "n", "poly_degree"):
        value = getattr(args, name, None)
        if value is not None and value < 1:
            raise ConfigError(f"--{name.replace('_', '-')} must be positive")


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        _validate(args)
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NUMERICAL_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
