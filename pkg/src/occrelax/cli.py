"""Command-line interface: ``occrelax {relax,decompose,gap,examples,lp-solve}``.

Exit codes: 0 success, 1 I/O or parse error, 2 infeasible, 3 unbounded,
4 codimension other than one, 5 gap invariant failure.
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys
from typing import Optional

import numpy as np

from . import __version__
from .core import BUILTINS, ProblemError, builtin, load_problem
from .measure import _atomic_write

log = logging.getLogger("occrelax")

EXIT_OK, EXIT_IO, EXIT_INFEASIBLE, EXIT_UNBOUNDED, EXIT_CODIM, EXIT_GAP = 0, 1, 2, 3, 4, 5

DESCRIPTIONS = {
    "double-well": "n=m=1, L=min(|z-1|,|z+1|) with y=0 forced: relaxed 0, classical 1",
    "double-well-convexified": "convex envelope of the double well: relaxed = classical = 0",
    "gap-ineq": "integral inequality constraint: relaxed 0.1, classical 1",
    "gap-eq": "integral equality constraint: relaxed 0.5, classical 2",
    "two-sheet": "support on two crossing lines (weights decided by the LP)",
    "codim1-demo": "n=2, m=1 convex problem with a known smooth minimiser (value 0.264)",
    "counterexample-2d": "n=m=2 integrand with a positive gap (see the gap subcommand)",
}


# -- output helpers ---------------------------------------------------------------

def _json(obj, indent: int = 0) -> str:
    """JSON with every float written to 17 significant digits (non-finite values as strings)."""
    pad = "  " * (indent + 1)
    end = "  " * indent
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{_json(str(k))}: {_json(v, indent + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        seq = list(obj.tolist() if isinstance(obj, np.ndarray) else obj)
        if not seq:
            return "[]"
        if all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in seq):
            return "[" + ", ".join(_json(v, indent + 1) for v in seq) + "]"
        return "[\n" + ",\n".join(pad + _json(v, indent + 1) for v in seq) + "\n" + end + "]"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if obj is None:
        return "null"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if not math.isfinite(v):
            return '"' + ("nan" if v != v else "inf" if v > 0 else "-inf") + '"'
        return format(v, ".17g")
    import json
    return json.dumps(str(obj))


def _write_json(path: str, obj) -> None:
    _atomic_write(path, _json(obj) + "\n")


def _threads() -> int:
    raw = os.environ.get("OCCRELAX_THREADS", "1")
    try:
        t = int(raw)
    except ValueError:
        raise ValueError(f"OCCRELAX_THREADS must be a positive integer, got {raw!r}") from None
    if t < 1:
        raise ValueError(f"OCCRELAX_THREADS must be a positive integer, got {raw!r}")
    return t


def _manifest(args, out: str, files) -> None:
    from .kernels import BACKEND

    cfg = {k: v for k, v in sorted(vars(args).items()) if k != "func"}
    _write_json(os.path.join(out, "manifest.json"), {
        "tool": "occrelax", "version": __version__, "kernel_backend": BACKEND,
        "threads": _threads(), "config": cfg, "files": sorted(files),
    })


def _outdir(args) -> str:
    os.makedirs(args.out, exist_ok=True)
    return args.out


def _problem(args):
    if args.builtin and args.problem:
        raise ProblemError("give either --builtin or --problem, not both")
    if args.problem:
        return load_problem(args.problem)
    if args.builtin:
        return builtin(args.builtin)
    raise ProblemError("a problem is required (--builtin NAME or --problem FILE)")


def _grid(args, problem):
    from .relax import grid_for

    for name in ("nx", "ny", "nz"):
        v = getattr(args, name)
        if v is not None and v < 2 and not (name in ("ny", "nz") and v == 1):
            raise ValueError(f"--{name} must be >= 2")
    return grid_for(problem, args.nx, args.ny, args.nz)


def _solve(args, problem):
    from .basis import TestBasis
    from .relax import solve_relaxation

    grid = _grid(args, problem)
    hint = problem.grid_hint or {}
    basis = TestBasis(grid, y_degree=args.degree if args.degree is not None else hint.get("y_degree", 4),
                      boundary_degree=args.degree if args.degree is not None else 4)
    return solve_relaxation(problem, grid, basis, tol_f=args.tol_f, tol_g=args.tol_g or 0.0, method=args.method)


# -- subcommands -----------------------------------------------------------------------

def cmd_relax(args) -> int:
    from .measure import write_measure_csv
    from .relax import RelaxationError

    problem = _problem(args)
    out = _outdir(args)
    files = ["result.json", "manifest.json"]
    try:
        res = _solve(args, problem)
    except RelaxationError as exc:
        _write_json(os.path.join(out, "result.json"), {"problem": problem.name, "status": exc.status,
                                                       "message": str(exc)})
        _manifest(args, out, files)
        print(f"relaxed problem is {exc.status}", file=sys.stderr)
        return EXIT_INFEASIBLE if exc.status == "infeasible" else EXIT_UNBOUNDED
    sol = res.solution
    write_measure_csv(res.measure, os.path.join(out, "measure.csv"), os.path.join(out, "boundary.csv"))
    files += ["measure.csv", "boundary.csv"]
    _write_json(os.path.join(out, "result.json"), {
        "problem": problem.name, "status": "optimal", "M_r": res.value, "lp_objective": res.lp_value,
        "lp": {"method": sol.method, "iterations": sol.iterations, "columns": res.active_support + res.active_boundary,
               "interior_columns": res.active_support, "boundary_columns": res.active_boundary},
        "residuals": dict(sol.residuals or {}, weak_identity=res.residual),
        "tolerances": res.tolerances, "grid": list(res.measure.grid.shape),
    })
    _manifest(args, out, files)
    print(_format_value("M_r", res.value))
    return EXIT_OK


def _format_value(name, v) -> str:
    return f"{name} = {format(float(v), '.17g')}"


def cmd_decompose(args) -> int:
    from .measure import read_measure_csv, profile_is_constant, projection_profile
    from .sheets import _distinct
    from .sheets import (check_boundary_superposition, check_superposition, density, extract_sheets,
                         recover_classical, write_density_csv, write_sheets_csv)

    problem = None
    if args.measure:
        mu = read_measure_csv(args.measure, args.boundary)
        result = None
    else:
        problem = _problem(args)
        if problem.m != 1:
            print(f"decompose needs codimension 1, problem {problem.name!r} has m={problem.m}", file=sys.stderr)
            return EXIT_CODIM
        from .relax import RelaxationError
        try:
            result = _solve(args, problem)
        except RelaxationError as exc:
            print(f"relaxed problem is {exc.status}", file=sys.stderr)
            return EXIT_INFEASIBLE if exc.status == "infeasible" else EXIT_UNBOUNDED
        mu = result.measure
    if mu.grid.m != 1:
        print(f"decompose needs codimension 1, measure has m={mu.grid.m}", file=sys.stderr)
        return EXIT_CODIM
    out = _outdir(args)
    rho = density(mu)
    fam = extract_sheets(rho, mu, args.sheets)
    write_density_csv(rho, os.path.join(out, "rho.csv"))
    write_sheets_csv(fam, mu.grid, os.path.join(out, "sheets.csv"))
    dev = check_superposition(mu, fam)
    report = {
        "sheets": fam.K, "levels": fam.levels, "nu": fam.nu,
        "superposition_deviation": dev, "max_deviation": max(dev.values()),
        "boundary_deviation": check_boundary_superposition(mu, fam),
        "rho_values": (_distinct(rho.rho) + 0.0).tolist() if fam.K <= 64 else None,
        "extended_columns": list(rho.extended),
        "projection_profile_constant": profile_is_constant(mu),
        "projection_profile_spread": float(np.ptp(projection_profile(mu))),
    }
    if problem is not None and result is not None:
        rep = recover_classical(problem, result, args.sheets)
        report["recovery"] = rep.summary()
    _write_json(os.path.join(out, "superposition_report.json"), report)
    _manifest(args, out, ["rho.csv", "sheets.csv", "superposition_report.json", "manifest.json"])
    print(f"{fam.K} sheets, max superposition deviation {format(report['max_deviation'], '.3g')}")
    return EXIT_OK


def _resolution(text: str):
    try:
        if "x" in text.lower():
            a, b = text.lower().split("x")
            return int(a), int(b)
        r = int(text)
        return r, 4 * r
    except ValueError:
        raise ValueError(f"--resolution must be R or RxT, got {text!r}") from None


def cmd_gap(args) -> int:
    from . import gapx

    nr, nt = _resolution(args.resolution)
    gapx._check_resolution(nr, nt)
    out = _outdir(args)
    report, search = gapx.verify_gap(nr, nt, args.inits, args.steps, args.seed, search_nr=args.search_nr,
                                     invariant_points=args.points, threshold=args.threshold)
    report["regularity"] = gapx.regularity_probe(200, seed=args.seed)
    gapx.write_polar_csv(search.minimizer, search.grid, os.path.join(out, "minimizer.csv"))
    _write_json(os.path.join(out, "gap_report.json"), report)
    _manifest(args, out, ["gap_report.json", "minimizer.csv", "manifest.json"])
    print(_format_value("relaxed_value", report["relaxed_value"]))
    print(_format_value("classical_min_found", report["classical_min_found"]))
    if report["gap_exhibited"]:
        return EXIT_OK
    failed = [k for k, v in report["invariant_checks"].items() if not v["ok"]]
    if report["relaxed_value"] > 1e-8:
        failed.append("relaxed_value <= 1e-8")
    if report["classical_min_found"] < args.threshold:
        failed.append(f"classical_min_found >= {args.threshold:g}")
    print("gap verification failed: " + "; ".join(failed), file=sys.stderr)
    return EXIT_GAP


def cmd_examples(args) -> int:
    out = _outdir(args)
    for name in BUILTINS:
        print(f"{name:26s} {DESCRIPTIONS.get(name, '')}")
    _write_json(os.path.join(out, "examples.json"), {k: DESCRIPTIONS.get(k, "") for k in BUILTINS})
    _manifest(args, out, ["examples.json", "manifest.json"])
    return EXIT_OK


def cmd_lp_solve(args) -> int:
    from .lp import load_lp, solve

    with open(args.file) as fh:
        lp = load_lp(fh.read())
    sol = solve(lp, method=args.method)
    out = _outdir(args)
    rec = {"status": sol.status, "method": sol.method, "iterations": sol.iterations}
    if sol.status == "optimal":
        rec.update(objective=sol.objective, x=sol.x, y=sol.y, reduced_costs=sol.reduced_costs,
                   residuals=sol.residuals)
    elif sol.status == "unbounded" and sol.ray is not None:
        rec["ray"] = sol.ray
    elif sol.status == "infeasible" and sol.farkas is not None:
        rec["farkas"] = sol.farkas
    _write_json(os.path.join(out, "solution.json"), rec)
    _manifest(args, out, ["solution.json", "manifest.json"])
    if sol.status == "optimal":
        print(_format_value("objective", sol.objective))
        return EXIT_OK
    print(f"LP is {sol.status}", file=sys.stderr)
    return EXIT_INFEASIBLE if sol.status == "infeasible" else EXIT_UNBOUNDED


# -- parser ------------------------------------------------------------------------------

def _seed(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="occrelax", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"occrelax {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, problem=True, out="occrelax-out"):
        sp.add_argument("--out", default=out, help="output directory (default: %(default)s)")
        sp.add_argument("--seed", type=_seed, default=0)
        if problem:
            sp.add_argument("--builtin", choices=sorted(BUILTINS))
            sp.add_argument("--problem", help="problem JSON file")
            sp.add_argument("--nx", type=int)
            sp.add_argument("--ny", type=int)
            sp.add_argument("--nz", type=int)
            sp.add_argument("--degree", type=int, help="polynomial degree of the test functions")
            sp.add_argument("--tol-f", type=float, dest="tol_f")
            sp.add_argument("--tol-g", type=float, dest="tol_g")
            sp.add_argument("--method", default="auto", choices=["auto", "simplex", "highs", "highs-ds", "highs-ipm"])

    sp = sub.add_parser("relax", help="solve the relaxed LP and write result.json and the measure")
    common(sp)
    sp.set_defaults(func=cmd_relax)

    sp = sub.add_parser("decompose", help="split a codimension-one measure into sheets")
    common(sp)
    sp.add_argument("--sheets", type=int, default=None, help="number of sheets K (default: exact levels)")
    sp.add_argument("--measure", help="measure CSV written by relax (instead of a problem)")
    sp.add_argument("--boundary", help="boundary measure CSV to go with --measure")
    sp.set_defaults(func=cmd_decompose)

    sp = sub.add_parser("gap", help="numerical verification of the two-dimensional counterexample")
    sp.add_argument("action", choices=["verify"])
    common(sp, problem=False)
    sp.add_argument("--resolution", default="32x128", help="quadrature resolution R (R x 4R) or RxT")
    sp.add_argument("--inits", type=int, default=50)
    sp.add_argument("--steps", type=int, default=500)
    sp.add_argument("--search-nr", type=int, default=8, dest="search_nr",
                    help="radial cells of the classical search grid (angular = 4x)")
    sp.add_argument("--points", type=int, default=100_000, help="random points for the field invariants")
    sp.add_argument("--threshold", type=float, default=1e-4)
    sp.set_defaults(func=cmd_gap)

    sp = sub.add_parser("examples", help="list the builtin problems")
    common(sp, problem=False)
    sp.set_defaults(func=cmd_examples)

    sp = sub.add_parser("lp-solve", help="solve an LP given in the plain-text format")
    sp.add_argument("file")
    common(sp, problem=False)
    sp.add_argument("--method", default="auto", choices=["auto", "simplex", "highs", "highs-ds", "highs-ipm"])
    sp.set_defaults(func=cmd_lp_solve)
    return p


def main(argv: Optional[list] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        _threads()
        return args.func(args)
    except AssertionError as exc:  # gapx.GapInvariantError
        print(f"gap invariant failed: {exc}", file=sys.stderr)
        return EXIT_GAP
    except ProblemError as exc:
        if "codimension" in str(exc):
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_CODIM
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
