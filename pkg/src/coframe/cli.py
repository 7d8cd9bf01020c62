"""Command-line front end.

Subcommands::

    coframe tableau  --matrix "q11,...,q33" | --input Q.json
    coframe element  --matrix "z11,...,z33" [--attempts N]
    coframe solve    --input problem.json [--output DIR] | --example line|example46
    coframe diagnose upsilon | example46 | family [--g2 ...] [--g3 ...] | --input c.json

Reports are written to stdout (or ``--output``) as sorted-key JSON.  Exit codes:

====  ==========================================================
0     success
1     other solver error (message on stderr)
2     degenerate hypothesis (Example-type critical point, vanishing factor)
3     rank-deficient Z
4     degenerate tableau (cone or low dimension)
5     search exhausted
6     residual above threshold (report still written)
7     inconclusive certificate
64    usage error or malformed input
66    missing input file
====  ==========================================================
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import diagnostics, rank1_solver
from .errors import (CoframeError, DegenerateHypothesis, FactorVanishes, NotAZero,
                     RankDeficient, SearchExhausted)
from .fields import Grid, Polynomial
from .integral_elements import find_involutive_p
from .tableau import classify

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_DEGENERATE_HYPOTHESIS = 2
EXIT_RANK_DEFICIENT = 3
EXIT_DEGENERATE_TABLEAU = 4
EXIT_EXHAUSTED = 5
EXIT_RESIDUAL = 6
EXIT_INCONCLUSIVE = 7
EXIT_USAGE = 64
EXIT_NO_INPUT = 66


class UsageError(Exception):
    pass


class MissingInput(Exception):
    pass


def _dump(obj):
    return json.dumps(obj, sort_keys=True, indent=2, default=_json_default) + "\n"


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    raise TypeError(f"cannot serialize {type(o).__name__}")


def _emit(report, args):
    text = _dump(report)
    if getattr(args, "output", None) and args.command != "solve":
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)


def _read_json(path):
    p = Path(path)
    if not p.is_file():
        raise MissingInput(f"no such file: {path}")
    try:
        return json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: malformed JSON ({exc})") from exc


def _parse_matrix(text):
    """Nine reals, row-major; JSON (flat or nested) or comma/space separated."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError:
        try:
            data = [float(t) for t in text.replace(",", " ").split()]
        except ValueError as exc:
            raise UsageError(f"cannot parse matrix {text!r}") from exc
    return _as_matrix(data)


def _as_matrix(data):
    if isinstance(data, dict):
        for key in ("Q", "Z", "matrix"):
            if key in data:
                return _as_matrix(data[key])
        raise UsageError("matrix object needs a 'Q', 'Z' or 'matrix' key")
    try:
        arr = np.asarray(data, dtype=float).reshape(-1)
    except (TypeError, ValueError) as exc:
        raise UsageError("matrix entries must be numbers") from exc
    if arr.size != 9 or not np.all(np.isfinite(arr)):
        raise UsageError("a 3x3 matrix takes nine finite reals")
    return arr.reshape(3, 3)


def _matrix_arg(args):
    if args.matrix is not None:
        return _parse_matrix(args.matrix)
    if args.input is not None:
        return _as_matrix(_read_json(args.input))
    raise UsageError("give --matrix or --input")


def _seed(args):
    if args.seed is not None:
        return args.seed
    env = os.environ.get("COFRAME_SEED")
    if env is None:
        return 0
    try:
        return int(env)
    except ValueError as exc:
        raise UsageError(f"COFRAME_SEED must be an integer, got {env!r}") from exc


def _grid_counts(text):
    try:
        counts = tuple(int(t) for t in text.split(","))
    except ValueError as exc:
        raise UsageError(f"--grid expects n1,n2,n3, got {text!r}") from exc
    if len(counts) != 3 or min(counts) < 3:
        raise UsageError("--grid expects three counts >= 3")
    return counts


def _tolerances(args):
    tol = {}
    for key, name in (("domega_exact", "tol_domega"), ("fd_factor", "tol_fd"),
                      ("drift", "tol_drift")):
        value = getattr(args, name, None)
        if value is not None:
            if not value > 0:
                raise UsageError(f"--{name.replace('_', '-')} must be positive")
            tol[key] = value
    return tol


# --- subcommands -----------------------------------------------------------

def cmd_tableau(args):
    q = _matrix_arg(args)
    verdict = classify(q, seed=_seed(args))
    _emit(verdict.to_json(), args)
    return EXIT_OK if verdict.involutive else EXIT_DEGENERATE_TABLEAU


def cmd_element(args):
    z = _matrix_arg(args)
    if args.attempts < 0:
        raise UsageError("--attempts must be non-negative")
    try:
        element = find_involutive_p(z, attempts=args.attempts, seed=_seed(args))
    except RankDeficient as exc:
        _emit({"error": "RankDeficient", "message": str(exc)}, args)
        return EXIT_RANK_DEFICIENT
    except SearchExhausted as exc:
        _emit({"error": "SearchExhausted", "message": str(exc)}, args)
        return EXIT_EXHAUSTED
    _emit(element.to_json(), args)
    return EXIT_OK


def example_problem(name, counts=None):
    """Named rank-1 problems: a constant ``z`` (line case) and ``(1, rho, rho^2)``."""
    if name == "line":
        z = [Polynomial.constant(c, 3) for c in (0.0, 1.0, 0.5)]
        grid = Grid((0.0, 0.0, 0.0), (0.5, 0.5, 0.5), counts or (17, 17, 17))
    elif name == "example46":
        z = [p.embed(3) for p in diagnostics.example46_z()]
        grid = Grid((-0.25, -0.25, -0.25), (0.25, 0.25, 0.25), counts or (17, 17, 17))
    else:
        raise UsageError(f"unknown example {name!r}")
    return rank1_solver.Rank1Problem(z, grid)


def _load_problem(args):
    counts = _grid_counts(args.grid) if args.grid else None
    if args.example:
        return example_problem(args.example, counts)
    if not args.input:
        raise UsageError("give --input or --example")
    data = _read_json(args.input)
    try:
        problem = rank1_solver.Rank1Problem.from_json(data)
    except (KeyError, TypeError, ValueError) as exc:
        raise UsageError(f"bad problem file: {exc}") from exc
    if counts:
        problem = rank1_solver.Rank1Problem(problem.z, Grid(problem.grid.lower,
                                                            problem.grid.upper, counts),
                                            problem.base)
    return problem


def write_solution(solution, outdir):
    """CSV per field plus ``report.json``."""
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    solution.omega.form.to_csv(out / "omega.csv")
    grid = solution.problem.grid
    mesh = grid.mesh().reshape(-1, 3)
    x = np.moveaxis(solution.x, 0, -1).reshape(-1, 3)
    np.savetxt(out / "position.csv", np.hstack([mesh, x]), delimiter=",",
               header="u1,u2,u3,x1,x2,x3", comments="", fmt="%.17g")
    u1 = grid.axis(0)
    frame = solution.a_path.reshape(len(u1), 9)
    header = "u1," + ",".join(f"a{i + 1}{j + 1}" for i in range(3) for j in range(3))
    np.savetxt(out / "frame.csv", np.column_stack([u1, frame]), delimiter=",",
               header=header, comments="", fmt="%.17g")


def _solution_json(solution):
    return {"case": solution.case.to_json(), "coordinate_map": solution.coordinate_map.to_json(),
            "grid": solution.problem.grid.to_json(), "base": list(solution.problem.base),
            "kbar": [k.to_json() for k in solution.kbar],
            "report": solution.report.to_json()}


def cmd_solve(args):
    problem = _load_problem(args)
    tolerances = _tolerances(args)
    report = {"error": "DegenerateHypothesis"}
    try:
        problem.validate()
        case = rank1_solver.classify_hypothesis(problem)
        report["case"] = case.to_json()
        solution = rank1_solver.solve(problem, tolerances=tolerances)
    except DegenerateHypothesis as exc:
        report["message"] = str(exc)
        sys.stdout.write(_dump(report))
        return EXIT_DEGENERATE_HYPOTHESIS
    report = _solution_json(solution)
    if args.output:
        write_solution(solution, args.output)
        (Path(args.output) / "report.json").write_text(_dump(report))
    sys.stdout.write(_dump(report))
    return EXIT_OK if solution.report.passed else EXIT_RESIDUAL


def _poly_arg(text, nvars):
    """A polynomial from JSON, a path to JSON, or a plain number."""
    if text is None:
        return None
    try:
        return Polynomial.constant(float(text), nvars)
    except ValueError:
        pass
    data = _read_json(text) if Path(text).suffix == ".json" else None
    if data is None:
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise UsageError(f"cannot parse polynomial {text!r}") from exc
    try:
        return Polynomial.from_json(data, nvars)
    except (KeyError, TypeError, ValueError) as exc:
        raise UsageError(f"bad polynomial: {exc}") from exc


def _diagnose_upsilon(args):
    counts = _grid_counts(args.grid) if args.grid else (9, 9, 9)
    grid = Grid((-0.5, -0.5, -0.5), (0.5, 0.5, 0.5), counts)
    closed = diagnostics.closedness_residual(diagnostics.upsilon_form(grid))
    cert = diagnostics.no_factor_certificate(diagnostics.upsilon_coefficients(), (0, 0, 0))
    obstructed = closed == 0.0 and cert.conclusion == diagnostics.NO_FACTOR
    report = {"example": "upsilon", "closedness_residual": closed,
              "certificate": cert.to_json(), "solvable_near_origin": not obstructed,
              "conclusion": ("no coframing with d omega = (Upsilon, 0, 0) near the origin: "
                             "a solution needs omega1 ^ d omega1 = 0, so Upsilon would have the "
                             "nonvanishing factor omega1") if obstructed else "inconclusive"}
    _emit(report, args)
    return EXIT_OK if cert.conclusion == diagnostics.NO_FACTOR else EXIT_INCONCLUSIVE


def _diagnose_c(args):
    data = _read_json(args.input)
    try:
        c = [Polynomial.from_json(p, nvars=3) for p in data["c"]]
        point = tuple(data.get("point", (0.0, 0.0, 0.0)))
    except (KeyError, TypeError, ValueError) as exc:
        raise UsageError(f"bad certificate input: {exc}") from exc
    if len(c) != 3 or len(point) != 3:
        raise UsageError("'c' takes three polynomials and 'point' three reals")
    try:
        cert = diagnostics.no_factor_certificate(c, point)
    except NotAZero as exc:
        raise UsageError(f"point is not a zero of c: {exc}") from exc
    _emit({"certificate": cert.to_json()}, args)
    return EXIT_OK if cert.conclusion == diagnostics.NO_FACTOR else EXIT_INCONCLUSIVE


def _diagnose_family(args):
    g2 = _poly_arg(args.g2, 1) if args.g2 is not None else Polynomial.constant(1.0, 1)
    g3 = _poly_arg(args.g3, 1) if args.g3 is not None else Polynomial.constant(0.0, 1)
    grid = diagnostics.FAMILY_GRID
    if args.grid:
        grid = Grid(grid.lower, grid.upper, _grid_counts(args.grid))
    try:
        report = diagnostics.family_verifier(g2, g3, grid)
    except FactorVanishes as exc:
        _emit({"error": "FactorVanishes", "message": str(exc)}, args)
        return EXIT_DEGENERATE_HYPOTHESIS
    report.update({"example": "family", "g2": g2.to_json(), "g3": g3.to_json()})
    _emit(report, args)
    return EXIT_OK if report["passed"] else EXIT_RESIDUAL


def _diagnose_example46(args):
    z = diagnostics.example46_z()
    problem = example_problem("example46", _grid_counts(args.grid) if args.grid else None)
    case = rank1_solver.classify_hypothesis(problem)
    report = {"example": "example46", "projective_differential": diagnostics.projective_differential(
        z, (0.0, 0.0)), "forcing": diagnostics.example46_forcing(z, (0.0, 0.0)),
        "hypothesis": case.to_json()}
    _emit(report, args)
    return EXIT_OK if report["forcing"]["forcing"] else EXIT_INCONCLUSIVE


def cmd_diagnose(args):
    target = args.target
    if target is None:
        if args.input is None:
            raise UsageError("give a named example or --input")
        return _diagnose_c(args)
    handlers = {"upsilon": _diagnose_upsilon, "family": _diagnose_family,
                "example46": _diagnose_example46}
    return handlers[target](args)


# --- entry point -----------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(EXIT_USAGE)


def build_parser():
    parser = _Parser(prog="coframe", description="Flat coframings with prescribed d omega.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p):
        p.add_argument("--input", help="input file (JSON)")
        p.add_argument("--output", help="output file (directory for solve)")
        p.add_argument("--seed", type=int, default=None,
                       help="RNG seed (falls back to $COFRAME_SEED, then 0)")
        p.add_argument("-v", "--verbose", action="count", default=0)

    p = sub.add_parser("tableau", help="classify the tableau A_Q")
    common(p)
    p.add_argument("--matrix", help="Q as nine reals, row-major")
    p.set_defaults(func=cmd_tableau)

    p = sub.add_parser("element", help="search for an involutive integral element")
    common(p)
    p.add_argument("--matrix", help="Z as nine reals, row-major")
    p.add_argument("--attempts", type=int, default=10)
    p.set_defaults(func=cmd_element)

    p = sub.add_parser("solve", help="rank-1 construction for Omega = z du1^du2")
    common(p)
    p.add_argument("--example", choices=("line", "example46"))
    p.add_argument("--grid", help="node counts n1,n2,n3")
    p.add_argument("--tol-domega", type=float, help="threshold for exact d omega residual")
    p.add_argument("--tol-fd", type=float, help="factor C in the C*h^2 thresholds")
    p.add_argument("--tol-drift", type=float, help="threshold for SO(3) drift")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("diagnose", help="obstruction and degeneracy certificates")
    common(p)
    p.add_argument("target", nargs="?", choices=("upsilon", "example46", "family"))
    p.add_argument("--grid", help="node counts n1,n2,n3")
    p.add_argument("--g2", help="g2(u1): number or polynomial JSON (default 1)")
    p.add_argument("--g3", help="g3(u1): number or polynomial JSON (default 0)")
    p.set_defaults(func=cmd_diagnose)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        sys.stderr.write(f"coframe: {exc}\n")
        return EXIT_USAGE
    except MissingInput as exc:
        sys.stderr.write(f"coframe: {exc}\n")
        return EXIT_NO_INPUT
    except CoframeError as exc:
        sys.stderr.write(f"coframe: {type(exc).__name__}: {exc}\n")
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
