"""Command-line front end.

Problem files are flat ``key = value`` documents with ``#`` comments::

    alpha = 0.5
    M = 1
    N = 1
    a = 0
    b = 1
    x_a = 0
    x_b = 1                     # omit for a free endpoint
    L = (u^2 - 4*x)^2
    f = u + 2/gamma(2.5)*t^1.5

Exit codes: 0 converged, 1 input error, 2 solver did not converge.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .diagnostics import pontryagin_check
from .expr import ExprDomainError, ExprSyntaxError, compile_expr, parse_expr
from .focp import DegenerateDenominatorError, Focp, build_augmented
from .momentexp import error_bound
from .optim import SolveOptions, solve
from .transcribe import Grid, NonFiniteStateError, Trajectory, transcribe

__all__ = [
    "ProblemFileError",
    "RunConfig",
    "parse_problem",
    "load_problem",
    "format_number",
    "write_trajectory",
    "read_trajectory",
    "run",
    "compare",
    "main",
]

EXIT_OK, EXIT_INPUT, EXIT_NOT_CONVERGED = 0, 1, 2

REQUIRED_KEYS = ("alpha", "M", "N", "a", "b", "x_a", "L", "f")
OPTIONAL_KEYS = ("x_b",)
_EXPR_KEYS = ("L", "f")

log = logging.getLogger(__name__)


class InputError(Exception):
    """Bad user input; ``kind`` selects the message prefix."""

    kind = "input error"


class FileError(InputError):
    kind = "file error"


class ProblemFileError(InputError):
    """Problem-file syntax error with 1-based ``line`` and ``column``."""

    kind = "parse error"

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        where = ""
        if line is not None:
            where = f"line {line}" + (f", column {column}" if column is not None else "") + ": "
        super().__init__(where + message)
        self.line = line
        self.column = column


class ValidationError(InputError):
    kind = "validation error"


@dataclass(frozen=True)
class RunConfig:
    K: int = 3
    n: int = 100
    mode: str = "shooting"
    options: SolveOptions = field(default_factory=SolveOptions)
    out: Optional[Path] = None
    report: Optional[Path] = None
    M2: Optional[float] = None
    offset_grid: bool = False

    def __post_init__(self) -> None:
        if self.K < 2:
            raise ValidationError(f"K must be >= 2, got {self.K}")
        if self.n < 2:
            raise ValidationError(f"n must be >= 2, got {self.n}")
        if self.mode not in ("full", "shooting"):
            raise ValidationError(f"mode must be 'full' or 'shooting', got {self.mode!r}")
        if self.M2 is not None and not (self.M2 >= 0 and math.isfinite(self.M2)):
            raise ValidationError("M2 must be a finite nonnegative number")


# --------------------------------------------------------------------------
# problem files


def parse_problem(text: str) -> Focp:
    """Parse problem-file *text* into a :class:`Focp`."""
    values: dict[str, object] = {}
    seen: dict[str, int] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0]
        if not line.strip():
            continue
        if "=" not in line:
            col = len(line) - len(line.lstrip()) + 1
            raise ProblemFileError("expected 'key = value'", lineno, col)
        key_part, value_part = line.split("=", 1)
        key = key_part.strip()
        key_col = len(key_part) - len(key_part.lstrip()) + 1
        value = value_part.strip()
        value_col = len(key_part) + 1 + (len(value_part) - len(value_part.lstrip())) + 1
        if key not in REQUIRED_KEYS + OPTIONAL_KEYS:
            raise ProblemFileError(f"unknown key {key!r}", lineno, key_col)
        if key in seen:
            raise ProblemFileError(f"duplicate key {key!r} (first on line {seen[key]})", lineno, key_col)
        if not value:
            raise ProblemFileError(f"missing value for {key!r}", lineno, value_col)
        seen[key] = lineno
        if key in _EXPR_KEYS:
            try:
                values[key] = parse_expr(value)
            except ExprSyntaxError as exc:
                raise ProblemFileError(
                    f"in expression {key!r}: {exc.message}", lineno, value_col + exc.position
                ) from None
        else:
            try:
                num = float(value)
            except ValueError:
                raise ProblemFileError(f"{key!r} expects a number, got {value!r}", lineno, value_col) from None
            if not math.isfinite(num):
                raise ProblemFileError(f"{key!r} must be finite", lineno, value_col)
            values[key] = num
    missing = [k for k in REQUIRED_KEYS if k not in values]
    if missing:
        raise ValidationError("missing required key(s): " + ", ".join(repr(k) for k in missing))
    for key in _EXPR_KEYS:
        extra = values[key].variables() - {"t", "x", "u"}
        if extra:  # the parser already rejects these; kept as a guard
            raise ValidationError(f"{key!r} uses unknown variables {sorted(extra)}")
    try:
        return Focp(**values)
    except ValueError as exc:
        raise ValidationError(str(exc)) from None


def load_problem(path) -> Focp:
    path = Path(path)
    try:
        text = path.read_text()
    except FileNotFoundError:
        raise FileError(f"no such file: {path}") from None
    except OSError as exc:
        raise FileError(f"cannot read {path}: {exc.strerror}") from None
    return parse_problem(text)


# --------------------------------------------------------------------------
# artifacts


def format_number(v: float) -> str:
    """Decimal (non-exponent) notation with 12 significant digits."""
    if v == 0.0:
        return "0"
    return np.format_float_positional(v, precision=12, unique=False, fractional=False, trim="-")


def write_trajectory(path, traj: Trajectory) -> None:
    """Write ``t,x,u,V_2..V_K`` with ``n + 1`` rows; ``u`` is blank on the last row."""
    K = traj.V.shape[0] + 1
    header = ["t", "x", "u"] + [f"V_{p}" for p in range(2, K + 1)]
    lines = [",".join(header)]
    n = traj.u.size
    for i, t in enumerate(traj.t):
        row = [format_number(t), format_number(traj.x[i])]
        row.append(format_number(traj.u[i]) if i < n else "")
        row.extend(format_number(v) for v in traj.V[:, i])
        lines.append(",".join(row))
    Path(path).write_text("\n".join(lines) + "\n")


def read_trajectory(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Read ``(t, x, u)`` back from a trajectory file; ``u`` has one entry fewer."""
    path = Path(path)
    try:
        lines = path.read_text().splitlines()
    except FileNotFoundError:
        raise FileError(f"no such file: {path}") from None
    if not lines:
        raise ProblemFileError("empty trajectory file", 1)
    header = lines[0].split(",")
    if header[:3] != ["t", "x", "u"]:
        raise ProblemFileError("header must start with t,x,u", 1, 1)
    t, x, u = [], [], []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        cells = line.split(",")
        if len(cells) != len(header):
            raise ValidationError(f"line {lineno}: expected {len(header)} fields, got {len(cells)}")
        try:
            t.append(float(cells[0]))
            x.append(float(cells[1]))
            if cells[2].strip():
                if len(u) != len(t) - 1:
                    raise ValidationError(f"line {lineno}: control after a blank control entry")
                u.append(float(cells[2]))
        except ValueError:
            raise ProblemFileError("non-numeric field", lineno) from None
    if len(t) < 2 or len(u) != len(t) - 1:
        raise ValidationError(
            f"mismatched grid length: {len(t)} nodes but {len(u)} controls (expected {len(t) - 1})"
        )
    return np.array(t), np.array(x), np.array(u)


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v) + 0.0, ".12g")  # + 0.0 folds -0 into 0
    return str(v)


def _report_lines(problem: Focp, cfg: RunConfig, grid: Grid, rep, pontryagin) -> list[str]:
    out = [
        ("status", "converged" if rep.converged else "not_converged"),
        ("mode", cfg.mode),
        ("K", cfg.K),
        ("n", cfg.n),
        ("dt", grid.dt),
        ("offset_grid", grid.offset),
        ("alpha", problem.alpha),
        ("endpoint", "fixed" if problem.fixed_endpoint else "free"),
        ("objective", rep.objective),
        ("max_constraint_violation", rep.max_constraint_violation),
        ("first_order_residual", rep.first_order_residual),
        ("inner_iterations", rep.inner_iterations),
        ("outer_iterations", rep.outer_iterations),
        ("final_penalty", rep.penalty),
    ]
    unit = error_bound(problem.alpha, cfg.K, problem.a, problem.b, 1.0)
    if cfg.M2 is None:
        out += [("M2", "unspecified"), ("error_bound_per_unit_M2", unit)]
    else:
        out += [("M2", cfg.M2), ("error_bound", cfg.M2 * unit)]
    if pontryagin is not None:
        out += [
            ("costate_convention", pontryagin.convention),
            ("stationarity_residual", pontryagin.stationarity_residual),
            ("costate_defect", pontryagin.costate_defect),
        ]
        out += [(f"lambda_{p}_b", v) for p, v in enumerate(pontryagin.transversality, start=1)]
        out.append(("transversality_residual", pontryagin.transversality_residual))
    return [f"{k} = {_fmt(v)}" for k, v in out]


# --------------------------------------------------------------------------
# commands


def run(problem_path, config: RunConfig) -> int:
    """Solve the problem in *problem_path* and write the artifacts; returns the exit code."""
    problem = load_problem(problem_path)
    try:
        aug = build_augmented(problem, config.K)
        grid = Grid(config.n, problem.a, problem.b, offset=config.offset_grid)
        nlp = transcribe(aug, grid, config.mode)
    except DegenerateDenominatorError as exc:
        hint = "" if config.offset_grid or problem.M != 0.0 else " (--offset-grid)"
        raise ValidationError(f"{exc}{hint}") from None
    except ValueError as exc:
        raise ValidationError(str(exc)) from None

    try:
        rep = solve(nlp, config.options)
    except (NonFiniteStateError, ExprDomainError, FloatingPointError) as exc:
        print(f"focsolve: solver error: {exc}", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    pontryagin = pontryagin_check(aug, grid, rep) if config.mode == "full" else None

    stem = Path(problem_path).stem
    out = config.out or Path(f"{stem}.csv")
    report = config.report or Path(f"{stem}.report")
    try:
        write_trajectory(out, rep.trajectory)
        Path(report).write_text("\n".join(_report_lines(problem, config, grid, rep, pontryagin)) + "\n")
    except OSError as exc:
        raise FileError(f"cannot write output: {exc}") from None
    log.info("wrote %s and %s", out, report)
    if not rep.converged:
        print(f"focsolve: not converged: {rep.message}", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def _time_expression(text: str, what: str):
    try:
        e = parse_expr(text)
    except ExprSyntaxError as exc:
        raise ProblemFileError(f"in {what} reference: {exc.message}", None) from None
    extra = e.variables() - {"t"}
    if extra:
        raise ValidationError(f"{what} reference may only use t, found {', '.join(sorted(extra))}")
    return compile_expr(e)


def compare(trajectory_path, x_ref: str, u_ref: str) -> dict[str, tuple[float, float]]:
    """Sup-norm and RMS errors of ``x`` (all nodes) and ``u`` (left nodes)."""
    fx = _time_expression(x_ref, "x")
    fu = _time_expression(u_ref, "u")
    t, x, u = read_trajectory(trajectory_path)
    try:
        ex = x - fx(t, 0.0, 0.0)
        eu = u - fu(t[:-1], 0.0, 0.0)
    except ExprDomainError as exc:
        raise ValidationError(f"reference cannot be evaluated on the grid: {exc}") from None
    return {
        "x": (float(np.max(np.abs(ex))), float(np.sqrt(np.mean(ex**2)))),
        "u": (float(np.max(np.abs(eu))), float(np.sqrt(np.mean(eu**2)))),
    }


# --------------------------------------------------------------------------
# argument handling


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit with 2, which means non-convergence here
        self.print_usage(sys.stderr)
        print(f"focsolve: usage error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_INPUT)


def _build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="focsolve", description="Fractional optimal control by moment expansion.")
    p.add_argument("-v", "--verbose", action="store_true", help="log optimizer progress")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    r = sub.add_parser("run", help="solve a problem file")
    r.add_argument("--problem", required=True, type=Path)
    r.add_argument("--K", type=int, default=3, help="number of moment terms (default 3)")
    r.add_argument("--n", type=int, default=100, help="grid intervals (default 100)")
    r.add_argument("--mode", choices=("full", "shooting"), default="shooting")
    r.add_argument("--out", type=Path, help="trajectory file (default <problem>.csv)")
    r.add_argument("--report", type=Path, help="report file (default <problem>.report)")
    r.add_argument("--M2", type=float, help="bound on |x''| for the reported error bound")
    r.add_argument("--offset-grid", action="store_true", help="start the grid at a + dt (for M = 0)")
    r.add_argument("--outer-tol", type=float, default=SolveOptions.outer_tol)
    r.add_argument("--inner-tol", type=float, default=SolveOptions.inner_tol)
    r.add_argument("--max-outer", type=int, default=SolveOptions.max_outer)
    r.add_argument("--max-inner", type=int, default=SolveOptions.max_inner)
    r.add_argument("--u-bounds", type=float, nargs=2, metavar=("LO", "HI"))

    c = sub.add_parser("compare", help="compare a trajectory file with reference expressions")
    c.add_argument("--traj", required=True, type=Path)
    c.add_argument("--x-ref", required=True)
    c.add_argument("--u-ref", required=True)
    return p


def _config(args) -> RunConfig:
    try:
        opts = SolveOptions(
            outer_tol=args.outer_tol,
            inner_tol=args.inner_tol,
            max_outer=args.max_outer,
            max_inner=args.max_inner,
            u_bounds=tuple(args.u_bounds) if args.u_bounds else None,
        )
    except ValueError as exc:
        raise ValidationError(str(exc)) from None
    return RunConfig(
        K=args.K,
        n=args.n,
        mode=args.mode,
        options=opts,
        out=args.out,
        report=args.report,
        M2=args.M2,
        offset_grid=args.offset_grid,
    )


def main(argv: Sequence[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(name)s: %(message)s",
    )
    try:
        if args.command == "run":
            return run(args.problem, _config(args))
        table = compare(args.traj, args.x_ref, args.u_ref)
    except InputError as exc:
        print(f"focsolve: {exc.kind}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    print(f"{'':4}{'sup_error':>22}{'rms_error':>22}")
    for name, (sup, rms) in table.items():
        print(f"{name:4}{sup:22.12g}{rms:22.12g}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
