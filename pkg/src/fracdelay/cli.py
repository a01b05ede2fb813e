"""Command-line harness.

Verbs: ``solve`` (one run, time-response output), ``sweep`` (grid over N, nu
and basis), ``list-builtins`` and ``check`` (parse a problem file and print it
normalised).  Exit codes: 0 success, 2 configuration error, 3 solver failure,
4 expression error.
"""

from __future__ import annotations

import argparse
import csv
import io
import itertools
import json
import math
import sys
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .basis import Family
from .collocation import Method, SolverConfig
from .errors import ConfigError, ConvergenceError, DegenerateOperatorError, ExprError, FracDelayError
from .metrics import DEFAULT_SAMPLES, l2_error, max_abs_error, sample_grid
from .problems import ProblemDef, list_builtins, resolve
from .stepper import PiecewiseSolution, StepFailure, solve

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_EXPR = 0, 2, 3, 4


@dataclass(frozen=True)
class RunConfig:
    problem: str
    basis: Family = Family.CHEBYSHEV
    N: int = 15
    nu: float | None = None
    nu1: float | None = None
    tau: float | None = None
    horizon: float | None = None
    solver: SolverConfig = field(default_factory=SolverConfig)
    fmt: str = "csv"
    out: str | None = None
    phase: str | None = None
    samples: int = DEFAULT_SAMPLES

    def __post_init__(self) -> None:
        object.__setattr__(self, "basis", Family.parse(self.basis))
        if self.samples < 2:
            raise ConfigError("--samples must be at least 2")
        if self.fmt not in ("csv", "json"):
            raise ConfigError(f"unknown format {self.fmt!r}")

    def overrides(self) -> dict[str, float]:
        out = {k: v for k, v in (("nu", self.nu), ("tau", self.tau), ("horizon", self.horizon)) if v is not None}
        if self.nu1 is not None:
            out["nu1"] = self.nu1
        return out


@dataclass
class ErrorReport:
    l2_error: float | None
    max_abs_error: float | None
    residuals: list[float]
    iterations: list[int]
    wall_clock_seconds: float


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    return format(float(x), ".17g")


def load(cfg: RunConfig) -> ProblemDef:
    defn = resolve(cfg.problem, cfg.overrides())
    if cfg.N < defn.to_problem().mu + 1:
        raise ConfigError(f"N = {cfg.N} is too small for this problem (need N >= {defn.to_problem().mu + 1})")
    return defn


def run(cfg: RunConfig, defn: ProblemDef | None = None):
    """Solve one configuration; returns (report, solution, problem definition)."""
    defn = defn or load(cfg)
    problem = defn.to_problem()
    clock = time.perf_counter()
    ps, rep = solve(problem, cfg.basis, cfg.N, cfg.solver)
    elapsed = time.perf_counter() - clock
    l2 = mae = None
    if problem.exact is not None:
        l2 = l2_error(ps, problem.exact)
        mae = max_abs_error(ps, problem.exact, sample_grid(problem.horizon, cfg.samples, defn.table))
    report = ErrorReport(l2, mae, rep.residuals, rep.iterations, elapsed)
    return report, ps, defn


def time_response(ps: PiecewiseSolution, defn: ProblemDef, samples: int) -> tuple[list[str], list[list]]:
    grid = sample_grid(defn.horizon, samples, defn.table)
    values = ps.eval(grid)
    exact = defn.exact_fn()
    if exact is None:
        return ["t", "u_N"], [[t, v] for t, v in zip(grid, values)]
    ref = exact(grid)
    return ["t", "u_N", "u", "abs_error"], [[t, v, r, abs(v - r)] for t, v, r in zip(grid, values, ref)]


def phase_rows(ps: PiecewiseSolution, defn: ProblemDef, samples: int) -> tuple[list[str], list[list]]:
    grid = sample_grid(defn.horizon, samples, defn.table)
    now, lagged = ps.lag_trace(grid)
    return ["t", "u", "u_lag"], [[t, a, b] for t, a, b in zip(grid, now, lagged)]


def _csv_text(header: Sequence[str], rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([v if isinstance(v, str) else _fmt(v) for v in row])
    return buf.getvalue()


def _emit(text: str, path: str | None) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


def _json_number(x):
    if x is None or not math.isfinite(x):
        return None
    return float(x)


def cmd_solve(cfg: RunConfig) -> int:
    report, ps, defn = run(cfg)
    header, rows = time_response(ps, defn, cfg.samples)
    if cfg.fmt == "csv":
        _emit(_csv_text(header, rows), cfg.out)
        print(
            f"l2_error={_fmt(report.l2_error) or 'n/a'} max_abs_error={_fmt(report.max_abs_error) or 'n/a'} "
            f"iterations={report.iterations} wall_clock_seconds={report.wall_clock_seconds:.3f}",
            file=sys.stderr,
        )
    else:
        doc = {
            "problem": defn.name,
            "basis": cfg.basis.value,
            "N": cfg.N,
            "nu": defn.nu,
            "tau": defn.tau,
            "horizon": defn.horizon,
            "report": {
                "l2_error": _json_number(report.l2_error),
                "max_abs_error": _json_number(report.max_abs_error),
                "residuals": report.residuals,
                "iterations": report.iterations,
                "wall_clock_seconds": report.wall_clock_seconds,
            },
            "columns": header,
            "rows": [[float(v) for v in row] for row in rows],
        }
        _emit(json.dumps(doc, indent=2) + "\n", cfg.out)
    if cfg.phase:
        header, rows = phase_rows(ps, defn, cfg.samples)
        _emit(_csv_text(header, rows), cfg.phase)
    return EXIT_OK


SWEEP_COLUMNS = ["basis", "N", "nu", "nu1", "tau", "status", "l2_error", "log10_l2_error", "max_abs_error", "iterations"]


def sweep(base: RunConfig, Ns: Sequence[int], nus: Sequence[float | None], bases: Sequence[Family]):
    """One row per (basis, nu, N); a failing row records its error and the sweep continues."""
    header = list(SWEEP_COLUMNS)
    rows = []
    table = None
    for fam, nu, N in itertools.product(bases, nus, Ns):
        cfg = RunConfig(**{**base.__dict__, "basis": fam, "nu": nu, "N": N})
        defn = load(cfg)
        if table is None:
            table = list(defn.table)
            header += [f"u({_fmt(t)})" for t in table]
        nu1 = defn.terms[0][1] if defn.terms else None
        row = [fam.value, N, defn.nu, nu1, defn.tau]
        try:
            report, ps, _ = run(cfg, defn)
        except (StepFailure, FracDelayError) as exc:
            rows.append(row + [f"failed: {exc}"] + [None] * (len(header) - len(row) - 1))
            continue
        l2 = report.l2_error
        log_l2 = math.log10(l2) if l2 else None
        values = ps.eval(np.array(table, dtype=float)) if table else []
        rows.append(
            row
            + ["ok", l2, log_l2, report.max_abs_error, " ".join(str(i) for i in report.iterations)]
            + list(values)
        )
    return header, rows


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"expected a comma separated list of numbers, got {text!r}") from None


def _ints(text: str) -> list[int]:
    vals = _floats(text)
    if any(v != int(v) for v in vals):
        raise ConfigError(f"expected integers, got {text!r}")
    return [int(v) for v in vals]


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fracdelay", description="Spectral collocation for fractional delay equations")
    sub = ap.add_subparsers(dest="verb", required=True)

    def common(p: argparse.ArgumentParser, lists: bool) -> None:
        p.add_argument("--problem", required=True, help="builtin id or problem file")
        p.add_argument("--basis", default="chebyshev", help="legendre or chebyshev" + (" (comma list)" if lists else ""))
        p.add_argument("--N", default="15", help="truncation degree" + (" (comma list)" if lists else ""))
        p.add_argument("--nu", default=None, help="leading order override" + (" (comma list)" if lists else ""))
        p.add_argument("--nu1", type=float, default=None, help="order of the auxiliary fractional term")
        p.add_argument("--tau", type=float, default=None)
        p.add_argument("--horizon", type=float, default=None)
        p.add_argument("--method", choices=[m.value for m in Method], default=Method.FIXED_POINT.value)
        p.add_argument("--tol", type=float, default=1e-15)
        p.add_argument("--out", default=None, help="output path (default stdout)")
        p.add_argument("--format", dest="fmt", choices=["csv", "json"], default="csv")
        p.add_argument("--samples", type=int, default=DEFAULT_SAMPLES, help="uniform sample count")

    s = sub.add_parser("solve", help="solve one problem and write its time response")
    common(s, lists=False)
    s.add_argument("--phase", default=None, metavar="PATH", help="also write (t, u(t), u(t-tau)) to PATH")
    w = sub.add_parser("sweep", help="sweep N, nu and basis; one row per combination")
    common(w, lists=True)
    sub.add_parser("list-builtins", help="list the builtin problems")
    c = sub.add_parser("check", help="parse a problem and print it normalised")
    c.add_argument("--problem", required=True)
    return ap


def _config(args, basis, N, nu) -> RunConfig:
    try:
        solver = SolverConfig(method=args.method, tol=args.tol)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return RunConfig(
        problem=args.problem,
        basis=basis,
        N=N,
        nu=nu,
        nu1=args.nu1,
        tau=args.tau,
        horizon=args.horizon,
        solver=solver,
        fmt=args.fmt,
        out=args.out,
        phase=getattr(args, "phase", None),
        samples=args.samples,
    )


def _dispatch(args) -> int:
    if args.verb == "list-builtins":
        for ident, blurb in list_builtins():
            print(f"{ident}\t{blurb}")
        return EXIT_OK
    if args.verb == "check":
        sys.stdout.write(resolve(args.problem).to_text())
        return EXIT_OK
    if args.verb == "solve":
        nu = None if args.nu is None else float(args.nu)
        return cmd_solve(_config(args, args.basis, int(args.N), nu))
    bases = [Family.parse(b) for b in args.basis.split(",")]
    nus = [None] if args.nu is None else _floats(args.nu)
    base = _config(args, bases[0], _ints(args.N)[0], nus[0])
    header, rows = sweep(base, _ints(args.N), nus, bases)
    if args.fmt == "csv":
        _emit(_csv_text(header, rows), args.out)
    else:
        doc = [dict(zip(header, row)) for row in rows]
        _emit(json.dumps(doc, indent=2) + "\n", args.out)
    return EXIT_OK


def _root_cause(exc: BaseException):
    seen = exc
    while True:
        if isinstance(seen, ExprError):
            return seen
        nxt = getattr(seen, "cause", None) or seen.__cause__
        if nxt is None:
            return exc
        seen = nxt


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _dispatch(args)
    except FracDelayError as exc:
        cause = _root_cause(exc)
        print(f"error: {exc}", file=sys.stderr)
        if isinstance(cause, ExprError):
            return EXIT_EXPR
        if isinstance(exc, StepFailure) or isinstance(exc, (ConvergenceError, DegenerateOperatorError)):
            history = getattr(exc.cause, "history", None) if isinstance(exc, StepFailure) else getattr(exc, "history", None)
            if history:
                print(f"  update history (last 5): {[f'{u:.3e}' for u in history[-5:]]}", file=sys.stderr)
            return EXIT_SOLVER
        return EXIT_CONFIG
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
