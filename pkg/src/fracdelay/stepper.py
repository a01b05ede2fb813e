"""Method of steps: solve the delay problem interval by interval.

Step i covers the global interval [t_i, t_i + h_i] with h_i = min(tau, T - t_i).
On each step the lagged value u(t - tau) is already known (history or earlier
steps), so the step is a delay-free fractional equation that the collocation
module solves.  Consecutive steps are tied together by continuity of u and its
first mu - 1 derivatives.
"""

from __future__ import annotations

import bisect
import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .basis import BasisSpec, Family, SpectralSolution
from .caputo import FractionalOrder, as_order, memory_term
from .collocation import (
    Constraint,
    SolverConfig,
    StepProblem,
    build_step_operators,
    constant_iterate,
    solve_step,
)
from .errors import ConfigError, ConvergenceError, FracDelayError


@dataclass(frozen=True, eq=False)
class FDDEProblem:
    """``sum_j A_j u^(j) + D^nu u + sum_p lambda_p D^nu_p u = f(t, u(t), u(t - tau))``.

    ``history(t, m)`` returns the m-th derivative of the initial function on
    [-tau, 0]; ``extra_constraints`` are ``(point, order, value)`` triples in
    global time (boundary conditions such as u(1) = 3).
    """

    nu: float
    tau: float
    horizon: float
    rhs: Callable
    history: Callable
    A: tuple[float, ...] = ()
    terms: tuple[tuple[float, float], ...] = ()
    extra_constraints: tuple[tuple[float, int, float], ...] = ()
    exact: Callable | None = None
    name: str = ""

    def __post_init__(self) -> None:
        if not self.tau > 0:
            raise ConfigError("delay tau must be positive")
        if not self.horizon > 0:
            raise ConfigError("horizon must be positive")
        as_order(self.nu)
        for lam, nu_p in self.terms:
            as_order(nu_p)

    @property
    def order(self) -> FractionalOrder:
        return as_order(self.nu)

    @property
    def mu(self) -> int:
        return max(self.order.m, len(self.A) - 1 if self.A else 0)

    def step_starts(self) -> list[float]:
        count = max(1, math.ceil(self.horizon / self.tau - 1e-12))
        return [i * self.tau for i in range(count)]


@dataclass(frozen=True, eq=False)
class PiecewiseSolution:
    tau: float
    starts: tuple[float, ...]
    steps: tuple[SpectralSolution, ...]
    history: Callable
    horizon: float

    @property
    def ends(self) -> tuple[float, ...]:
        return tuple(s + sol.basis.beta for s, sol in zip(self.starts, self.steps))

    def eval(self, t, m: int = 0):
        """u^(m)(t); history for t < 0, the later step at a knot."""
        scalar = np.ndim(t) == 0
        t = np.atleast_1d(np.asarray(t, dtype=float))
        end = self.ends[-1] if self.steps else 0.0
        slack = 1e-12 * max(1.0, abs(end))
        if np.any(t < -self.tau - slack) or np.any(t > end + slack):
            bad = t[(t < -self.tau - slack) | (t > end + slack)][0]
            raise ValueError(f"t = {bad!r} lies outside [-tau, {end}]")
        out = np.empty_like(t)
        past = t < 0
        if np.any(past):
            out[past] = self.history(t[past], m)
        if self.steps:
            idx = np.array([max(bisect.bisect_right(self.starts, v) - 1, 0) for v in t])
            for i in np.unique(idx[~past]):
                sel = (~past) & (idx == i)
                local = np.clip(t[sel] - self.starts[i], 0.0, self.steps[i].basis.beta)
                out[sel] = self.steps[i](local, m)
        elif np.any(~past):
            out[~past] = self.history(np.zeros(int(np.sum(~past))), m)
        return float(out[0]) if scalar else out

    __call__ = eval

    def lag_trace(self, t):
        """Pairs (u(t), u(t - tau)) for phase-plane output."""
        return self.eval(t), self.eval(np.asarray(t, dtype=float) - self.tau)

    def knot_jumps(self, orders: int) -> np.ndarray:
        """|left limit - right value| of u^(j) at every interior knot, for j < orders."""
        jumps = np.zeros((max(len(self.steps) - 1, 0), orders))
        for i in range(1, len(self.steps)):
            for j in range(orders):
                left = self.steps[i - 1](self.steps[i - 1].basis.beta, j)
                right = self.steps[i](0.0, j)
                jumps[i - 1, j] = abs(left - right)
        return jumps


@dataclass
class StepRecord:
    index: int
    start: float
    length: float
    iterations: int
    residual_norm: float
    damping: float
    converged_by: str


@dataclass
class RunReport:
    steps: list[StepRecord] = field(default_factory=list)
    wall_clock_seconds: float = 0.0

    @property
    def iterations(self) -> list[int]:
        return [s.iterations for s in self.steps]

    @property
    def residuals(self) -> list[float]:
        return [s.residual_norm for s in self.steps]


class StepFailure(FracDelayError):
    def __init__(self, step: int, cause: Exception):
        super().__init__(f"step {step}: {cause}")
        self.step = step
        self.cause = cause


def _step_constraints(problem: FDDEProblem, index: int, start: float, h: float, prev) -> list[Constraint]:
    mu = problem.mu
    if prev is None:
        values = [float(problem.history(np.array([0.0]), j)[0]) for j in range(mu)]
    else:
        values = [prev(prev.basis.beta, j) for j in range(mu)]
    cons = [Constraint(0.0, j, v) for j, v in enumerate(values)]
    slack = 1e-12 * max(1.0, h)
    extras = []
    for point, order, value in problem.extra_constraints:
        owner = next(
            (i for i, s in enumerate(problem.step_starts()) if s - slack <= point <= s + min(problem.tau, problem.horizon - s) + slack),
            None,
        )
        if owner is None:
            raise ConfigError(f"constraint point {point} lies outside [0, {problem.horizon}]")
        if owner == index:
            extras.append(Constraint(min(max(point - start, 0.0), h), int(order), float(value)))
    if len(extras) > mu:
        raise ConfigError(f"step {index + 1} has {len(extras)} extra constraints but only {mu} slots")
    # extra conditions replace the highest-order initial/continuity conditions
    return cons[: mu - len(extras)] + extras


def _memory(pieces, fractional, start: float) -> Callable:
    """Known contribution of the finished steps to every fractional term, on local time."""

    def known(s):
        total = np.zeros(np.shape(s))
        for lam, order in fractional:
            if lam and not order.is_integer:
                total += lam * memory_term(pieces, order, start + np.asarray(s))
        return total

    return known


def solve(
    problem: FDDEProblem,
    family: Family | str,
    N: int,
    cfg: SolverConfig | None = None,
    *,
    memory: bool = True,
) -> tuple[PiecewiseSolution, RunReport]:
    """Solve on [0, horizon] by the method of steps.

    With ``memory`` (the default) the fractional derivatives keep their lower
    limit at t = 0: the contribution of earlier steps is integrated and moved to
    the left-hand side as a known term.  ``memory=False`` restarts every
    derivative at the start of its step.
    """
    cfg = cfg or SolverConfig()
    family = Family.parse(family)
    if N < problem.mu + 1:
        raise ConfigError(f"N = {N} is too small: need N >= mu + 1 = {problem.mu + 1}")
    fractional = [(1.0, problem.order)] + [(float(lam), as_order(o)) for lam, o in problem.terms]
    starts = problem.step_starts()
    done: list[SpectralSolution] = []
    report = RunReport()
    clock = time.perf_counter()

    def partial() -> PiecewiseSolution:
        return PiecewiseSolution(problem.tau, tuple(starts[: len(done)]), tuple(done), problem.history, problem.horizon)

    prev = None
    for index, start in enumerate(starts):
        h = min(problem.tau, problem.horizon - start)
        sofar = partial()

        def lag(s, start=start, sofar=sofar):
            return sofar.eval(start + np.asarray(s) - problem.tau)

        known = _memory(list(zip(starts[: len(done)], done)), fractional, start) if memory and done else None

        step = StepProblem(
            basis=BasisSpec(family, 0.0, h),
            nu=problem.order,
            rhs=problem.rhs,
            lag=lag,
            constraints=tuple(_step_constraints(problem, index, start, h, prev)),
            A=problem.A,
            fractional_terms=tuple(fractional[1:]),
            t0=start,
            known=known,
        )
        init = prev.coeffs if prev is not None else constant_iterate(N, float(problem.history(np.array([0.0]), 0)[0]))
        try:
            ops = build_step_operators(step, N, cfg.node_selection)
            sol, rep = solve_step(step, cfg, init, ops)
        except ConvergenceError as exc:
            exc.step = index + 1
            raise StepFailure(index + 1, exc) from exc
        except FracDelayError as exc:
            raise StepFailure(index + 1, exc) from exc
        done.append(sol)
        report.steps.append(
            StepRecord(index + 1, start, h, rep.iterations, rep.residual_norm, rep.damping, rep.converged_by)
        )
        prev = sol
    report.wall_clock_seconds = time.perf_counter() - clock
    return partial(), report


