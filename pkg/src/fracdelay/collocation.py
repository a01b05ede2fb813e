"""Collocation system for one delay-free step and its nonlinear solvers.

On a step the unknowns are the coefficients a_0..a_N of ``u(s) = sum a_k B_k(s)``
on [0, h].  The system has N+1 rows: the equation collocated at N - mu + 1
Lobatto nodes, followed by mu linear constraint rows (initial, continuity or
boundary conditions).  Everything that multiplies ``a`` linearly is gathered in
a frozen matrix L; the right-hand side ``f(t, u, u_lag)`` is the only
nonlinear part.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.linalg

from .basis import BasisSpec, SpectralSolution, vandermonde
from .caputo import FractionalOrder, as_order, build_node_operator
from .errors import ConvergenceError, DegenerateOperatorError, RhsEvaluationError
from .quadrature import lobatto_rule

log = logging.getLogger(__name__)

_EPS = np.finfo(float).eps


class Method(enum.Enum):
    FIXED_POINT = "fixed-point"
    NEWTON = "newton"


class NodeSelection(enum.Enum):
    INTERIOR = "interior"  # drop the nodes next to constrained endpoints
    HIGHEST = "highest"  # drop the highest-index nodes


@dataclass(frozen=True)
class SolverConfig:
    method: Method = Method.FIXED_POINT
    tol: float = 1e-15
    max_iter: int = 500
    damping: float = 1.0
    fd_step: float = 1e-7
    retry_damping: tuple[float, ...] = (0.5, 0.25)
    node_selection: NodeSelection = NodeSelection.INTERIOR

    def __post_init__(self) -> None:
        object.__setattr__(self, "method", Method(self.method))
        object.__setattr__(self, "node_selection", NodeSelection(self.node_selection))
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if not 0 < self.damping <= 1:
            raise ValueError("damping must lie in (0, 1]")


@dataclass(frozen=True)
class Constraint:
    point: float
    order: int
    value: float


@dataclass(frozen=True, eq=False)
class StepProblem:
    """One step of the method of steps, posed on the local interval [0, h].

    ``rhs`` receives global times ``t0 + s``; ``lag`` and ``known`` receive local
    times.  ``known`` is an additive term already on the left-hand side (the
    memory of the fractional derivatives over earlier steps).
    """

    basis: BasisSpec
    nu: FractionalOrder
    rhs: Callable
    lag: Callable
    constraints: tuple[Constraint, ...]
    A: tuple[float, ...] = ()
    fractional_terms: tuple[tuple[float, FractionalOrder], ...] = ()
    t0: float = 0.0
    known: Callable | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "nu", as_order(self.nu))
        object.__setattr__(self, "A", tuple(float(a) for a in self.A))
        object.__setattr__(
            self,
            "fractional_terms",
            # canonical order: the operator is a sum, so the listing order is immaterial
            tuple(sorted(((float(lam), as_order(o)) for lam, o in self.fractional_terms), key=lambda x: x[1].nu)),
        )
        object.__setattr__(self, "constraints", tuple(self.constraints))
        if self.basis.alpha != 0:
            raise ValueError("step problems live on [0, h]")
        if self.A and self.A[-1] == 0:
            raise ValueError("the highest integer-order coefficient A_n must be nonzero")
        orders = [o.nu for _, o in self.fractional_terms]
        if any(b <= a for a, b in zip(orders, orders[1:])) or any(o >= self.nu.nu for o in orders):
            raise ValueError("auxiliary orders must be distinct and below nu")
        if len(self.constraints) != self.mu:
            raise ValueError(f"expected {self.mu} constraints, got {len(self.constraints)}")

    @property
    def n(self) -> int:
        return max(len(self.A) - 1, 0)

    @property
    def mu(self) -> int:
        return max(self.nu.m, self.n)


@dataclass(frozen=True, eq=False)
class StepOperators:
    nodes: np.ndarray  # collocation nodes (local)
    node_index: np.ndarray  # their indices in the Lobatto grid
    values: np.ndarray  # V0 at the collocation nodes
    linear: np.ndarray  # full (N+1)x(N+1) frozen matrix
    lu: tuple

    @property
    def N(self) -> int:
        return self.linear.shape[0] - 1


def collocation_indices(p: StepProblem, N: int, selection: NodeSelection = NodeSelection.INTERIOR) -> np.ndarray:
    if N < p.mu + 1:
        raise ValueError(f"N = {N} is too small for {p.mu} constraints (need N >= mu + 1)")
    keep = N - p.mu + 1
    if selection is NodeSelection.HIGHEST:
        return np.arange(keep)
    h = p.basis.beta
    n_left = sum(1 for c in p.constraints if c.point < 0.5 * h)
    n_right = p.mu - n_left
    return np.arange(n_left, N + 1 - n_right)


def build_step_operators(p: StepProblem, N: int, selection: NodeSelection = NodeSelection.INTERIOR) -> StepOperators:
    rule = lobatto_rule(p.basis, N)
    idx = collocation_indices(p, N, selection)
    s = rule.nodes[idx]
    V0 = vandermonde(p.basis, N, s)
    L = np.zeros((N + 1, N + 1))
    coll = L[: idx.size]
    for j, a_j in enumerate(p.A):
        if a_j:
            coll += a_j * (V0 if j == 0 else vandermonde(p.basis, N, s, j))
    coll += build_node_operator(p.basis, p.nu, N, s).node_matrix
    for lam, order in p.fractional_terms:
        if lam:
            coll += lam * build_node_operator(p.basis, order, N, s).node_matrix
    for r, c in enumerate(p.constraints, start=idx.size):
        L[r] = vandermonde(p.basis, N, [c.point], c.order)[0]
    if not np.all(np.isfinite(L)) or np.linalg.cond(L) > 1e14:
        raise DegenerateOperatorError("degenerate linear operator")
    lu = scipy.linalg.lu_factor(L, check_finite=False)
    return StepOperators(s, idx, V0, L, lu)


def _eval_rhs(p: StepProblem, ops: StepOperators, u: np.ndarray, lag: np.ndarray) -> np.ndarray:
    t = p.t0 + ops.nodes
    try:
        with np.errstate(divide="raise", invalid="raise", over="raise"):
            f = np.asarray(p.rhs(t, u, lag), dtype=float) * np.ones_like(t)
    except (FloatingPointError, ZeroDivisionError, ValueError, ArithmeticError) as exc:
        raise RhsEvaluationError(f"right-hand side evaluation failed: {exc}") from exc
    bad = np.flatnonzero(~np.isfinite(f))
    if bad.size:
        j = int(bad[0])
        raise RhsEvaluationError(
            f"right-hand side is not finite at collocation node {int(ops.node_index[j])} (t = {t[j]!r})",
            node=int(ops.node_index[j]),
            t=float(t[j]),
        )
    return f


@dataclass(eq=False)
class _Frozen:
    """Per-solve quantities that do not depend on the iterate."""

    lag: np.ndarray
    known: np.ndarray
    targets: np.ndarray


def _freeze(p: StepProblem, ops: StepOperators) -> _Frozen:
    lag = np.asarray(p.lag(ops.nodes), dtype=float) * np.ones_like(ops.nodes)
    known = np.zeros_like(ops.nodes) if p.known is None else np.asarray(p.known(ops.nodes), dtype=float)
    targets = np.array([c.value for c in p.constraints], dtype=float)
    return _Frozen(lag, known, targets)


def _forcing(p: StepProblem, ops: StepOperators, frz: _Frozen, a: np.ndarray) -> np.ndarray:
    u = ops.values @ a
    f = _eval_rhs(p, ops, u, frz.lag) - frz.known
    return np.concatenate([f, frz.targets])


def assemble_residual(p: StepProblem, a, ops: StepOperators) -> np.ndarray:
    """Collocation residual rows followed by constraint residual rows."""
    a = np.asarray(a, dtype=float)
    if a.shape != (ops.N + 1,):
        raise ValueError(f"expected {ops.N + 1} coefficients, got shape {a.shape}")
    return ops.linear @ a - _forcing(p, ops, _freeze(p, ops), a)


@dataclass
class SolveReport:
    method: Method
    iterations: int = 0
    residual_norm: float = math.nan
    damping: float = 1.0
    converged_by: str = ""
    updates: list[float] = field(default_factory=list)


def _iterate(p: StepProblem, cfg: SolverConfig, init, ops: StepOperators, newton: bool, damping: float):
    frz = _freeze(p, ops)
    a = np.array(init, dtype=float).reshape(-1)
    if a.shape != (ops.N + 1,):
        raise ValueError(f"initial iterate must have {ops.N + 1} entries")
    report = SolveReport(Method.NEWTON if newton else Method.FIXED_POINT, damping=damping)
    stalled, best = 0, math.inf
    absL = np.abs(ops.linear)
    for it in range(1, cfg.max_iter + 1):
        F = _forcing(p, ops, frz, a)
        R = ops.linear @ a - F
        # size of the rounding error made in forming R itself
        floor = 16 * _EPS * float((absL @ np.abs(a) + np.abs(F)).max())
        if it > 1 and float(np.abs(R).max()) <= floor:
            report.converged_by = "residual"
            break
        if newton:
            u = ops.values @ a
            du = cfg.fd_step * np.maximum(1.0, np.abs(u))
            f0 = F[: u.size] + frz.known
            f1 = _eval_rhs(p, ops, u + du, frz.lag)
            J = ops.linear.copy()
            J[: u.size] -= ((f1 - f0) / du)[:, None] * ops.values
            try:
                delta = scipy.linalg.solve(J, -R, check_finite=False)
            except (np.linalg.LinAlgError, ValueError) as exc:
                raise DegenerateOperatorError(f"singular Newton Jacobian: {exc}") from exc
        else:
            delta = scipy.linalg.lu_solve(ops.lu, -R, check_finite=False)
        a = a + damping * delta
        upd = float(np.abs(damping * delta).max())
        report.updates.append(upd)
        report.iterations = it
        size = max(1.0, float(np.abs(a).max()))
        if not math.isfinite(upd) or upd > 1e12 * size or upd > 1e6 * min(report.updates):
            raise ConvergenceError("iteration diverged", report.updates)
        if upd <= cfg.tol * size:
            report.converged_by = "tol"
            break
        # noise floor: no new best update for several sweeps while both the
        # update and the residual sit within sqrt(eps) of rounding level
        if upd < 0.9 * best:
            best, stalled = upd, 0
        else:
            stalled += 1
        if stalled >= 4 and upd <= math.sqrt(_EPS) * size and float(np.abs(R).max()) <= 1e3 * floor:
            report.converged_by = "stagnation"
            break
    else:
        raise ConvergenceError(
            f"no convergence after {cfg.max_iter} iterations (last update {report.updates[-1]:.3e})",
            report.updates,
        )
    F = _forcing(p, ops, frz, a)
    report.residual_norm = float(np.abs(ops.linear @ a - F).max())
    return SpectralSolution(p.basis, a), report


def solve_fixed_point(p: StepProblem, cfg: SolverConfig, init, ops: StepOperators | None = None):
    """Damped fixed-point iteration ``L (a+ - a) = -damping * R(a)`` with L frozen."""
    ops = ops or build_step_operators(p, len(init) - 1, cfg.node_selection)
    return _iterate(p, cfg, init, ops, newton=False, damping=cfg.damping)


def solve_newton(p: StepProblem, cfg: SolverConfig, init, ops: StepOperators | None = None):
    """Newton iteration; the Jacobian of f in u is taken by forward differences."""
    ops = ops or build_step_operators(p, len(init) - 1, cfg.node_selection)
    return _iterate(p, cfg, init, ops, newton=True, damping=cfg.damping)


def solve_step(p: StepProblem, cfg: SolverConfig, init, ops: StepOperators | None = None):
    """Solve with the configured method, retrying with smaller damping on failure."""
    ops = ops or build_step_operators(p, len(init) - 1, cfg.node_selection)
    newton = cfg.method is Method.NEWTON
    ladder = [cfg.damping] + [d for d in cfg.retry_damping if d < cfg.damping]
    history: list[float] = []
    for damping in ladder:
        try:
            return _iterate(p, cfg, init, ops, newton=newton, damping=damping)
        except ConvergenceError as exc:
            history.extend(exc.history)
            log.info("damping %.3g failed after %d iterations", damping, len(exc.history))
    raise ConvergenceError(
        f"{cfg.method.value} iteration did not converge with damping {ladder}", history
    )


def constant_iterate(N: int, value: float) -> np.ndarray:
    a = np.zeros(N + 1)
    a[0] = value
    return a


def reference_constraints(values: Sequence[float]) -> tuple[Constraint, ...]:
    """Initial conditions u^(j)(0) = values[j]."""
    return tuple(Constraint(0.0, j, float(v)) for j, v in enumerate(values))
