"""Gauss-Lobatto rules for the shifted Legendre and Chebyshev families."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np

from .basis import BasisSpec, Family
from .errors import NonFiniteValueError, QuadratureError

NEWTON_MAX_ITER = 100


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    """Lobatto nodes (ascending, endpoints included) and positive weights on [alpha, beta].

    For Legendre the weights integrate against dx; for Chebyshev against the mapped
    weight 1/sqrt(1 - t(x)^2) dx, with the Jacobian (beta - alpha)/2 folded in.
    """

    spec: BasisSpec
    N: int
    nodes: np.ndarray
    weights: np.ndarray

    def __post_init__(self) -> None:
        for name in ("nodes", "weights"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if self.nodes.shape != (self.N + 1,) or self.weights.shape != (self.N + 1,):
            raise ValueError("a rule with N intervals carries N + 1 nodes and weights")
        if np.any(np.diff(self.nodes) <= 0):
            raise QuadratureError("nodes are not strictly increasing")
        if np.any(self.weights <= 0):
            raise QuadratureError("non-positive quadrature weight")

    def integrate(self, f: Callable) -> float:
        return integrate(self, f)


def _check_N(N: int) -> None:
    if int(N) != N or N < 1:
        raise ValueError(f"a Lobatto rule needs N >= 1, got {N}")


def chebyshev_lobatto(alpha: float, beta: float, N: int) -> QuadratureRule:
    _check_N(N)
    spec = BasisSpec(Family.CHEBYSHEV, alpha, beta)
    t = -np.cos(np.pi * np.arange(N + 1) / N)
    # exact symmetry and exact endpoints
    t = 0.5 * (t - t[::-1])
    t[0], t[-1] = -1.0, 1.0
    w = np.full(N + 1, math.pi / N)
    w[0] = w[-1] = math.pi / (2 * N)
    nodes = spec.from_reference(t)
    nodes[0], nodes[-1] = alpha, beta
    return QuadratureRule(spec, N, nodes, w * 0.5 * (beta - alpha))


def _legendre_pair(N: int, t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Return (L_{N-1}(t), L_N(t)) by the three-term recurrence."""
    p0, p1 = np.ones_like(t), t.copy()
    for k in range(1, N):
        p0, p1 = p1, ((2 * k + 1) * t * p1 - k * p0) / (k + 1)
    return p0, p1


@lru_cache(maxsize=256)
def _legendre_lobatto_reference(N: int) -> tuple[np.ndarray, np.ndarray]:
    t = -np.cos(np.pi * np.arange(N + 1) / N)
    inner = t[1:-1].copy()
    done = np.zeros(inner.shape, dtype=bool)
    for _ in range(NEWTON_MAX_ITER):
        if done.all():
            break
        lm1, ln = _legendre_pair(N, inner)
        one_m = 1.0 - inner * inner
        dp = N * (lm1 - inner * ln) / one_m
        d2p = (2.0 * inner * dp - N * (N + 1) * ln) / one_m
        step = dp / d2p
        inner = inner - step
        done |= np.abs(step) <= 1e-15
    else:
        if not done.all():
            bad = int(np.flatnonzero(~done)[0]) + 1
            raise QuadratureError(f"Newton iteration for Lobatto node {bad} did not converge", bad)
    inner = 0.5 * (inner - inner[::-1])
    t = np.concatenate(([-1.0], inner, [1.0]))
    _, ln = _legendre_pair(N, t)
    w = 2.0 / (N * (N + 1) * ln * ln)
    w = 0.5 * (w + w[::-1])
    return t, w


def legendre_lobatto(alpha: float, beta: float, N: int) -> QuadratureRule:
    _check_N(N)
    spec = BasisSpec(Family.LEGENDRE, alpha, beta)
    t, w = _legendre_lobatto_reference(N)
    nodes = spec.from_reference(t)
    nodes[0], nodes[-1] = alpha, beta
    return QuadratureRule(spec, N, nodes, w * 0.5 * (beta - alpha))


def lobatto_rule(spec: BasisSpec, N: int) -> QuadratureRule:
    if spec.family is Family.LEGENDRE:
        return legendre_lobatto(spec.alpha, spec.beta, N)
    return chebyshev_lobatto(spec.alpha, spec.beta, N)


def integrate(rule: QuadratureRule, f: Callable) -> float:
    vals = np.asarray(f(rule.nodes), dtype=float) * np.ones(rule.N + 1)
    bad = np.flatnonzero(~np.isfinite(vals))
    if bad.size:
        j = int(bad[0])
        raise NonFiniteValueError(f"non-finite integrand at node {j} (x = {rule.nodes[j]!r})")
    return math.fsum(vals * rule.weights)
