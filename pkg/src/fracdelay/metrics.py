"""Error measures for piecewise solutions."""

from __future__ import annotations

import math
from typing import Callable, Sequence

import numpy as np

from .basis import BasisSpec, Family
from .quadrature import lobatto_rule
from .stepper import PiecewiseSolution

DEFAULT_SAMPLES = 401


def l2_error(ps: PiecewiseSolution, exact: Callable, order: int | None = None) -> float:
    """Unweighted L2 norm of u_N - exact over the solved domain.

    Each step is integrated with a Legendre-Lobatto rule of ``order`` (default
    4N) so the quadrature error stays far below the spectral error.
    """
    total = []
    for start, sol in zip(ps.starts, ps.steps):
        k = order if order is not None else max(4 * sol.N, 2)
        rule = lobatto_rule(BasisSpec(Family.LEGENDRE, start, start + sol.basis.beta), k)
        diff = np.asarray(ps.eval(rule.nodes), dtype=float) - np.asarray(exact(rule.nodes), dtype=float)
        total.append(float(np.sum(rule.weights * diff**2)))
    return math.sqrt(math.fsum(total))


def sample_grid(horizon: float, count: int = DEFAULT_SAMPLES, extra: Sequence[float] = ()) -> np.ndarray:
    """Uniform grid on [0, horizon] merged with the listed table times."""
    if count < 2:
        raise ValueError("the sample grid needs at least two points")
    grid = np.linspace(0.0, horizon, count)
    extra = [float(t) for t in extra if 0.0 <= t <= horizon]
    if extra:
        grid = np.union1d(grid, extra)
        # drop near-duplicates left by rounding in linspace
        keep = np.concatenate(([True], np.diff(grid) > 1e-12 * max(1.0, horizon)))
        grid = grid[keep]
        for t in extra:
            grid[np.argmin(np.abs(grid - t))] = t
    return grid


def max_abs_error(ps: PiecewiseSolution, exact: Callable, grid) -> float:
    grid = np.asarray(grid, dtype=float)
    return float(np.max(np.abs(ps.eval(grid) - exact(grid))))
