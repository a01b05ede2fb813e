"""Gamma function front end used by the Caputo operators and the expression engine."""

from __future__ import annotations

import math

import numpy as np


def _gamma_scalar(x: float) -> float:
    if x <= 0 and x == math.floor(x):
        raise ValueError(f"gamma has a pole at {x!r}")
    try:
        return math.gamma(x)
    except OverflowError:
        return math.inf


def gamma_fn(x):
    """Gamma(x) for real x away from the poles; accepts scalars or arrays."""
    if np.ndim(x) == 0:
        return _gamma_scalar(float(x))
    arr = np.asarray(x, dtype=float)
    return np.vectorize(_gamma_scalar, otypes=[float])(arr)
