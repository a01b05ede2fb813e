"""Caputo fractional derivatives of the shifted bases.

Two representations are provided for an order ``nu`` and truncation ``N``:

* the node operator ``D[j, k] = (D^nu B_k)(x_j)`` used by the solver, assembled
  from the exact monomial forms term by term (no series truncation);
* for Legendre, the coefficient-space matrix ``S[n, i]`` with
  ``D^nu L_n = sum_i S[n, i] L_i``, truncated to ``i <= N``.

Both are assembled in extended precision and rounded once, because the
monomial coefficients of degree-N shifted polynomials grow roughly like 6^N and
cancel almost completely in double precision.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import mpmath
import numpy as np
from scipy.special import roots_jacobi, roots_legendre

from .basis import MONOMIAL_DEGREE_CAP, BasisSpec, Family, monomial_coefficients_exact
from .special import gamma_fn


@dataclass(frozen=True)
class FractionalOrder:
    nu: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.nu) and self.nu > 0):
            raise ValueError(f"fractional order must be positive, got {self.nu!r}")

    @property
    def m(self) -> int:
        return math.ceil(self.nu)

    @property
    def is_integer(self) -> bool:
        return self.nu == self.m


def as_order(nu: float | FractionalOrder) -> FractionalOrder:
    return nu if isinstance(nu, FractionalOrder) else FractionalOrder(float(nu))


def caputo_monomial(k: int, order: float | FractionalOrder, x):
    """Caputo derivative of x**k: zero below ceil(nu), else Gamma(k+1)/Gamma(k+1-nu) x**(k-nu)."""
    order = as_order(order)
    if k < order.m:
        return 0.0 if np.ndim(x) == 0 else np.zeros(np.shape(x))
    coef = gamma_fn(k + 1) / gamma_fn(k + 1 - order.nu)
    return coef * np.power(x, k - order.nu)


@dataclass(frozen=True, eq=False)
class CaputoOperator:
    basis: BasisSpec
    order: FractionalOrder
    N: int
    nodes: np.ndarray
    node_matrix: np.ndarray
    coeff_matrix: np.ndarray | None = None

    def apply(self, coeffs) -> np.ndarray:
        """Values of D^nu u at the nodes for u = sum_k coeffs[k] B_k."""
        return self.node_matrix @ np.asarray(coeffs, dtype=float)


def _working_digits(N: int) -> int:
    return 30 + N


def _mp(c) -> mpmath.mpf:
    return mpmath.mpf(c.numerator) / c.denominator


def _check_operator_args(basis: BasisSpec, N: int) -> None:
    if basis.alpha != 0:
        raise ValueError("fractional operators require a base interval starting at 0")
    if N > MONOMIAL_DEGREE_CAP:
        raise ValueError(f"N = {N} exceeds the monomial-form cap {MONOMIAL_DEGREE_CAP}")
    if N < 0:
        raise ValueError("N must be non-negative")


@lru_cache(maxsize=256)
def _node_matrix(family: Family, h: float, nu: float, N: int, nodes: tuple[float, ...]) -> np.ndarray:
    ref = BasisSpec(family, 0.0, 1.0)
    m = math.ceil(nu)
    out = np.zeros((len(nodes), N + 1))
    with mpmath.workdps(_working_digits(N)):
        mnu = mpmath.mpf(nu)
        ratio = {j: mpmath.gamma(j + 1) / mpmath.gamma(j + 1 - mnu) for j in range(m, N + 1)}
        scale = mpmath.mpf(h) ** (-mnu)
        for i, x in enumerate(nodes):
            y = mpmath.mpf(x) / mpmath.mpf(h)
            powers = {}
            for j in range(m, N + 1):
                e = j - mnu
                powers[j] = mpmath.mpf(1) if e == 0 else (mpmath.mpf(0) if y == 0 else y**e)
            for k in range(m, N + 1):
                coeffs = monomial_coefficients_exact(ref, k)
                acc = mpmath.fsum(_mp(coeffs[j]) * ratio[j] * powers[j] for j in range(m, k + 1))
                out[i, k] = float(acc * scale)
    return out


def build_node_operator(basis: BasisSpec, order: float | FractionalOrder, N: int, nodes) -> CaputoOperator:
    """Caputo derivative of every basis element B_0..B_N sampled at ``nodes``."""
    order = as_order(order)
    _check_operator_args(basis, N)
    nodes = np.asarray(nodes, dtype=float).reshape(-1)
    if np.any(nodes < 0):
        raise ValueError("Caputo derivative nodes must lie in [0, beta]")
    mat = _node_matrix(basis.family, float(basis.beta), order.nu, N, tuple(nodes.tolist())).copy()
    mat.setflags(write=False)
    coeff = None
    if basis.family is Family.LEGENDRE:
        coeff = build_coeff_operator_legendre(basis, order, N)
    return CaputoOperator(basis, order, N, nodes, mat, coeff)


@lru_cache(maxsize=128)
def _legendre_coeff_matrix(h: float, nu: float, N: int) -> np.ndarray:
    fr = mpmath.mpf
    m = math.ceil(nu)
    S = np.zeros((N + 1, N + 1))
    ref = BasisSpec(Family.LEGENDRE, 0.0, h)
    with mpmath.workdps(_working_digits(N) + 10):
        mnu, beta = fr(nu), fr(h)
        width = beta  # alpha = 0
        # c[i][j] = (2i+1)/(beta-alpha) * int_0^beta x^(j-nu) L_i(x) dx, in closed form
        c = {}
        for i in range(N + 1):
            mono = monomial_coefficients_exact(ref, i)
            for j in range(m, N + 1):
                acc = mpmath.fsum(
                    _mp(mono[q]) * beta ** (j - mnu + q + 1) / (j - mnu + q + 1) for q in range(i + 1)
                )
                c[i, j] = (2 * i + 1) / width * acc
        fact = mpmath.factorial
        for n in range(m, N + 1):
            # a[j]: coefficient of x^(j-nu) in D^nu L_n, from the triple sum over k, l, j
            a = {j: [] for j in range(m, n + 1)}
            for k in range(n // 2 + 1):
                for l in range(m, n - 2 * k + 1):
                    for j in range(m, l + 1):
                        num = (-1) ** (k - j + l) * fr(2) ** (l - n) * beta ** (l - j) * width ** (-l) * fact(2 * n - 2 * k)
                        den = fact(n - k) * fact(k) * fact(n - 2 * k - l) * fact(l - j) * mpmath.gamma(j + 1 - mnu)
                        a[j].append(num / den)
            coef = {j: mpmath.fsum(v) for j, v in a.items()}
            for i in range(N + 1):
                S[n, i] = float(mpmath.fsum(coef[j] * c[i, j] for j in coef))
    return S


def build_coeff_operator_legendre(basis: BasisSpec, order: float | FractionalOrder, N: int) -> np.ndarray:
    """Matrix S with D^nu L_n = sum_{i<=N} S[n, i] L_i (Legendre on [0, beta])."""
    order = as_order(order)
    if basis.family is not Family.LEGENDRE:
        raise ValueError("the coefficient-space operator is defined for the Legendre family only")
    _check_operator_args(basis, N)
    S = _legendre_coeff_matrix(float(basis.beta), order.nu, N).copy()
    S.setflags(write=False)
    return S


# -- memory of earlier steps -------------------------------------------------

_PANEL_POINTS = 24
_GRADING = 0.2


def _kernel_integral(p, a: float, b: float, T: float, expo: float) -> float:
    """int_a^b (T - r)**expo * p(r) dr for T >= b, with p a polynomial callable.

    The kernel is singular at r = T; panels are graded geometrically toward b
    so each one sits at least a fixed fraction of its width away from T.
    """
    width = b - a
    dist = T - b
    if dist <= 1e-14 * width:
        deg = _PANEL_POINTS
        x, w = roots_jacobi(deg, expo, 0.0)
        r = a + 0.5 * width * (1.0 + x)
        return float(np.sum(w * p(r))) * (0.5 * width) ** (expo + 1)
    x, w = roots_legendre(_PANEL_POINTS)
    edges = [a]
    d = width
    while d > dist:
        d *= _GRADING
        edges.append(b - d)
    edges.append(b)
    total = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        if hi <= lo:
            continue
        r = 0.5 * (lo + hi) + 0.5 * (hi - lo) * x
        total += 0.5 * (hi - lo) * float(np.sum(w * (T - r) ** expo * p(r)))
    return total


def memory_term(pieces, order: float | FractionalOrder, T) -> np.ndarray:
    """Contribution of the already-solved part [0, t0] to the Caputo derivative at T >= t0.

    ``pieces`` is a sequence of ``(t_start, SpectralSolution)`` on local intervals
    [0, h]; the result is ``1/Gamma(m-nu) * int_0^t0 (T-r)^(m-nu-1) u^(m)(r) dr``.
    Integer orders are local and give zero.
    """
    order = as_order(order)
    T = np.atleast_1d(np.asarray(T, dtype=float))
    out = np.zeros(T.shape)
    if order.is_integer or not pieces:
        return out
    m = order.m
    expo = m - order.nu - 1.0
    for start, sol in pieces:
        h = sol.basis.beta
        if m > sol.N:
            continue

        def deriv(r, sol=sol, start=start):
            return sol(r - start, m)

        for idx, tq in enumerate(T):
            out[idx] += _kernel_integral(deriv, start, start + h, float(tq), expo)
    return out / gamma_fn(m - order.nu)
