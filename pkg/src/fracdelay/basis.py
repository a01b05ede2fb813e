"""Shifted Legendre and Chebyshev polynomial families on an interval [alpha, beta].

Every family member is the classical polynomial composed with the affine map
``t = 2 (x - beta) / (beta - alpha) + 1`` which sends [alpha, beta] onto [-1, 1].
Evaluation (values and integer derivatives) goes through three-term
recurrences; the monomial forms are exact rationals and exist for the
fractional-derivative operators and for cross-checking.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Callable

import numpy as np

from .errors import NonFiniteValueError

MONOMIAL_DEGREE_CAP = 60


class Family(enum.Enum):
    LEGENDRE = "legendre"
    CHEBYSHEV = "chebyshev"

    @classmethod
    def parse(cls, name: str | Family) -> Family:
        if isinstance(name, Family):
            return name
        try:
            return cls(name.strip().lower())
        except ValueError:
            raise ValueError(f"unknown basis family {name!r} (expected 'legendre' or 'chebyshev')") from None


@dataclass(frozen=True)
class BasisSpec:
    family: Family
    alpha: float
    beta: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "family", Family.parse(self.family))
        if not (math.isfinite(self.alpha) and math.isfinite(self.beta)):
            raise ValueError("interval endpoints must be finite")
        if not self.beta > self.alpha:
            raise ValueError(f"empty interval [{self.alpha}, {self.beta}]")

    @property
    def length(self) -> float:
        return self.beta - self.alpha

    def to_reference(self, x):
        """Map points of [alpha, beta] to the reference variable t in [-1, 1]."""
        return 2.0 * (np.asarray(x, dtype=float) - self.beta) / self.length + 1.0

    def from_reference(self, t):
        return 0.5 * self.length * (np.asarray(t, dtype=float) - 1.0) + self.beta


@dataclass(frozen=True)
class MonomialForm:
    """Power-series representation ``sum_j coeffs[j] * x**j`` of one basis element."""

    degree: int
    coeffs: tuple[float, ...]
    exact: tuple[Fraction, ...] = field(default=(), repr=False, compare=False)

    def __post_init__(self) -> None:
        if len(self.coeffs) != self.degree + 1:
            raise ValueError("coefficient count must be degree + 1")
        if self.degree > 0 and self.coeffs[-1] == 0:
            raise ValueError("leading coefficient vanishes")

    def __call__(self, x: float, m: int = 0) -> float:
        """Evaluate the m-th derivative.

        With the exact rational coefficients at hand the sum is formed exactly
        and rounded once; otherwise the float coefficients are summed with
        compensation (the terms still carry their own rounding).
        """
        if self.exact:
            xq = Fraction(float(x))
            acc = sum(c * math.perm(j, m) * xq ** (j - m) for j, c in enumerate(self.exact) if j >= m)
            return float(acc)
        terms = []
        for j in range(m, self.degree + 1):
            terms.append(self.coeffs[j] * math.perm(j, m) * x ** (j - m))
        return math.fsum(terms)


def _check_degree(k: int) -> None:
    if k < 0 or int(k) != k:
        raise ValueError(f"degree must be a non-negative integer, got {k}")


def vandermonde(spec: BasisSpec, N: int, x, m: int = 0) -> np.ndarray:
    """Matrix V[i, k] = d^m/dx^m B_k(x_i) for k = 0..N.

    Derivatives come from differentiating the three-term recurrence, e.g. for
    Legendre ``(k+1) P_{k+1}^{(m)} = (2k+1) (t P_k^{(m)} + m P_k^{(m-1)}) - k P_{k-1}^{(m)}``.
    """
    _check_degree(N)
    if m < 0 or int(m) != m:
        raise ValueError(f"derivative order must be a non-negative integer, got {m}")
    t = np.atleast_1d(spec.to_reference(x)).astype(float)
    npts = t.shape[0]
    # table[d] holds the current column of the d-th t-derivative for d = 0..m
    prev = np.zeros((m + 1, npts))
    cur = np.zeros((m + 1, npts))
    cur[0] = 1.0
    out = np.zeros((npts, N + 1))
    out[:, 0] = cur[m]
    legendre = spec.family is Family.LEGENDRE
    for k in range(N):
        nxt = np.empty_like(cur)
        for d in range(m + 1):
            shift = d * cur[d - 1] if d > 0 else 0.0
            if legendre:
                nxt[d] = ((2 * k + 1) * (t * cur[d] + shift) - k * prev[d]) / (k + 1)
            elif k == 0:
                nxt[d] = t * cur[d] + shift
            else:
                nxt[d] = 2.0 * (t * cur[d] + shift) - prev[d]
        prev, cur = cur, nxt
        out[:, k + 1] = cur[m]
    if m:
        out *= (2.0 / spec.length) ** m
    return out


def eval_basis(spec: BasisSpec, k: int, x):
    """Value of the k-th shifted basis polynomial at x (scalar or array)."""
    _check_degree(k)
    vals = vandermonde(spec, k, x)[:, k]
    return float(vals[0]) if np.ndim(x) == 0 else vals


def eval_derivative(spec: BasisSpec, k: int, m: int, x):
    """m-th derivative of the k-th basis polynomial; exactly zero when m > k."""
    _check_degree(k)
    if m > k:
        return 0.0 if np.ndim(x) == 0 else np.zeros(np.shape(x))
    vals = vandermonde(spec, k, x, m)[:, k]
    return float(vals[0]) if np.ndim(x) == 0 else vals


def _fraction(v: float) -> Fraction:
    return Fraction(v)


@lru_cache(maxsize=512)
def _legendre_monomial_exact(alpha: Fraction, beta: Fraction, n: int) -> tuple[Fraction, ...]:
    # triple sum over k (Legendre power series), l (binomial in the map), j (power of x)
    coeffs = [Fraction(0)] * (n + 1)
    width = beta - alpha
    for k in range(n // 2 + 1):
        for l in range(n - 2 * k + 1):
            for j in range(l + 1):
                num = (-1) ** (k - j + l) * math.factorial(2 * n - 2 * k) * beta ** (l - j)
                den = (
                    width**l
                    * math.factorial(n - k)
                    * math.factorial(k)
                    * math.factorial(n - 2 * k - l)
                    * math.factorial(j)
                    * math.factorial(l - j)
                )
                coeffs[j] += Fraction(2) ** (l - n) * num / den
    return tuple(coeffs)


@lru_cache(maxsize=512)
def _chebyshev_monomial_exact(alpha: Fraction, beta: Fraction, n: int) -> tuple[Fraction, ...]:
    # T_n(t) = (n/2) sum_k (-1)^k (n-k-1)! / (k! (n-2k)!) (2t)^(n-2k), then expand t(x)
    if n == 0:
        return (Fraction(1),)
    width = beta - alpha
    coeffs = [Fraction(0)] * (n + 1)
    for k in range(n // 2 + 1):
        c = Fraction(n * (-1) ** k * math.factorial(n - k - 1), 2 * math.factorial(k) * math.factorial(n - 2 * k))
        c *= 2 ** (n - 2 * k)
        p = n - 2 * k
        for l in range(p + 1):
            for j in range(l + 1):
                coeffs[j] += (
                    c
                    * math.comb(p, l)
                    * math.comb(l, j)
                    * (-1) ** (l - j)
                    * 2**l
                    * beta ** (l - j)
                    / width**l
                )
    return tuple(coeffs)


def monomial_coefficients_exact(spec: BasisSpec, k: int) -> tuple[Fraction, ...]:
    """Exact rational monomial coefficients of B_k (endpoints taken as exact binary fractions)."""
    _check_degree(k)
    if k > MONOMIAL_DEGREE_CAP:
        raise ValueError(f"degree {k} exceeds the monomial-form cap {MONOMIAL_DEGREE_CAP}")
    a, b = _fraction(spec.alpha), _fraction(spec.beta)
    if spec.family is Family.LEGENDRE:
        return _legendre_monomial_exact(a, b, k)
    return _chebyshev_monomial_exact(a, b, k)


def monomial_form(spec: BasisSpec, k: int) -> MonomialForm:
    exact = monomial_coefficients_exact(spec, k)
    return MonomialForm(k, tuple(float(c) for c in exact), exact)


@dataclass(frozen=True)
class SpectralSolution:
    basis: BasisSpec
    coeffs: np.ndarray

    def __post_init__(self) -> None:
        c = np.array(self.coeffs, dtype=float).reshape(-1)
        if c.size == 0:
            raise ValueError("a spectral solution needs at least one coefficient")
        if not np.all(np.isfinite(c)):
            raise NonFiniteValueError("spectral coefficients must be finite")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @property
    def N(self) -> int:
        return self.coeffs.size - 1

    def __call__(self, x, m: int = 0):
        return eval_solution(self, m, x)


def eval_solution(sol: SpectralSolution, m: int, x):
    if m > sol.N:
        return 0.0 if np.ndim(x) == 0 else np.zeros(np.shape(x))
    vals = vandermonde(sol.basis, sol.N, np.ravel(x), m) @ sol.coeffs
    return float(vals[0]) if np.ndim(x) == 0 else vals.reshape(np.shape(x))


def normalization(spec: BasisSpec, k: int) -> float:
    """Squared norm of B_k in the family's natural inner product on [alpha, beta].

    Legendre: unweighted, (beta - alpha) / (2k + 1).  Chebyshev: weight
    1/sqrt(1 - t(x)^2), giving (beta - alpha)/2 * pi * (1 if k == 0 else 1/2).
    """
    if spec.family is Family.LEGENDRE:
        return spec.length / (2 * k + 1)
    return 0.5 * spec.length * (math.pi if k == 0 else 0.5 * math.pi)


def project(spec: BasisSpec, f: Callable, N: int, *, extra_nodes: int = 16) -> SpectralSolution:
    """Orthogonal projection of f onto the first N+1 basis elements.

    The inner products use the family's Lobatto rule with ``N + extra_nodes + 1``
    points, exact for every polynomial f of degree <= N.
    """
    from .quadrature import lobatto_rule

    _check_degree(N)
    rule = lobatto_rule(spec, N + extra_nodes)
    vals = np.asarray(f(rule.nodes), dtype=float) * np.ones_like(rule.nodes)
    bad = np.flatnonzero(~np.isfinite(vals))
    if bad.size:
        j = int(bad[0])
        raise NonFiniteValueError(f"non-finite function value at quadrature node {j} (x = {rule.nodes[j]!r})")
    V = vandermonde(spec, N, rule.nodes)
    norms = np.array([normalization(spec, k) for k in range(N + 1)])
    coeffs = (V * rule.weights[:, None]).T @ vals / norms
    return SpectralSolution(spec, coeffs)
