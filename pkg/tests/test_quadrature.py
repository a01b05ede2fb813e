from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from fracdelay.basis import BasisSpec
from fracdelay.errors import NonFiniteValueError, QuadratureError
from fracdelay.quadrature import QuadratureRule, chebyshev_lobatto, integrate, legendre_lobatto, lobatto_rule


class TestChebyshevLobatto:
    def test_three_point_rule(self):
        rule = chebyshev_lobatto(-1, 1, 2)
        assert_allclose(rule.nodes, [-1, 0, 1], atol=1e-15)
        assert_allclose(rule.weights, [math.pi / 4, math.pi / 2, math.pi / 4])

    def test_shifted_nodes(self):
        assert_allclose(chebyshev_lobatto(0, 1, 2).nodes, [0, 0.5, 1], atol=1e-15)

    def test_constant(self):
        assert integrate(chebyshev_lobatto(-1, 1, 4), lambda t: np.ones_like(t)) == pytest.approx(math.pi)

    def test_weighted_square(self):
        assert integrate(chebyshev_lobatto(-1, 1, 6), lambda t: t**2) == pytest.approx(math.pi / 2)

    def test_rejects_zero_nodes(self):
        with pytest.raises(ValueError):
            chebyshev_lobatto(0, 1, 0)


class TestLegendreLobatto:
    def test_three_point_rule(self):
        rule = legendre_lobatto(-1, 1, 2)
        assert_allclose(rule.nodes, [-1, 0, 1], atol=1e-15)
        assert_allclose(rule.weights, [1 / 3, 4 / 3, 1 / 3])
        assert integrate(rule, lambda t: t**2) == pytest.approx(2 / 3)

    def test_degree_fifteen_exact(self):
        assert integrate(legendre_lobatto(0, 1, 8), lambda x: x**15) == pytest.approx(1 / 16, abs=1e-14)

    def test_degree_sixteen_not_exact(self):
        err = abs(integrate(legendre_lobatto(0, 1, 8), lambda x: x**16) - 1 / 17)
        assert 0 < err <= 1e-4

    def test_constant_on_step(self):
        assert integrate(legendre_lobatto(0, 0.7, 5), lambda x: np.ones_like(x)) == pytest.approx(0.7)

    @given(st.integers(2, 24), st.integers(0, 2**31 - 1))
    def test_exact_through_2n_minus_1(self, N, seed):
        c = np.random.default_rng(seed).normal(size=2 * N)
        rule = legendre_lobatto(0.0, 2.0, N)
        p = np.polynomial.Polynomial(c)
        exact = p.integ()(2.0) - p.integ()(0.0)
        assert integrate(rule, p) == pytest.approx(exact, rel=1e-12, abs=1e-12 * np.abs(c).sum())

    @given(st.integers(1, 60), st.floats(0.1, 10))
    def test_symmetry_and_weight_sum(self, N, half):
        rule = legendre_lobatto(-half, half, N)
        assert_allclose(rule.nodes, -rule.nodes[::-1], atol=1e-13 * half)
        assert np.all(rule.weights > 0)
        assert rule.weights.sum() == pytest.approx(2 * half, rel=1e-12)

    def test_endpoints_included(self):
        rule = lobatto_rule(BasisSpec("legendre", 0.25, 3.0), 9)
        assert rule.nodes[0] == 0.25 and rule.nodes[-1] == 3.0


class TestIntegrate:
    def test_non_finite_value_names_node(self):
        rule = legendre_lobatto(0, 1, 4)
        with pytest.raises(NonFiniteValueError, match="node 0"), np.errstate(divide="ignore"):
            integrate(rule, lambda x: 1 / x)

    def test_rule_validation(self):
        spec = BasisSpec("legendre", 0, 1)
        with pytest.raises(ValueError):
            QuadratureRule(spec, 1, np.array([0.0, 0.0]), np.array([0.5, 0.5]))
        with pytest.raises(ValueError):
            QuadratureRule(spec, 1, np.array([0.0, 1.0]), np.array([0.5, -0.5]))

    def test_invalid_rule_is_quadrature_error(self):
        with pytest.raises(QuadratureError):
            QuadratureRule(BasisSpec("legendre", 0, 1), 1, np.array([1.0, 0.0]), np.array([0.5, 0.5]))
