from __future__ import annotations

import numpy as np
import pytest
from numpy.testing import assert_allclose

from fracdelay.basis import Family
from fracdelay.collocation import SolverConfig
from fracdelay.errors import ConfigError, ConvergenceError, DegenerateOperatorError
from fracdelay.metrics import l2_error
from fracdelay.problems import builtin
from fracdelay.stepper import FDDEProblem, PiecewiseSolution, StepFailure, solve


def const_history(value):
    def phi(t, m=0):
        t = np.asarray(t, dtype=float)
        return np.full(t.shape, float(value) if m == 0 else 0.0)

    return phi


@pytest.fixture(scope="module")
def houseflies():
    return solve(builtin("Houseflies").to_problem(), Family.LEGENDRE, 15)


@pytest.fixture(scope="module")
def laser():
    return solve(builtin("LaserNoise").to_problem(), Family.LEGENDRE, 15)


@pytest.fixture(scope="module")
def ex1():
    return solve(builtin("Ex1CaseI").to_problem(), Family.CHEBYSHEV, 15)


class TestSolveExamples:
    def test_ex1_case_i_chebyshev(self, ex1):
        ps, rep = ex1
        defn = builtin("Ex1CaseI")
        assert l2_error(ps, defn.exact_fn()) <= 1e-12
        assert len(rep.steps) == 2
        assert rep.wall_clock_seconds > 0

    def test_houseflies_integer_order(self, houseflies):
        ps, _ = houseflies
        assert abs(ps.eval(6.0) - 776.578086) <= 1e-4

    def test_trivial_zero_solution(self):
        prob = FDDEProblem(
            nu=0.5, tau=0.5, horizon=1.0,
            rhs=lambda t, u, ud: u * ud - ud**2,
            history=const_history(0.0),
        )
        ps, _ = solve(prob, Family.LEGENDRE, 10)
        for sol in ps.steps:
            assert np.abs(sol.coeffs).max() <= 1e-13

    def test_report_contents(self, houseflies):
        _, rep = houseflies
        assert [s.index for s in rep.steps] == [1, 2]
        assert all(i >= 1 for i in rep.iterations)
        assert all(np.isfinite(r) and r >= 0 for r in rep.residuals)


class TestEval:
    def test_history_at_zero(self, houseflies):
        ps, _ = houseflies
        assert ps.eval(0.0) == pytest.approx(160.0, abs=1e-10)

    def test_history_range_delegates(self, houseflies):
        ps, _ = houseflies
        assert_allclose(ps.eval(np.array([-3.0, -1.2, -1e-9])), 160.0, rtol=0, atol=0)

    def test_knot_agreement(self, houseflies, laser, ex1):
        for ps, _ in (houseflies, laser, ex1):
            for knot, prev in zip(ps.starts[1:], ps.steps[:-1]):
                assert abs(prev(prev.basis.beta) - ps.eval(knot)) <= 1e-10 * max(1.0, abs(ps.eval(knot)))

    def test_knot_uses_later_step(self, laser):
        ps, _ = laser
        assert ps.eval(1.0) == ps.steps[1](0.0)

    def test_laser_value(self, laser):
        ps, _ = laser
        assert abs(ps.eval(2.0) - 0.004444) <= 1e-5

    @pytest.mark.parametrize("t", [-3.5, 6.1, 7.0])
    def test_outside_range(self, houseflies, t):
        ps, _ = houseflies
        with pytest.raises(ValueError):
            ps.eval(t)

    def test_vector_matches_scalar(self, laser):
        ps, _ = laser
        ts = np.linspace(-1, 2, 13)
        assert_allclose(ps.eval(ts), [ps.eval(float(t)) for t in ts], rtol=0, atol=0)


class TestLagTrace:
    def test_history_component(self, houseflies):
        ps, _ = houseflies
        _, lag = ps.lag_trace(np.array([0.0, 1.0, 2.9]))
        assert_allclose(lag, 160.0, atol=0)

    def test_at_tau(self, houseflies):
        ps, _ = houseflies
        _, lag = ps.lag_trace(3.0)
        assert lag == pytest.approx(160.0, abs=1e-12)

    def test_laser_pair(self, laser):
        ps, _ = laser
        u, lag = ps.lag_trace(1.75)
        assert abs(u - 0.021138) <= 1e-5
        assert abs(lag - 0.425130) <= 1e-5


class TestContinuity:
    @pytest.mark.parametrize("name", ["Houseflies", "LaserNoise", "Ex1CaseI", "Ex2CaseII"])
    def test_jumps(self, name):
        prob = builtin(name).to_problem()
        ps, _ = solve(prob, Family.LEGENDRE, 15)
        jumps = ps.knot_jumps(prob.mu)
        scale = max(1.0, float(np.abs(ps.eval(np.array(ps.starts[1:]))).max())) if len(ps.steps) > 1 else 1.0
        assert jumps.max(initial=0.0) <= 1e-10 * scale

    def test_second_order_continuity(self):
        # u'' = -u(t - 1), u = 1 on [-1, 0]: u and u' must both be continuous
        def phi(t, m=0):
            t = np.asarray(t, dtype=float)
            return np.full(t.shape, 1.0 if m == 0 else 0.0)

        prob = FDDEProblem(nu=2.0, tau=1.0, horizon=3.0, rhs=lambda t, u, ud: -ud, history=phi)
        ps, _ = solve(prob, Family.CHEBYSHEV, 12)
        assert ps.knot_jumps(2).max() <= 1e-10
        # exact: 1 - t^2/2 on [0,1]; on [1,2] u'' = -(1 - (t-1)^2/2)
        assert ps.eval(1.0) == pytest.approx(0.5, abs=1e-12)
        t = 1.6
        exact = 0.5 - (t - 1) - (t - 1) ** 2 / 2 + (t - 1) ** 4 / 24
        assert ps.eval(t) == pytest.approx(exact, abs=1e-12)


class TestPolynomialExactness:
    @pytest.mark.parametrize("family", list(Family))
    def test_integer_order_polynomial(self, family):
        # u' = 3t^2 - 2u(t-1) ... manufactured so that u = t^3 + 1 everywhere
        def exact(t):
            return np.asarray(t, dtype=float) ** 3 + 1

        def phi(t, m=0):
            t = np.asarray(t, dtype=float)
            return [t**3 + 1, 3 * t**2, 6 * t, 6.0 + 0 * t][m]

        def rhs(t, u, ud):
            return 3 * t**2 + u * ud - exact(t) * exact(t - 1)

        prob = FDDEProblem(nu=1.0, tau=1.0, horizon=3.0, rhs=rhs, history=phi)
        ps, _ = solve(prob, family, 8, SolverConfig(method="newton"))
        assert l2_error(ps, exact) <= 1e-10


class TestShrinkingHorizon:
    @pytest.mark.parametrize("memory", [True, False])
    def test_restriction(self, memory):
        full = builtin("LaserNoise", {"tau": 0.5}).to_problem()
        half = builtin("LaserNoise", {"tau": 0.5, "horizon": 1.0}).to_problem()
        a, _ = solve(full, Family.LEGENDRE, 12, memory=memory)
        b, _ = solve(half, Family.LEGENDRE, 12, memory=memory)
        ts = np.linspace(0, 1, 41)
        assert_allclose(a.eval(ts), b.eval(ts), rtol=0, atol=1e-10)

    def test_fractional_restriction(self):
        full = builtin("Houseflies", {"nu": 0.75, "tau": 1.0, "horizon": 4.0}).to_problem()
        half = builtin("Houseflies", {"nu": 0.75, "tau": 1.0, "horizon": 2.0}).to_problem()
        a, _ = solve(full, Family.CHEBYSHEV, 10)
        b, _ = solve(half, Family.CHEBYSHEV, 10)
        ts = np.linspace(0, 2, 21)
        assert_allclose(a.eval(ts), b.eval(ts), rtol=0, atol=1e-10 * np.abs(b.eval(ts)).max())


class TestPartialStep:
    def test_short_final_step(self):
        prob = builtin("LaserNoise", {"horizon": 1.6}).to_problem()
        ps, _ = solve(prob, Family.LEGENDRE, 12)
        assert ps.ends[-1] == pytest.approx(1.6)
        assert ps.steps[-1].basis.beta == pytest.approx(0.6)
        ref, _ = solve(builtin("LaserNoise").to_problem(), Family.LEGENDRE, 12)
        assert ps.eval(1.0) == pytest.approx(ref.eval(1.0), abs=1e-12)

    def test_single_short_step(self):
        prob = builtin("FracBVP").to_problem()
        ps, _ = solve(prob, Family.LEGENDRE, 15)
        assert len(ps.steps) == 1
        assert ps.eval(0.0) == pytest.approx(1.0, abs=1e-10)
        assert ps.eval(1.0) == pytest.approx(3.0, abs=1e-10)


class TestErrors:
    def test_N_too_small(self):
        prob = builtin("FracBVP").to_problem()
        with pytest.raises(ConfigError):
            solve(prob, Family.LEGENDRE, 2)

    @pytest.mark.parametrize("kw", [{"tau": 0.0}, {"horizon": -1.0}])
    def test_bad_problem(self, kw):
        args = dict(nu=0.5, tau=1.0, horizon=1.0, rhs=lambda t, u, ud: u, history=const_history(1.0))
        args.update(kw)
        with pytest.raises(ConfigError):
            FDDEProblem(**args)

    def test_failure_annotated_with_step(self):
        # stiff only in the second step, where plain fixed-point iteration diverges
        prob = FDDEProblem(
            nu=1.0, tau=1.0, horizon=2.0,
            rhs=lambda t, u, ud: np.where(np.asarray(t) > 1.0, -60.0 * u, 0.0 * u + 1.0),
            history=const_history(1.0),
        )
        with pytest.raises(StepFailure) as info:
            solve(prob, Family.LEGENDRE, 8, SolverConfig(max_iter=30))
        assert info.value.step == 2
        assert isinstance(info.value.cause, ConvergenceError)
        assert info.value.cause.step == 2

    def test_highest_node_selection_degenerate(self):
        # with 0 < nu < 1 the Caputo row at t = 0 vanishes and repeats the u(0) condition
        with pytest.raises(StepFailure) as info:
            solve(builtin("Ex1CaseI").to_problem(), Family.LEGENDRE, 9, SolverConfig(node_selection="highest"))
        assert isinstance(info.value.cause, DegenerateOperatorError)
        ps, _ = solve(builtin("LaserNoise").to_problem(), Family.LEGENDRE, 15, SolverConfig(node_selection="highest"))
        assert abs(ps.eval(2.0) - 0.004444) <= 1e-4

    def test_constraint_outside_domain(self):
        prob = FDDEProblem(
            nu=2.0, tau=1.0, horizon=1.0, rhs=lambda t, u, ud: 0 * u,
            history=const_history(1.0), extra_constraints=((2.0, 0, 1.0),),
        )
        with pytest.raises((ConfigError, StepFailure)):
            solve(prob, Family.LEGENDRE, 6)


class TestImmutability:
    def test_frozen(self, laser):
        ps, _ = laser
        assert isinstance(ps, PiecewiseSolution)
        with pytest.raises(Exception):
            ps.tau = 2.0
