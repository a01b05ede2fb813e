"""Acceptance suite: one test and one PASS/FAIL summary line per criterion.

Run with ``pytest tests/test_acceptance.py -v``; the lines are repeated in the
"acceptance criteria" section at the end of the pytest report.
"""

from __future__ import annotations

import math
import time

import numpy as np
import pytest

from fracdelay.basis import BasisSpec, Family, SpectralSolution, project, vandermonde
from fracdelay.caputo import build_coeff_operator_legendre, build_node_operator
from fracdelay.cli import RunConfig, run
from fracdelay.problems import builtin
from fracdelay.quadrature import integrate, lobatto_rule
from fracdelay.stepper import solve

BOTH = (Family.LEGENDRE, Family.CHEBYSHEV)

# Chebyshev, N = 15: t -> (exact nu=1, nu=0.9, nu=0.75, nu=0.5)
HOUSEFLIES_TAU3 = {
    0.75: (234.865602, 239.333361, 245.219089, 252.133912),
    2.25: (361.967021, 352.369942, 336.687494, 308.795525),
    3.75: (481.825305, 472.760850, 459.813354, 439.073221),
    5.25: (670.725206, 650.373599, 614.508045, 543.799282),
    6.0: (776.578086, 742.142667, 685.419046, 583.383909),
}
HOUSEFLIES_TAU5 = {
    1.25: (280.382021, 281.116516, 280.559015, 275.428893),
    3.75: (463.917311, 437.587058, 399.856049, 342.930615),
    6.25: (636.682069, 609.967593, 571.739341, 510.393022),
    8.75: (950.311527, 890.874639, 798.685328, 645.755656),
    10.0: (1107.006007, 1022.495184, 895.594663, 695.358908),
}
FRACTIONAL_NU = (0.9, 0.75, 0.5)


def test_criterion_1_ex1_case_i_chebyshev(acceptance):
    limits = {5: 1e-3, 9: 1e-6, 15: 1e-11}
    results = {}
    for N in limits:
        rep, _, _ = run(RunConfig("Ex1CaseI", Family.CHEBYSHEV, N, nu=0.1, tau=0.5))
        results[N] = (rep.l2_error, rep.wall_clock_seconds)
    ok = all(results[N][0] <= limits[N] and results[N][1] <= 5.0 for N in limits)
    detail = ", ".join(f"N={N}: L2={e:.3e} ({s:.2f} s)" for N, (e, s) in results.items())
    acceptance(1, ok, detail)
    assert ok


def test_criterion_2_ex2_case_i(acceptance):
    errs = {}
    for fam in BOTH:
        rep, _, _ = run(RunConfig("Ex2CaseI", fam, 11, nu=0.1, tau=0.5))
        errs[fam.value] = rep.l2_error
    ok = all(e <= 1e-11 for e in errs.values())
    acceptance(2, ok, ", ".join(f"{k}: L2={v:.3e}" for k, v in errs.items()))
    assert ok


def test_criterion_3_houseflies(acceptance):
    worst_exact = 0.0
    worst_frac = {nu: 0.0 for nu in FRACTIONAL_NU}
    for tau, table in ((3.0, HOUSEFLIES_TAU3), (5.0, HOUSEFLIES_TAU5)):
        times = np.array(sorted(table))
        ps, _ = solve(builtin("Houseflies", {"tau": tau, "nu": 1.0}).to_problem(), Family.CHEBYSHEV, 15)
        want = np.array([table[t][0] for t in times])
        worst_exact = max(worst_exact, float(np.abs(ps.eval(times) - want).max()))
        for k, nu in enumerate(FRACTIONAL_NU, start=1):
            ps, _ = solve(builtin("Houseflies", {"tau": tau, "nu": nu}).to_problem(), Family.CHEBYSHEV, 15)
            want = np.array([table[t][k] for t in times])
            worst_frac[nu] = max(worst_frac[nu], float(np.abs(ps.eval(times) - want).max()))
    ok = worst_exact <= 1e-3 and all(v <= 1e-2 for v in worst_frac.values())
    detail = f"nu=1 max dev {worst_exact:.2e} (limit 1e-3); " + ", ".join(
        f"nu={nu} max dev {v:.2e}" for nu, v in worst_frac.items()
    ) + " (limit 1e-2)"
    acceptance(3, ok, detail)
    assert ok


def test_criterion_4_laser_noise(acceptance):
    devs = {}
    for fam in BOTH:
        ps, _ = solve(builtin("LaserNoise", {"tau": 1.0, "nu": 1.0}).to_problem(), fam, 15)
        devs[(fam.value, 1.0)] = abs(ps.eval(2.0) - 0.004444)
        ps, _ = solve(builtin("LaserNoise", {"tau": 3.0, "nu": 1.0}).to_problem(), fam, 15)
        devs[(fam.value, 3.0)] = abs(ps.eval(6.0) - 0.0)
    ok = all(v <= 1e-4 for v in devs.values())
    acceptance(4, ok, ", ".join(f"{f} tau={t:g}: dev {v:.2e}" for (f, t), v in devs.items()))
    assert ok


def test_criterion_5_fractional_bvp(acceptance):
    parts = []
    ok = True
    for fam in BOTH:
        ps, _ = solve(builtin("FracBVP", {"nu": 2.0, "nu1": 1.0}).to_problem(), fam, 15)
        d25 = abs(ps.eval(0.25) - 1.758281)
        d75 = abs(ps.eval(0.75) - 2.777411)
        b0 = abs(ps.eval(0.0) - 1.0)
        b1 = abs(ps.eval(1.0) - 3.0)
        ok &= d25 <= 5e-4 and d75 <= 5e-4 and b0 <= 1e-10 and b1 <= 1e-10
        parts.append(f"{fam.value}: dev {d25:.1e}/{d75:.1e}, boundary {b0:.1e}/{b1:.1e}")
    acceptance(5, ok, "; ".join(parts))
    assert ok


def test_criterion_6_exponential_convergence(acceptance):
    Ns = np.arange(5, 18)
    slopes = {}
    for fam in BOTH:
        errs = [run(RunConfig("Ex2CaseII", fam, int(N)))[0].l2_error for N in Ns]
        slopes[fam.value] = float(np.polyfit(Ns, np.log10(errs), 1)[0])
    ok = all(s <= -0.5 for s in slopes.values())
    acceptance(6, ok, ", ".join(f"{k}: slope {v:.3f} per unit N" for k, v in slopes.items()))
    assert ok


def _operator_suite() -> dict[str, float]:
    """Largest violation of each operator property (compared with its limit below)."""
    out = {}
    leg = BasisSpec(Family.LEGENDRE, 0.0, 1.0)

    # integer-order consistency: nu = m reproduces the m-th derivative matrix
    worst = 0.0
    for fam in BOTH:
        spec = BasisSpec(fam, 0.0, 1.5)
        for N in (5, 12, 20):
            x = lobatto_rule(spec, N).nodes
            for m in (1, 2):
                D = build_node_operator(spec, float(m), N, x).node_matrix
                worst = max(worst, float(np.abs(D - vandermonde(spec, N, x, m)).max()))
    out["integer order"] = worst

    # zero columns below ceil(nu)
    worst = 0.0
    for fam in BOTH:
        spec = BasisSpec(fam, 0.0, 2.0)
        x = lobatto_rule(spec, 8).nodes
        for nu, m in ((0.3, 1), (1.6, 2)):
            worst = max(worst, float(np.abs(build_node_operator(spec, nu, 8, x).node_matrix[:, :m]).max()))
    out["zero columns"] = worst

    # monomial oracle D^0.5 t at t = 1 is 2/sqrt(pi)
    a = project(leg, lambda x: x, 4).coeffs
    out["monomial oracle"] = abs(build_node_operator(leg, 0.5, 4, [1.0]).apply(a)[0] - 2 / math.sqrt(math.pi))

    # coefficient route (Legendre matrix S) against the node route for u = t^2,
    # nu = 0.5, N = 12, at the interior collocation nodes
    N = 12
    x = lobatto_rule(leg, N).nodes[1:-1]
    a = project(leg, lambda s: s**2, N).coeffs
    S = build_coeff_operator_legendre(leg, 0.5, N)
    node = build_node_operator(leg, 0.5, N, x).apply(a)
    out["coefficient vs node route"] = float(np.abs(SpectralSolution(leg, S.T @ a)(x) - node).max())

    # Lobatto exactness through degree 2N - 1 (Chebyshev rule carries its weight)
    rng = np.random.default_rng(7)
    worst = 0.0
    for N in range(2, 25):
        p = np.polynomial.Polynomial(rng.normal(size=2 * N))
        scale = np.abs(p.coef).sum()
        # on [0, 1] the monomial coefficients bound |p|, so scale is a fair yardstick
        want = p.integ()(1.0) - p.integ()(0.0)
        worst = max(worst, abs(integrate(lobatto_rule(leg, N), p) - want) / scale)
        t, w = np.polynomial.chebyshev.chebgauss(2 * N + 4)
        want = 0.5 * float(np.sum(w * p(0.5 * (1.0 + t))))
        worst = max(worst, abs(integrate(lobatto_rule(BasisSpec(Family.CHEBYSHEV, 0.0, 1.0), N), p) - want) / scale)
    out["Lobatto exactness"] = worst
    return out


OPERATOR_LIMITS = {
    "integer order": 1e-9,
    "zero columns": 0.0,
    "monomial oracle": 1e-12,
    "coefficient vs node route": 1e-8,
    "Lobatto exactness": 1e-12,
}


def test_criterion_7_operator_suite(acceptance):
    clock = time.perf_counter()
    found = _operator_suite()
    elapsed = time.perf_counter() - clock
    failed = [k for k, v in found.items() if v > OPERATOR_LIMITS[k]]
    ok = not failed and elapsed <= 60.0
    detail = ", ".join(f"{k} {v:.1e}" for k, v in found.items()) + f"; {elapsed:.1f} s"
    if failed:
        detail += f"; over limit: {', '.join(failed)}"
    acceptance(7, ok, detail)
    assert ok


BENCHMARKS = (
    [("Ex1CaseI", {}), ("Ex1CaseII", {}), ("Ex2CaseI", {}), ("Ex2CaseII", {})]
    + [("Houseflies", {"tau": t, "nu": n}) for t in (3.0, 5.0) for n in (1.0, 0.9, 0.75, 0.5)]
    + [("LaserNoise", {"tau": t, "nu": n}) for t in (1.0, 3.0) for n in (1.0, 0.9, 0.75, 0.5)]
    + [("FracBVP", {"nu": n, "nu1": 1.0}) for n in (2.0, 1.5)]
)


def test_criterion_8_knot_continuity(acceptance):
    worst, where = 0.0, ""
    for name, ov in BENCHMARKS:
        for fam in BOTH:
            prob = builtin(name, ov).to_problem()
            ps, _ = solve(prob, fam, 15)
            jump = float(ps.knot_jumps(prob.mu).max(initial=0.0))
            if jump >= worst:
                worst, where = jump, f"{name} {ov} {fam.value}"
    ok = worst <= 1e-9
    acceptance(8, ok, f"{len(BENCHMARKS) * 2} runs, largest jump {worst:.2e} ({where})")
    assert ok


@pytest.mark.parametrize("fam", BOTH)
def test_operator_routes_agree_in_coefficient_space(fam):
    """Companion to criterion 7: the two routes agree once both are expanded in Legendre coefficients."""
    from scipy.special import roots_jacobi

    leg = BasisSpec(Family.LEGENDRE, 0.0, 1.0)
    N, nu = 12, 0.5
    a = project(leg, lambda s: s**2, N).coeffs
    S = build_coeff_operator_legendre(leg, nu, N)
    # D^nu of a polynomial is x^(-nu) times a polynomial: Gauss-Jacobi is exact
    s, w = roots_jacobi(N + 2, 0.0, -nu)
    x = 0.5 * (1 + s)
    vals = build_node_operator(leg, nu, N, x).apply(a) * x**nu
    ints = (vandermonde(leg, N, x) * (w * vals)[:, None]).sum(axis=0) * 0.5 ** (1 - nu)
    node_coeffs = ints * (2 * np.arange(N + 1) + 1)
    assert np.abs(S.T @ a - node_coeffs).max() <= 1e-8
