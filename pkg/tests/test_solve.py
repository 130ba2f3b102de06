import math

import numpy as np
import pytest

from quadgrad.eigen import gamma1
from quadgrad.errors import CertificateError, InputError
from quadgrad.grid import Grid, Interval, Rectangle, gradient_sq, laplacian, linear_solve
from quadgrad.problem import ProblemSpec, constant_problem
from quadgrad.solve import (DEFAULT, SolverConfig, check_identity_phi1, construct_lower_solution,
                            construct_negative_upper_solution, construct_upper_solution_P0,
                            jacobian_direct, jacobian_transformed, monotone_iterate,
                            multistart_family, newton_direct, newton_transformed,
                            ordered_certificate, residual_direct, residual_transformed,
                            solve, solve_multistart, verify_lower, verify_upper)
from quadgrad.transform import cole_hopf_forward, cole_hopf_inverse

PI2 = math.pi ** 2


def _inf(x):
    return float(np.max(np.abs(x)))


# ----------------------------------------------------------------------------
# residuals and Jacobians


def test_residual_zero_for_trivial_solution():
    p = constant_problem(1.0, 31)
    assert _inf(residual_direct(p, 3.0, np.zeros(31))) == 0.0
    assert _inf(residual_transformed(p, 3.0, np.zeros(31))) == 0.0


def test_linear_part_leaves_gradient_term():
    # u solves the problem without the gradient term, so the residual is -mu |grad u|^2
    p = constant_problem(1.0, 63, h=2.0, mu=1.5)
    u = linear_solve(laplacian(p.grid), p.h)
    r = residual_direct(p, 0.0, u, scheme="central")
    assert np.allclose(r, -1.5 * gradient_sq(p.grid, u), atol=1e-12)


@pytest.mark.parametrize("scheme", ["fitted", "central"])
def test_manufactured_solution_at_lambda_zero(scheme):
    # v solves -Lap v = mu h (1+v); u = ln(1+v)/mu then solves the gradient problem
    res = []
    for n in (63, 127):
        p = constant_problem(1.0, n, h=2.0, mu=1.0)
        A = laplacian(p.grid)
        v = linear_solve(A - 2.0 * np.eye(n), p.grid.constant(2.0))
        u = cole_hopf_inverse(v, 1.0)
        res.append(_inf(residual_direct(p, 0.0, u, scheme)))
        assert res[-1] <= 10 * p.grid.spacing ** 2
    if scheme == "central":
        assert res[0] / res[1] == pytest.approx(4.0, rel=0.1)


@pytest.mark.parametrize("scheme", ["fitted", "central"])
def test_direct_jacobian_finite_differences(scheme, rng):
    g = Grid(Interval(1.0), 31)
    p = ProblemSpec(g, g.sample(lambda x: 1 + x ** 2), g.sample(np.cos), 1.3)
    u = 0.4 * g.sample(lambda x: np.cos(np.pi * x)) + 0.1 * rng.normal(size=31)
    J = jacobian_direct(p, 2.0, u, scheme)
    eps = 1e-6
    for _ in range(10):
        d = rng.normal(size=31)
        fd = (residual_direct(p, 2.0, u + eps * d, scheme)
              - residual_direct(p, 2.0, u - eps * d, scheme)) / (2 * eps)
        assert _inf(fd - J @ d) <= 1e-5 * max(1.0, _inf(fd))


def test_transformed_jacobian_finite_differences(rng):
    g = Grid(Rectangle(1.0, 1.0), 7)
    p = ProblemSpec(g, 1.0, g.sample(lambda x, y: x - y), 2.0)
    v = rng.uniform(-0.5, 2.0, size=g.size)
    J = jacobian_transformed(p, 1.5, v)
    eps = 1e-6
    for _ in range(10):
        d = rng.normal(size=g.size)
        fd = (residual_transformed(p, 1.5, v + eps * d)
              - residual_transformed(p, 1.5, v - eps * d)) / (2 * eps)
        assert _inf(fd - J @ d) <= 1e-5 * max(1.0, _inf(fd))


def test_transformed_residual_controls_direct_residual():
    # perturb a solution: the direct residual of the mapped iterate stays
    # within a modest factor of the scaled transformed one
    p = constant_problem(1.0, 127, h=-1.0)
    u = newton_direct(p, 0.5, np.zeros(127)).solution
    v = cole_hopf_forward(u, 1.0)
    phi = gamma1(p).function
    for delta in (1e-6, 1e-4, 1e-2):
        vp = v + delta * phi
        tau = _inf(residual_transformed(p, 0.5, vp))
        ru = _inf(residual_direct(p, 0.5, cole_hopf_inverse(vp, 1.0)))
        assert ru <= 2.0 * tau * (1 + _inf(vp))


def test_transformed_needs_constant_mu():
    g = Grid(Interval(1.0), 15)
    p = ProblemSpec(g, 1.0, 0.0, g.sample(lambda x: 1 + x ** 2))
    with pytest.raises(InputError):
        residual_transformed(p, 1.0, np.zeros(15))


def test_config_validation():
    with pytest.raises(InputError):
        SolverConfig(scheme="upwind")
    with pytest.raises(InputError):
        SolverConfig(tol=0.0)


# ----------------------------------------------------------------------------
# Newton


def test_newton_trivial_solution():
    p = constant_problem(1.0, 31)
    rep = newton_direct(p, 2.0, np.zeros(31))
    assert rep.converged and rep.iterations <= 1
    assert _inf(rep.solution) == 0.0


def test_formulations_agree():
    p = constant_problem(1.0, 127, h=-1.0)
    d = newton_direct(p, 0.0, np.zeros(127))
    t = newton_transformed(p, 0.0, np.zeros(127))
    assert d.converged and t.converged
    assert _inf(d.solution - t.solution) <= 1e-8
    assert np.all(d.solution < 0)


def test_variable_mu_direct_solve():
    g = Grid(Interval(1.0), 63)
    mu = g.sample(lambda x: 1.0 + 0.5 * np.cos(np.pi * x))
    p = ProblemSpec(g, 1.0, 1.0, mu)
    rep = newton_direct(p, 1.0, np.zeros(63))
    assert rep.converged and rep.residual_inf <= 1e-10
    with pytest.raises(InputError):
        solve(p, 1.0, np.zeros(63), formulation="transformed")


def test_2d_formulations_agree():
    g = Grid(Rectangle(1.0, 1.0), 15)
    p = ProblemSpec(g, 1.0, g.sample(lambda x, y: np.sin(np.pi * x)), 1.0)
    d = solve(p, 2.0, np.zeros(g.size))
    t = solve(p, 2.0, np.zeros(g.size), formulation="transformed")
    assert d.converged and t.converged
    assert _inf(d.solution - t.solution) <= 1e-8


def test_transformed_threshold_at_lambda_zero():
    # lam = 0: the transformed problem is linear and solvable iff mu h < pi^2 / T^2
    below = constant_problem(1.0, 63, h=9.0)
    assert newton_transformed(below, 0.0, np.zeros(63)).converged
    above = constant_problem(1.0, 63, h=12.0)
    starts = multistart_family(above, 0.0, n_random=39, seed=3)
    assert len(starts) >= 50
    assert solve_multistart(above, 0.0, starts, formulation="transformed") == []


def test_unknown_formulation():
    p = constant_problem(1.0, 15)
    with pytest.raises(InputError):
        solve(p, 0.0, np.zeros(15), formulation="mixed")


# ----------------------------------------------------------------------------
# lower and upper solutions


def test_lower_solution_at_lambda_zero():
    p = constant_problem(1.0, 127, h=1.0)
    alpha = construct_lower_solution(p, 0.0)
    x = p.grid.axis_nodes() + 0.5
    assert np.allclose(alpha, -x * (1 - x) / 2, atol=1e-12)
    assert np.min(alpha) == pytest.approx(-0.125, abs=1e-4)


@pytest.mark.parametrize("lam", [0.0, 2.0, 9.0, 20.0, 40.0, 80.0, 200.0])
@pytest.mark.parametrize("h", [-2.0, 0.0, 3.0])
def test_lower_solution_verified(lam, h):
    p = constant_problem(1.0, 63, h=h)
    alpha = construct_lower_solution(p, lam)
    assert np.all(alpha <= 0)
    assert verify_lower(p, lam, alpha).holds


def test_lower_solution_needs_nonnegative_lambda():
    with pytest.raises(InputError):
        construct_lower_solution(constant_problem(1.0, 15), -1.0)


def test_p0_upper_solution():
    assert not np.any(construct_upper_solution_P0(constant_problem(1.0, 63, h=-1.0)))
    p = constant_problem(1.0, 63, h=1.0)
    beta = construct_upper_solution_P0(p)
    assert np.all(beta > 0) and verify_upper(p, 0.0, beta).holds
    assert construct_upper_solution_P0(constant_problem(1.0, 63, h=10.0)) is None


def test_negative_upper_solution():
    p = constant_problem(1.0, 127, h=0.0)
    g1 = gamma1(p)
    assert construct_negative_upper_solution(p, 0.9 * g1.value) is None
    neg = construct_negative_upper_solution(p, 1.5 * g1.value)
    zero = np.zeros(127)
    from quadgrad.grid import strictly_below
    assert strictly_below(neg.beta, zero, g1.function).holds
    assert verify_upper(p, 1.5 * g1.value, neg.beta).holds


def test_negative_upper_solution_scales_h_plus():
    p = constant_problem(1.0, 127, h=1.0)
    lam = 1.5 * gamma1(p).value
    neg = construct_negative_upper_solution(p, lam)
    assert neg is not None and 0 < neg.k <= 1
    assert np.all(neg.beta < 0)
    assert verify_upper(p.with_h(neg.k * p.h_plus - p.h_minus), lam, neg.beta).holds


def test_verify_exact_solution_both_ways():
    p = constant_problem(1.0, 63, h=-1.0)
    u = newton_direct(p, 1.0, np.zeros(63)).solution
    assert verify_lower(p, 1.0, u).holds and verify_upper(p, 1.0, u).holds


def test_verify_zero_bounds():
    assert verify_upper(constant_problem(1.0, 31, h=-1.0), 1.0, np.zeros(31)).holds
    assert verify_lower(constant_problem(1.0, 31, h=1.0), 1.0, np.zeros(31)).holds
    assert not verify_upper(constant_problem(1.0, 31, h=1.0), 1.0, np.zeros(31)).holds


# ----------------------------------------------------------------------------
# monotone iteration


def _bounds(p, lam):
    alpha = cole_hopf_forward(construct_lower_solution(p, lam), p.mu)
    beta = cole_hopf_forward(construct_upper_solution_P0(p), p.mu)
    return alpha, beta


def test_monotone_fixed_point():
    p = constant_problem(1.0, 63, h=-1.0)
    v = newton_transformed(p, 0.0, np.zeros(63)).v
    rep = monotone_iterate(p, 0.0, v, v)
    assert rep.converged and rep.iterations <= 2
    assert _inf(rep.v - v) <= 1e-12


def test_monotone_both_ends_reach_newton_solution():
    p = constant_problem(1.0, 127, h=-1.0)
    alpha, beta = _bounds(p, 0.0)
    ref = newton_direct(p, 0.0, np.zeros(127)).solution
    for start in ("lower", "upper"):
        rep = monotone_iterate(p, 0.0, alpha, beta, start)
        assert rep.converged
        assert rep.info["monotone_violation"] <= 1e-12
        assert _inf(rep.solution - ref) <= 1e-8


def test_monotone_iterates_between_bounds_with_positive_data():
    p = constant_problem(1.0, 127, h=1.0)
    alpha, beta = _bounds(p, 0.0)
    low = monotone_iterate(p, 0.0, alpha, beta, "lower")
    high = monotone_iterate(p, 0.0, alpha, beta, "upper")
    assert low.converged and high.converged
    assert np.all(low.v >= alpha - 1e-12) and np.all(high.v <= beta + 1e-12)
    assert np.all(low.v <= high.v + 1e-9)


def test_monotone_rejects_bad_bounds():
    p = constant_problem(1.0, 31, h=1.0)
    alpha, beta = _bounds(p, 0.0)
    with pytest.raises(CertificateError) as info:
        monotone_iterate(p, 0.0, beta + 1.0, beta)
    assert info.value.node is not None
    with pytest.raises(CertificateError):
        monotone_iterate(p, 0.0, alpha, np.zeros(31))  # 0 is not an upper solution
    with pytest.raises(InputError):
        monotone_iterate(p, 0.0, alpha, beta, start="middle")


# ----------------------------------------------------------------------------
# identity, certificates and multistart


def test_identity_on_converged_solution():
    p = constant_problem(1.0, 511, h=-1.0)
    u = newton_direct(p, 2.0, np.zeros(511)).solution
    assert check_identity_phi1(p, 2.0, u).rel_gap <= 1e-3


def test_identity_trivial():
    p = constant_problem(1.0, 31)
    chk = check_identity_phi1(p, 1.0, np.zeros(31))
    assert chk.lhs == 0.0 and chk.rhs == 0.0 and chk.gap == 0.0


def test_ordered_certificate():
    p = constant_problem(1.0, 31)
    phi = gamma1(p).function
    assert ordered_certificate(np.zeros(31), phi, phi).holds
    assert not ordered_certificate(phi, phi, phi).holds


def test_multistart_deflation_finds_two_solutions():
    p = constant_problem(1.0, 63, h=0.0)
    lam = 0.5 * gamma1(p).value
    found = solve_multistart(p, lam, multistart_family(p, lam), formulation="transformed")
    sups = sorted(_inf(r.solution) for r in found)
    assert len(found) == 2 and sups[0] == 0.0 and sups[1] > 0.1


def test_converged_means_small_residual():
    p = constant_problem(1.0, 127, h=-1.0)
    for lam in (0.0, 3.0, 30.0):
        rep = newton_direct(p, lam, np.zeros(127))
        assert rep.converged
        assert _inf(residual_direct(p, lam, rep.solution)) <= max(DEFAULT.tol, 1e-12)
