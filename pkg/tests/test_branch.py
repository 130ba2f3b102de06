import math

import numpy as np
import pytest

from quadgrad.branch import (Branch, blowup_diagnostic, continue_lambda, find_second_solution,
                             first_solution, scale_family, shift_family, sweep_k,
                             sweep_nonexistence_a)
from quadgrad.eigen import gamma1, nu1
from quadgrad.errors import InputError
from quadgrad.grid import Grid, Interval, strictly_below
from quadgrad.problem import ProblemSpec, constant_problem
from quadgrad.solve import construct_upper_solution_P0, residual_direct

PI2 = math.pi ** 2


def _inf(x):
    return float(np.max(np.abs(x)))


def fold_problem(n=63):
    return constant_problem(1.0, n, h=PI2 / 2)


@pytest.fixture(scope="module")
def fold_run():
    p = fold_problem()
    g1 = gamma1(p).value
    start = first_solution(p, 0.0, upper=construct_upper_solution_P0(p))
    br = continue_lambda(p, 0.0, start.solution, lambda_end=g1)
    return p, g1, br


# ----------------------------------------------------------------------------
# continuation in lambda


def test_zero_data_stays_on_trivial_branch():
    p = constant_problem(1.0, 63, h=0.0)
    g1 = gamma1(p).value
    br = continue_lambda(p, 0.0, np.zeros(63), lambda_end=2 * g1)
    assert br.terminated_by == "param_limit" and br.fold is None
    assert all(pt.sup_norm == 0.0 for pt in br.points)
    assert br.points[-1].param == pytest.approx(2 * g1)


def test_positive_data_folds_below_gamma1(fold_run):
    p, g1, br = fold_run
    assert br.terminated_by == "fold"
    assert 0 < br.fold.param_estimate < g1
    flagged = [pt for pt in br.points if pt.fold_flag]
    assert len(flagged) == 1
    assert flagged[0].param == pytest.approx(max(br.params))
    # every computed nonnegative point sits strictly left of gamma_1
    assert all(pt.param < g1 for pt in br.points if pt.min_val >= 0)


def test_branch_points_are_solutions(fold_run):
    p, _, br = fold_run
    for pt in br.points[:: max(1, len(br.points) // 10)]:
        assert _inf(residual_direct(p, pt.param, pt.solution)) <= 1e-9


def test_minimal_branch_increasing_before_fold(fold_run):
    p, _, br = fold_run
    phi = gamma1(p).function
    lower = [pt for pt in br.points if not pt.fold_flag]
    params = np.array([pt.param for pt in lower])
    # follow the part before the turning point, where lambda increases
    stop = int(np.argmax(params))
    picks = lower[: stop + 1][:: max(1, stop // 6)]
    for a, b in zip(picks, picks[1:]):
        if b.param > a.param:
            assert strictly_below(a.solution, b.solution, phi).holds


def test_two_ordered_solutions_left_of_fold(fold_run):
    p, _, br = fold_run
    lam = 0.5 * br.fold.param_estimate
    first = first_solution(p, lam, upper=None)
    second = find_second_solution(p, lam, first.solution)
    assert second.converged
    assert second.info["certificate"].holds
    assert np.mean(second.solution) > np.mean(first.solution)


def test_negative_data_branch_goes_down():
    p = constant_problem(1.0, 63, h=-1.0)
    g1 = gamma1(p).value
    start = first_solution(p, 0.0, upper=np.zeros(63))
    br = continue_lambda(p, 0.0, start.solution, lambda_end=4 * g1)
    assert br.terminated_by == "param_limit" and br.fold is None
    mins = [pt.min_val for pt in br.points]
    assert all(b < a for a, b in zip(mins, mins[1:]))
    assert all(pt.max_val <= 0 for pt in br.points)


def test_continuation_rejects_bad_config():
    p = constant_problem(1.0, 15)
    with pytest.raises(InputError):
        continue_lambda(p, 1.0, np.zeros(15), lambda_end=1.0)


def test_branch_outputs(tmp_path, fold_run):
    _, _, br = fold_run
    br.write_csv(tmp_path / "b.csv")
    rows = (tmp_path / "b.csv").read_text().splitlines()
    assert rows[0] == "param,sup_norm,min,max,step,fold_flag"
    assert len(rows) == len(br.points) + 1
    assert sum(r.endswith(",1") for r in rows[1:]) == 1
    empty = Branch("lambda", terminated_by="solver_failure")
    empty.write_csv(tmp_path / "e.csv")
    assert (tmp_path / "e.csv").read_text() == "param,sup_norm,min,max,step,fold_flag\n"
    assert empty.summary()["fold_estimate"] is None


# ----------------------------------------------------------------------------
# second solutions


@pytest.mark.parametrize("factor,sign", [(0.5, 1), (1.5, -1)])
def test_second_solution_for_zero_data(factor, sign):
    p = constant_problem(1.0, 63, h=0.0)
    lam = factor * gamma1(p).value
    rep = find_second_solution(p, lam, np.zeros(63))
    assert rep.converged
    phi = gamma1(p).function
    u = rep.solution
    if sign > 0:
        assert strictly_below(np.zeros(63), u, phi).holds
    else:
        assert strictly_below(u, np.zeros(63), phi).holds


def test_second_solution_negative_data():
    p = constant_problem(1.0, 63, h=-1.0)
    first = first_solution(p, 0.5, upper=np.zeros(63))
    second = find_second_solution(p, 0.5, first.solution)
    assert second.converged and np.max(second.solution) > 0


# ----------------------------------------------------------------------------
# parameter sweeps


def test_shift_sweep_zero_point_is_plain_solution():
    p = constant_problem(1.0, 63, h=-1.0)
    res = sweep_nonexistence_a(p, 1.0)
    plain = first_solution(p, 1.0)
    assert np.allclose(res.branch.points[0].solution, plain.solution, atol=1e-10)
    assert res.A1_estimate is not None and res.A1_estimate > 0


@pytest.mark.slow
def test_shift_sweep_tracks_h_minus():
    a1 = []
    for hm in (1.0, 2.0, 4.0):
        a1.append(sweep_nonexistence_a(constant_problem(1.0, 63, h=-hm), 1.0).A1_estimate)
    assert all(a is not None for a in a1)
    assert a1[0] < a1[1] < a1[2]
    # the shift a c cancels h^- exactly, so consecutive gaps equal the h changes
    assert a1[1] - a1[0] == pytest.approx(1.0, rel=1e-3)
    assert a1[2] - a1[1] == pytest.approx(2.0, rel=1e-3)


def test_shift_sweep_needs_nonnegative_lambda():
    with pytest.raises(InputError):
        sweep_nonexistence_a(constant_problem(1.0, 15, h=-1.0), -1.0)


def test_scale_sweep_guards():
    g = Grid(Interval(1.0), 63)
    ht = g.sample(lambda x: np.cos(2 * np.pi * x))
    p = ProblemSpec(g, 1.0, ht, 1.0)
    nu = nu1(p).value
    with pytest.raises(InputError):
        sweep_k(p, 0.9 * nu)
    with pytest.raises(InputError):
        sweep_k(constant_problem(1.0, 63, h=-1.0), 100.0)


@pytest.mark.slow
def test_scale_sweep_single_fold():
    g = Grid(Interval(1.0), 63)
    p = ProblemSpec(g, 1.0, g.sample(lambda x: np.cos(2 * np.pi * x)), 1.0)
    res = sweep_k(p, 1.5 * nu1(p).value)
    assert res.k_bar is not None and res.k_bar > res.k_start
    assert res.lower_branch.terminated_by == "fold"
    assert sum(pt.fold_flag for pt in res.lower_branch.points) == 1


def test_family_derivatives_match_finite_differences():
    p = constant_problem(1.0, 31, h=0.5)
    u = 0.3 * gamma1(p).function
    for fam in (shift_family(p, 2.0), scale_family(p, 2.0)):
        d = 1e-6
        fd = (fam.residual(u, 1.0 + d) - fam.residual(u, 1.0 - d)) / (2 * d)
        assert np.allclose(fd, fam.dF_dp(u), atol=1e-6)


# ----------------------------------------------------------------------------
# blow-up


def test_blowup_diagnostic_grows():
    p = constant_problem(1.0, 63, h=1.0)
    rows = blowup_diagnostic(p, [2.0, 1.0, 0.5, 0.25])
    sups = [r.sup_norm_u2 for r in rows]
    assert all(b > a for a, b in zip(sups, sups[1:]))
    mins = [r.min_val for r in rows]
    assert max(mins) - min(mins) < 1.0


def test_blowup_needs_decreasing_lambdas():
    p = constant_problem(1.0, 15, h=1.0)
    with pytest.raises(InputError):
        blowup_diagnostic(p, [1.0, 2.0])
    with pytest.raises(InputError):
        blowup_diagnostic(p, [1.0, 0.0])
