"""Acceptance checks AC1-AC11.

Each check builds its own fixture, runs the relevant solvers and returns a
:class:`Check` with the measured quantities.  The same functions back the
``verify_suite`` CLI scenario and ``tests/test_acceptance.py``.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional

import numpy as np
from scipy import integrate as sint

from . import timemap as tm
from .branch import (ContinuationConfig, blowup_diagnostic, continue_lambda, find_second_solution,
                     first_solution, scale_family, sweep_k)
from .eigen import coercivity_check, gamma1, nu1, principal_eigen
from .grid import Grid, Interval, Rectangle, strictly_below
from .problem import ProblemSpec, constant_problem
from .solve import (DEFAULT, check_identity_phi1, construct_lower_solution,
                    construct_upper_solution_P0, monotone_iterate, multistart_family, newton_direct,
                    solve, solve_multistart)
from .transform import cole_hopf_forward, cole_hopf_inverse, scaled_inverse, scaled_transform

PI2 = math.pi ** 2


@dataclass
class Check:
    name: str
    title: str
    passed: bool = False
    details: Dict[str, object] = field(default_factory=dict)
    seconds: float = 0.0

    def line(self) -> str:
        return f"{self.name} {'PASS' if self.passed else 'FAIL'}: {self.title}"

    def record(self) -> dict:
        """JSON-ready view without timing (artifacts stay deterministic)."""
        return {"name": self.name, "title": self.title, "passed": bool(self.passed),
                "details": _jsonable(self.details)}


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, float)):
        return float(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def _inf(x) -> float:
    return float(np.max(np.abs(x)))


# ----------------------------------------------------------------------------
# fixtures


def fold_fixture(n: int = 127) -> ProblemSpec:
    """h = pi^2/2 on (-1/2, 1/2): positive, and coercive with margin pi^2/2."""
    return constant_problem(1.0, n, 1.0, 0.5 * PI2, 1.0)


def negative_fixture(n: int = 127) -> ProblemSpec:
    return constant_problem(1.0, n, 1.0, -1.0, 1.0)


def zero_fixture(n: int = 127) -> ProblemSpec:
    return constant_problem(1.0, n, 1.0, 0.0, 1.0)


def scale_fixture(n: int = 127) -> ProblemSpec:
    """Sign-changing h~ = cos(2 pi x) on (-1/2, 1/2)."""
    grid = Grid(Interval(1.0), n)
    return ProblemSpec(grid, 1.0, grid.sample(lambda x: np.cos(2 * np.pi * x)), 1.0)


CASE1 = tm.PhaseParams(lam=1.0, mu=1.0, h=1.0)
CASE3 = tm.PhaseParams(lam=1.0, mu=1.0, h=-1.0)


def fold_branch(problem: ProblemSpec, cfg: ContinuationConfig = ContinuationConfig()):
    """Minimal branch from lambda = 0 up to its fold."""
    beta = construct_upper_solution_P0(problem)
    start = first_solution(problem, 0.0, cfg.solver, upper=beta)
    if not start.converged:
        raise RuntimeError(f"no solution of (P_0): {start.message}")
    g1 = gamma1(problem).value
    return continue_lambda(problem, 0.0, start.solution, 1.0, cfg, lambda_end=g1)


def negative_first(problem: ProblemSpec, lam: float):
    """Minimal solution below beta = 0 (valid upper solution when h <= 0)."""
    return first_solution(problem, lam, DEFAULT, upper=np.zeros(problem.grid.size))


# ----------------------------------------------------------------------------
# AC1


def ac1() -> Check:
    chk = Check("AC1", "eigenvalue closed forms")
    g = Grid(Interval(1.0), 1023)
    e1 = principal_eigen(g)
    sq = Grid(Rectangle(1.0, 1.0), 127)
    e2 = principal_eigen(sq)
    r1 = abs(e1.value - PI2) / PI2
    r2 = abs(e2.value - 2 * PI2) / (2 * PI2)
    chk.details = {"interval_value": e1.value, "interval_rel_err": r1,
                   "square_value": e2.value, "square_rel_err": r2}
    chk.passed = r1 <= 1e-3 and r2 <= 2e-2
    return chk


# ----------------------------------------------------------------------------
# AC2


def ac2(seed: int = 0) -> Check:
    chk = Check("AC2", "transform exactness")
    rng = np.random.default_rng(seed)
    grid = Grid(Interval(1.0), 255)
    worst = 0.0
    for mu in (0.5, 1.0, 2.0):
        u = rng.uniform(-5.0, 5.0, grid.size)
        worst = max(worst, _inf(cole_hopf_inverse(cole_hopf_forward(u, mu), mu) - u))
        v = rng.uniform(-0.99, 10.0, grid.size)
        worst = max(worst, _inf(cole_hopf_forward(cole_hopf_inverse(v, mu), mu) - v))
        worst = max(worst, _inf(scaled_inverse(scaled_transform(u, mu), mu) - u))
    g_err = 0.0
    for params in (CASE1, CASE3, tm.PhaseParams(lam=3.0, mu=1.0, h=1.0)):
        vs = rng.uniform(-0.99, 10.0, 100)
        closed = tm.G_eval(params, vs)
        for v, G in zip(vs, closed):
            q, _ = sint.quad(lambda t: float(tm.g_eval(params, t)), 0.0, float(v),
                             epsabs=1e-13, epsrel=1e-12, limit=200)
            g_err = max(g_err, abs(q - G))
    chk.details = {"round_trip_sup_err": worst, "G_vs_quadrature_max_abs_err": g_err}
    chk.passed = worst <= 1e-12 and g_err <= 1e-10
    return chk


# ----------------------------------------------------------------------------
# AC3


def p0_solvable(h: float, n: int = 127) -> tuple:
    """Solver verdict for -u'' = |u'|^2 + h on (-1/2, 1/2): (success, how)."""
    problem = constant_problem(1.0, n, 1.0, h, 1.0)
    beta = construct_upper_solution_P0(problem)
    if beta is not None:
        alpha = construct_lower_solution(problem, 0.0)
        rep = monotone_iterate(problem, 0.0, cole_hopf_forward(alpha, 1.0),
                               cole_hopf_forward(beta, 1.0), "lower")
        if rep.converged:
            return True, "monotone"
    found = solve_multistart(problem, 0.0, multistart_family(problem, 0.0), DEFAULT, "direct")
    return bool(found), "multistart"


def ac3(n: int = 127, rounds: int = 12) -> Check:
    chk = Check("AC3", "lambda = 0 existence threshold")
    lo, hi = 0.0, 2.0 * PI2
    how_lo = None
    ok_lo, how_lo = p0_solvable(lo, n)
    ok_hi, _ = p0_solvable(hi, n)
    if not ok_lo or ok_hi:
        chk.details = {"error": "bracket endpoints do not straddle the threshold"}
        return chk
    for _ in range(rounds):
        mid = 0.5 * (lo + hi)
        ok, how = p0_solvable(mid, n)
        if ok:
            lo, how_lo = mid, how
        else:
            hi = mid
    est = 0.5 * (lo + hi)
    rel = abs(est - PI2) / PI2
    chk.details = {"threshold_estimate": est, "bracket": [lo, hi], "rel_err_vs_pi2": rel,
                   "success_side_method": how_lo}
    chk.passed = rel <= 0.02 and how_lo == "monotone"
    return chk


# ----------------------------------------------------------------------------
# AC4


def ac4(n: int = 127) -> Check:
    chk = Check("AC4", "two ordered solutions for h = -1")
    problem = negative_fixture(n)
    phi1 = gamma1(problem).function
    u0 = negative_first(problem, 0.0)
    u1 = negative_first(problem, 0.5)
    second = find_second_solution(problem, 0.5, u1.solution)
    d = {"u0_converged": u0.converged, "u1_converged": u1.converged,
         "u2_converged": second.converged}
    if not (u0.converged and u1.converged and second.converged):
        chk.details = d
        return chk
    u2 = second.solution
    cert = second.info["certificate"]
    below = strictly_below(u1.solution, u0.solution, phi1)
    chain = [negative_first(problem, lam) for lam in (0.25, 0.5, 1.0)]
    steps = [strictly_below(b.solution, a.solution, phi1) for a, b in zip(chain, chain[1:])]
    d.update({
        "u0_max": float(np.max(u0.solution)),
        "u1_min": float(np.min(u1.solution)),
        "u2_max": float(np.max(u2)),
        "u1_below_u0_epsilon": below.epsilon,
        "certificate_epsilon": cert.epsilon,
        "certificate_holds": cert.holds,
        "residuals": [u0.residual_inf, u1.residual_inf, second.residual_inf],
        "monotone_epsilons": [s.epsilon for s in steps],
    })
    chk.details = d
    chk.passed = (below.holds and np.max(u0.solution) <= 0 and np.max(u2) > 0 and cert.holds
                  and _allclose_lower(cert.lower, u1.solution)
                  and max(u0.residual_inf, u1.residual_inf, second.residual_inf) <= 1e-9
                  and all(c.converged for c in chain) and all(s.holds for s in steps))
    return chk


def _allclose_lower(a, b) -> bool:
    return _inf(a - b) == 0.0


# ----------------------------------------------------------------------------
# AC5


def nonnegative_solutions(problem: ProblemSpec, lam: float, n_random: int = 0, seed: int = 0) -> list:
    starts = multistart_family(problem, lam, n_random=n_random, seed=seed)
    found = []
    for form in ("direct", "transformed"):
        for rep in solve_multistart(problem, lam, starts, DEFAULT, form):
            if np.min(rep.solution) >= -1e-12 * (1 + _inf(rep.solution)):
                found.append(rep)
    return found


def ac5(n_coarse: int = 63) -> Check:
    chk = Check("AC5", "fold below gamma_1 for h >= 0")
    coarse = fold_fixture(n_coarse)
    fine = fold_fixture(2 * n_coarse + 1)
    coercive = coercivity_check(fine)
    b1, b2 = fold_branch(coarse), fold_branch(fine)
    g1 = gamma1(fine).value
    d = {"coercivity_margin": coercive.margin, "gamma1": g1,
         "terminated_by": [b1.terminated_by, b2.terminated_by]}
    if b1.fold is None or b2.fold is None:
        chk.details = d
        return chk
    l1, l2 = b1.fold.param_estimate, b2.fold.param_estimate
    rel = abs(l1 - l2) / abs(l2)
    beyond = nonnegative_solutions(fine, 1.05 * l2)
    d.update({"fold_coarse": l1, "fold_fine": l2, "mesh_rel_change": rel,
              "nonnegative_found_at_1.05_fold": len(beyond)})
    chk.details = d
    chk.passed = (coercive.coercive and 0 < l2 < g1 and rel <= 0.01 and not beyond)
    return chk


# ----------------------------------------------------------------------------
# AC6


def ac6(n: int = 127, seed: int = 0, n_starts: int = 50) -> Check:
    chk = Check("AC6", "no solution at lambda = gamma_1 for h >= 0")
    problem = fold_fixture(n)
    pair = gamma1(problem)
    g1 = pair.value
    # identity gap of converged solutions of the same data: the discretization budget
    beta = construct_upper_solution_P0(problem)
    budget = 0.0
    for lam in (0.0, 1.0):
        rep = first_solution(problem, lam, DEFAULT, upper=beta if lam == 0 else None)
        if not rep.converged:
            chk.details = {"error": f"reference solve failed at lambda={lam}"}
            return chk
        budget = max(budget, abs(check_identity_phi1(problem, lam, rep.solution, pair).gap))
    base = multistart_family(problem, g1)
    starts = multistart_family(problem, g1, n_random=max(0, n_starts - len(base)), seed=seed)
    converged = 0
    gaps = []
    for u0 in starts:
        rep = newton_direct(problem, g1, u0, DEFAULT)
        if rep.converged:
            converged += 1
            best = rep.solution
        else:
            best = rep.info.get("best", rep.solution)
        if np.all(np.isfinite(best)):
            gaps.append(abs(check_identity_phi1(problem, g1, best, pair).gap))
    min_gap = min(gaps) if gaps else math.inf
    chk.details = {"starts": len(starts), "converged": converged, "budget": budget,
                   "min_identity_gap": min_gap, "ratio": min_gap / budget if budget else math.inf}
    chk.passed = len(starts) >= 50 and converged == 0 and min_gap >= 10.0 * budget
    return chk


# ----------------------------------------------------------------------------
# AC7


def ac7(n: int = 127, n_random: int = 20, seed: int = 0) -> Check:
    chk = Check("AC7", "h = 0 trichotomy")
    problem = zero_fixture(n)
    pair = gamma1(problem)
    g1, phi1 = pair.value, pair.function
    zero = np.zeros(problem.grid.size)
    d = {"gamma1": g1}

    below = find_second_solution(problem, 0.5 * g1, zero)
    ok_below = below.converged
    if ok_below:
        u = below.solution
        pos = strictly_below(zero, u, phi1)
        d.update({"below_min": float(np.min(u)), "below_max": float(np.max(u)),
                  "below_epsilon": pos.epsilon})
        ok_below = np.min(u) >= -1e-12 and np.max(u) > 0 and pos.holds

    # the Jacobian is singular at u = 0 here, so direct Newton crawls; it gets
    # the base family only and the random starts go through the transformed path
    found = solve_multistart(problem, g1, multistart_family(problem, g1), DEFAULT, "direct")
    found += solve_multistart(problem, g1, multistart_family(problem, g1, n_random=n_random,
                                                             seed=seed), DEFAULT, "transformed")
    nontrivial = [r for r in found if _inf(r.solution) > DEFAULT.min_distance]
    at = find_second_solution(problem, g1, zero, n_random=n_random, seed=seed)
    d.update({"at_gamma1_converged": len(found), "at_gamma1_nontrivial": len(nontrivial),
              "at_gamma1_second_found": at.converged})
    ok_at = not nontrivial and not at.converged

    above = find_second_solution(problem, 1.5 * g1, zero)
    ok_above = above.converged
    if ok_above:
        neg = strictly_below(above.solution, zero, phi1)
        d.update({"above_max": float(np.max(above.solution)), "above_epsilon": neg.epsilon})
        ok_above = neg.holds
    chk.details = d
    chk.passed = bool(ok_below and ok_at and ok_above)
    return chk


# ----------------------------------------------------------------------------
# AC8


def ac8(n: int = 127) -> Check:
    chk = Check("AC8", "blow-up rate of the large solution")
    rows = blowup_diagnostic(negative_fixture(n), [0.2, 0.1, 0.05, 0.025])
    prods = np.array([r.product for r in rows])
    M = np.array([-r.min_val for r in rows])
    band = float(prods.max() / prods.min()) if prods.min() > 0 else math.inf
    variation = float((M.max() - M.min()) / M.max())
    chk.details = {"lambdas": [r.lam for r in rows], "products": prods.tolist(),
                   "sup_norms": [r.sup_norm_u2 for r in rows], "M_emp": M.tolist(),
                   "band_ratio": band, "M_variation": variation,
                   "residuals": [r.residual for r in rows]}
    chk.passed = (len(rows) == 4 and band <= 4.0 and np.all(prods >= 0.1 * prods.max())
                  and prods.min() > 0 and variation <= 0.10
                  and max(r.residual for r in rows) <= 1e-9)
    return chk


# ----------------------------------------------------------------------------
# AC9


def ac9(n: int = 127) -> Check:
    chk = Check("AC9", "threshold k_bar in the scale of h^+")
    problem = scale_fixture(n)
    lam = 1.5 * nu1(problem).value
    sweep = sweep_k(problem, lam)
    d = {"lambda": lam, "k_start": sweep.k_start, "terminated_by": sweep.lower_branch.terminated_by}
    if sweep.k_bar is None:
        chk.details = d
        return chk
    kb = sweep.k_bar
    fold = sweep.lower_branch.fold
    folds = sum(1 for p in sweep.lower_branch.points if p.fold_flag)
    fam = scale_family(problem, lam)

    half = fam.problem_at(0.5 * kb)
    pts = sweep.lower_branch.points
    near = min(pts, key=lambda p: abs(p.param - 0.5 * kb))
    u1 = newton_direct(half, lam, near.solution, DEFAULT)
    two = False
    if u1.converged:
        u2 = find_second_solution(half, lam, u1.solution)
        two = u2.converged and u2.info["certificate"].holds
        if u2.converged:
            d["half_certificate_epsilon"] = u2.info["certificate"].epsilon
    double = fam.problem_at(2.0 * kb)
    starts = multistart_family(double, lam)
    count = sum(len(solve_multistart(double, lam, starts, DEFAULT, form))
                for form in ("direct", "transformed"))
    d.update({"k_bar": kb, "bracket_width": fold.width, "fold_points": folds,
              "two_ordered_at_half": two, "solutions_at_double": count})
    chk.details = d
    chk.passed = fold.width <= 0.01 and folds == 1 and two and count == 0
    return chk


# ----------------------------------------------------------------------------
# AC10


def _counts(results) -> Dict[str, int]:
    out = {"positive": 0, "negative": 0, "sign_changing": 0, "trivial": 0}
    for r in results:
        out[r.classification] += 1
    return out


CASE3_FACTORS = (0.25, 0.5, 0.9, 1.1, 1.25)


def ac10(n_samples: int = 2001) -> Check:
    chk = Check("AC10", "time-map solution counts")
    d: Dict[str, object] = {}
    table = tm.time_map_table(CASE1)
    T0 = tm.find_T0(CASE1, table=table)
    c_half = _counts(tm.count_solutions(CASE1.with_T(0.5 * T0), -1e8, 1e8, n_samples))
    c_over = _counts(tm.count_solutions(CASE1.with_T(1.5 * T0), -1e8, 1e8, n_samples))
    d.update({"T0": T0, "case1_half": c_half, "case1_over": c_over})
    ok1 = (sum(c_half.values()) == 2 and c_half["positive"] == 2 and sum(c_over.values()) == 0)

    T1 = tm.find_T1(CASE3)
    ok3 = True
    rows = {}
    for f in CASE3_FACTORS:
        c = _counts(tm.count_solutions(CASE3.with_T(f * T1), -1e3, 1e3, n_samples))
        rows[str(f)] = c
        ok3 &= c["negative"] == 1
        ok3 &= c["positive"] >= 1 if f < 1 else c["sign_changing"] >= 1
    d.update({"T1": T1, "case3": rows})

    worst = 0.0
    for params in (CASE1, CASE3):
        for a in np.logspace(-2, 3, 11):
            tq = tm.time_map_positive(params, float(a))
            ts = tm.transit_time(params, float(a))
            worst = max(worst, abs(tq - ts) / tq)
    d["quadrature_vs_shooting_rel"] = worst
    chk.details = d
    chk.passed = bool(ok1 and ok3 and worst <= 1e-6)
    return chk


# ----------------------------------------------------------------------------
# AC11


def _agree(problem, lam, u) -> tuple:
    """Both formulations from the same perturbed start near the solution u."""
    phi1 = gamma1(problem).function
    start = u + 0.05 * (1.0 + _inf(u)) * phi1
    a = solve(problem, lam, start, DEFAULT, "direct")
    b = solve(problem, lam, start, DEFAULT, "transformed")
    if not (a.converged and b.converged):
        return False, math.inf, a
    return True, _inf(a.solution - b.solution), a


def _bracket(problem, lam, alpha, beta, u) -> Dict[str, object]:
    mu = problem.mu
    lo = monotone_iterate(problem, lam, cole_hopf_forward(alpha, mu), cole_hopf_forward(beta, mu),
                          "lower")
    hi = monotone_iterate(problem, lam, cole_hopf_forward(alpha, mu), cole_hopf_forward(beta, mu),
                          "upper")
    tol = 1e-9
    ok = (lo.converged and hi.converged
          and np.all(alpha <= lo.solution + tol) and np.all(lo.solution <= u + tol)
          and np.all(u <= hi.solution + tol) and np.all(hi.solution <= beta + tol))
    return {"ok": bool(ok), "min_gap": float(np.max(lo.solution - u)),
            "max_gap": float(np.max(u - hi.solution))}


def ac11(n: int = 127) -> Check:
    chk = Check("AC11", "cross-formulation oracle")
    cases = {}
    ok = True

    neg = negative_fixture(n)
    u1 = negative_first(neg, 0.5)
    u2 = find_second_solution(neg, 0.5, u1.solution)
    for tag, u in (("h=-1,lam=0.5,u1", u1.solution), ("h=-1,lam=0.5,u2", u2.solution)):
        conv, diff, _ = _agree(neg, 0.5, u)
        cases[tag] = {"agree": diff}
        ok &= conv and diff <= 1e-8
    alpha = construct_lower_solution(neg, 0.5)
    br = _bracket(neg, 0.5, alpha, np.zeros(neg.grid.size), u1.solution)
    cases["h=-1,lam=0.5,u1"]["bracket"] = br
    ok &= br["ok"]

    pos = fold_fixture(n)
    beta0 = construct_upper_solution_P0(pos)
    r0 = first_solution(pos, 0.0, DEFAULT, upper=beta0)
    conv, diff, a0 = _agree(pos, 0.0, r0.solution)
    br = _bracket(pos, 0.0, construct_lower_solution(pos, 0.0), beta0, a0.solution)
    cases["h=pi^2/2,lam=0"] = {"agree": diff, "bracket": br}
    ok &= conv and diff <= 1e-8 and br["ok"]
    r1 = first_solution(pos, 1.0)
    upper = first_solution(pos, 1.5)
    conv, diff, a1 = _agree(pos, 1.0, r1.solution)
    br = _bracket(pos, 1.0, construct_lower_solution(pos, 1.0), upper.solution, a1.solution)
    cases["h=pi^2/2,lam=1"] = {"agree": diff, "bracket": br}
    ok &= conv and diff <= 1e-8 and br["ok"] and upper.converged

    zero = zero_fixture(n)
    g1 = gamma1(zero).value
    for f in (0.5, 1.5):
        sec = find_second_solution(zero, f * g1, np.zeros(zero.grid.size))
        conv, diff, _ = _agree(zero, f * g1, sec.solution) if sec.converged else (False, math.inf, None)
        cases[f"h=0,lam={f}g1,u2"] = {"agree": diff}
        ok &= conv and diff <= 1e-8

    chk.details = cases
    chk.passed = bool(ok)
    return chk


# ----------------------------------------------------------------------------

CHECKS: Dict[str, Callable[[], Check]] = {
    "AC1": ac1, "AC2": ac2, "AC3": ac3, "AC4": ac4, "AC5": ac5, "AC6": ac6,
    "AC7": ac7, "AC8": ac8, "AC9": ac9, "AC10": ac10, "AC11": ac11,
}


def run_check(name: str) -> Check:
    t0 = time.perf_counter()
    try:
        chk = CHECKS[name]()
    except Exception as exc:  # a crash is a failed criterion, reported as such
        chk = Check(name, "raised", False, {"error": f"{type(exc).__name__}: {exc}"})
    chk.seconds = time.perf_counter() - t0
    return chk


def run_all(names: Optional[List[str]] = None) -> List[Check]:
    return [run_check(n) for n in (names or list(CHECKS))]
