"""Continuation of solution branches, fold detection and second solutions.

A branch is followed in one scalar parameter p of a :class:`Family`:
``lambda`` itself, the shift ``a`` in h + a c, or the scale ``k`` in
h = k h~^+ - h~^-.  Natural-parameter steps (tangent predictor, Newton
corrector) are used while they work; when the step collapses the run
switches to pseudo-arclength, where a fold shows up as a sign change of
the parameter component of the tangent.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace
from typing import Callable, List, NamedTuple, Optional, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .eigen import gamma1, nu1
from .errors import CertificateError, InputError, SingularOperatorError
from .grid import format_float
from .problem import ProblemSpec
from .solve import (DEFAULT, SolveReport, SolverConfig, _factorize, construct_lower_solution,
                    construct_negative_upper_solution, jacobian_direct, monotone_iterate,
                    multistart_family, newton_direct, ordered_certificate, residual_direct,
                    rounding_floor, solve, solve_multistart)
from .transform import cole_hopf_forward

TERMINATIONS = ("fold", "param_limit", "blowup_guard", "solver_failure")


@dataclass(frozen=True, eq=False)
class BranchPoint:
    param: float
    solution: np.ndarray
    sup_norm: float
    min_val: float
    max_val: float
    step_used: float
    residual: float = 0.0
    fold_flag: bool = False

    @classmethod
    def make(cls, param, u, step, residual, fold_flag=False) -> "BranchPoint":
        u = np.asarray(u, dtype=float)
        return cls(float(param), u, float(np.max(np.abs(u))), float(np.min(u)),
                   float(np.max(u)), float(step), float(residual), fold_flag)


class Fold(NamedTuple):
    param_estimate: float
    bracket: tuple  # (param of the nearest computed point, param_estimate)

    @property
    def width(self) -> float:
        return abs(self.bracket[1] - self.bracket[0]) / max(abs(self.param_estimate), 1e-300)


@dataclass(eq=False)
class Branch:
    family: str
    points: List[BranchPoint] = field(default_factory=list)
    fold: Optional[Fold] = None
    terminated_by: str = "param_limit"
    message: str = ""

    @property
    def params(self) -> np.ndarray:
        return np.array([p.param for p in self.points])

    def summary(self) -> dict:
        return {
            "family": self.family,
            "fold_estimate": None if self.fold is None else self.fold.param_estimate,
            "fold_bracket": None if self.fold is None else list(self.fold.bracket),
            "terminated_by": self.terminated_by,
            "points": len(self.points),
        }

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["param", "sup_norm", "min", "max", "step", "fold_flag"])
            for p in self.points:
                w.writerow([format_float(p.param), format_float(p.sup_norm), format_float(p.min_val),
                            format_float(p.max_val), format_float(p.step_used), int(p.fold_flag)])

    def write_summary(self, path) -> None:
        with open(path, "w", newline="\n") as fh:
            json.dump(self.summary(), fh, indent=2, sort_keys=True)
            fh.write("\n")


# ----------------------------------------------------------------------------
# parameter families


@dataclass(frozen=True)
class Family:
    """p -> (problem, lambda) together with dF/dp for the direct residual."""

    name: str
    problem_at: Callable[[float], ProblemSpec]
    lam_at: Callable[[float], float]
    dF_dp: Callable[[np.ndarray], np.ndarray]

    def residual(self, u, p, scheme="fitted"):
        return residual_direct(self.problem_at(p), self.lam_at(p), u, scheme)

    def jacobian(self, u, p, scheme="fitted"):
        return jacobian_direct(self.problem_at(p), self.lam_at(p), u, scheme)


def lambda_family(problem: ProblemSpec) -> Family:
    c = problem.c
    return Family("lambda", lambda p: problem, lambda p: p, lambda u: -c * u)


def shift_family(problem: ProblemSpec, lam: float) -> Family:
    """h + a c, parameter a."""
    c, h = problem.c, problem.h
    return Family("a", lambda a: problem.with_h(h + a * c), lambda a: lam, lambda u: -c)


def scale_family(problem: ProblemSpec, lam: float, h_tilde=None) -> Family:
    """k h~^+ - h~^-, parameter k (h~ defaults to problem.h)."""
    ht = problem.h if h_tilde is None else np.asarray(h_tilde, dtype=float)
    hp, hm = np.maximum(ht, 0.0), np.maximum(-ht, 0.0)
    return Family("k", lambda k: problem.with_h(k * hp - hm), lambda k: lam, lambda u: -hp)


# ----------------------------------------------------------------------------
# continuation


@dataclass(frozen=True)
class ContinuationConfig:
    solver: SolverConfig = SolverConfig(max_iters=25)
    initial_step: Optional[float] = None   # default 1e-2 * max(span, 1)
    max_step: Optional[float] = None       # default 0.05 * max(span, 1)
    min_step: float = 1e-8
    arclength_switch: float = 1e-6         # times span
    blowup_guard: float = 1e6
    fold_tol: float = 1e-3
    stop_at_fold: bool = True
    max_points: int = 5000
    corrector_iters: int = 15


def _wnorm(tu, tp) -> float:
    return math.sqrt(float(np.mean(tu * tu)) + tp * tp)


def _newton_plain(fam: Family, u0, p, cfg: SolverConfig):
    """Newton at fixed p; returns (report, floor-aware converged flag)."""
    rep = newton_direct(fam.problem_at(p), fam.lam_at(p), u0, cfg)
    return rep


class _Arclength:
    """Pseudo-arclength machinery for one family."""

    def __init__(self, fam: Family, scheme: str, tol: float, iters: int):
        self.fam, self.scheme, self.tol, self.iters = fam, scheme, tol, iters

    def bordered(self, u, p, tu, tp):
        J = self.fam.jacobian(u, p, self.scheme)
        Fp = self.fam.dF_dp(u)
        Fp = np.broadcast_to(Fp, u.shape)
        N = u.size
        return sp.bmat([[J, sp.csr_matrix(Fp[:, None])],
                        [sp.csr_matrix(tu[None, :] / N), sp.csr_matrix([[tp]])]], format="csc")

    def tangent(self, u, p, tu_old, tp_old):
        M = self.bordered(u, p, tu_old, tp_old)
        rhs = np.zeros(u.size + 1)
        rhs[-1] = 1.0
        z = _factorize(M).solve(rhs)
        tu, tp = z[:-1], float(z[-1])
        nrm = _wnorm(tu, tp)
        tu, tp = tu / nrm, tp / nrm
        if float(np.mean(tu * tu_old)) + tp * tp_old < 0:
            tu, tp = -tu, -tp
        return tu, tp

    def correct(self, u, p, tu, tp, ds):
        """Predictor-corrector step of length ds; returns (u, p, iters) or None."""
        up, pp = u + ds * tu, p + ds * tp
        x_u, x_p = up.copy(), pp
        grid = self.fam.problem_at(p).grid
        for it in range(1, self.iters + 1):
            F = self.fam.residual(x_u, x_p, self.scheme)
            if not np.all(np.isfinite(F)):
                return None
            g = float(np.mean(tu * (x_u - up))) + tp * (x_p - pp)
            try:
                z = _factorize(self.bordered(x_u, x_p, tu, tp)).solve(np.append(-F, -g))
            except SingularOperatorError:
                return None
            x_u, x_p = x_u + z[:-1], x_p + float(z[-1])
            F = self.fam.residual(x_u, x_p, self.scheme)
            r = float(np.max(np.abs(F))) if np.all(np.isfinite(F)) else math.inf
            if r <= max(self.tol, rounding_floor(grid, x_u)):
                return x_u, x_p, it, r
        return None


def continue_param(fam: Family, p_start: float, u_start, p_end: float,
                   cfg: ContinuationConfig = ContinuationConfig()) -> Branch:
    """Follow the branch through (p_start, u_start) towards p_end.

    Natural-parameter stepping with tangent prediction; failed steps are
    halved, and below ``arclength_switch * span`` the run continues in
    pseudo-arclength.  Terminates on a fold (when ``stop_at_fold``), on
    reaching ``p_end``, when the sup norm exceeds ``blowup_guard``, or when
    the step falls below ``min_step``.
    """
    scfg = cfg.solver
    scheme = scfg.scheme
    span = abs(p_end - p_start)
    if span == 0:
        raise InputError("empty parameter range")
    direction = 1.0 if p_end > p_start else -1.0
    scale = max(span, 1.0)
    step = cfg.initial_step or 1e-2 * scale
    step_max = cfg.max_step or 0.05 * scale
    branch = Branch(fam.name)

    rep = _newton_plain(fam, u_start, p_start, scfg)
    if not rep.converged:
        branch.terminated_by = "solver_failure"
        branch.message = f"start point did not converge ({rep.message})"
        return branch
    u, p = rep.solution, float(p_start)
    branch.points.append(BranchPoint.make(p, u, 0.0, rep.residual_inf))

    def dudp(u, p):
        J = fam.jacobian(u, p, scheme)
        return _factorize(J).solve(-np.broadcast_to(fam.dF_dp(u), u.shape))

    def beyond(q):
        return (q - p_end) * direction >= 0

    try:
        t = dudp(u, p)
    except SingularOperatorError:
        t = np.zeros_like(u)

    # natural-parameter phase
    switch = False
    while True:
        if len(branch.points) >= cfg.max_points:
            branch.message = "max_points reached"
            return branch
        dp = direction * step
        last = beyond(p + dp)
        q = p_end if last else p + dp
        pred = u + (q - p) * t
        ok = False
        try:
            rep = _newton_plain(fam, pred, q, scfg)
            if rep.converged:
                jump = float(np.max(np.abs(rep.solution - pred)))
                move = float(np.max(np.abs(pred - u)))
                ok = jump <= max(0.5 * move, 1e-6 * (1.0 + float(np.max(np.abs(u)))))
        except SingularOperatorError:
            ok = False
        if ok:
            u, p = rep.solution, q
            branch.points.append(BranchPoint.make(p, u, abs(q - branch.points[-1].param),
                                                  rep.residual_inf))
            if branch.points[-1].sup_norm > cfg.blowup_guard:
                branch.terminated_by = "blowup_guard"
                return branch
            if last:
                branch.terminated_by = "param_limit"
                return branch
            try:
                t = dudp(u, p)
            except SingularOperatorError:
                switch = True
                break
            if rep.iterations <= 4:
                step = min(1.5 * step, step_max)
        else:
            step *= 0.5
            if step < cfg.arclength_switch * scale:
                switch = True
                break
    if not switch:
        return branch

    # pseudo-arclength phase
    arc = _Arclength(fam, scheme, scfg.tol, cfg.corrector_iters)
    tu, tp = t * direction, direction
    nrm = _wnorm(tu, tp)
    tu, tp = tu / nrm, tp / nrm
    try:
        tu, tp = arc.tangent(u, p, tu, tp)
    except SingularOperatorError:
        pass
    ds = max(1e-4 * scale, 4 * step)
    ds_max = step_max
    lo, hi = min(p_start, p_end), max(p_start, p_end)
    while len(branch.points) < cfg.max_points:
        res = arc.correct(u, p, tu, tp, ds)
        new_t = None
        if res is not None:
            try:
                new_t = arc.tangent(res[0], res[1], tu, tp)
            except SingularOperatorError:
                new_t = None
        if res is None or new_t is None:
            ds *= 0.5
            if ds < cfg.min_step:
                branch.terminated_by = "solver_failure"
                branch.message = "arclength step below min_step"
                return branch
            continue
        un, pn, its, r = res
        tun, tpn = new_t
        if tp * tpn < 0 and branch.fold is None:
            fold, fold_pt = _refine_fold(arc, u, p, tu, tp, ds, cfg.fold_tol)
            branch.fold = fold
            if fold_pt is not None:
                branch.points.append(fold_pt)
            branch.points.append(BranchPoint.make(pn, un, ds, r))
            if cfg.stop_at_fold:
                branch.terminated_by = "fold"
                return branch
        else:
            branch.points.append(BranchPoint.make(pn, un, ds, r))
        u, p, tu, tp = un, pn, tun, tpn
        if branch.points[-1].sup_norm > cfg.blowup_guard:
            branch.terminated_by = "blowup_guard"
            return branch
        if not lo <= p <= hi:
            branch.terminated_by = "param_limit"
            return branch
        if its <= 3:
            ds = min(1.5 * ds, ds_max)
    branch.message = "max_points reached"
    return branch


def _refine_fold(arc: _Arclength, u, p, tu, tp, ds, tol):
    """Bisect the arclength step over a tangent sign change.

    The fold value is the vertex of the parabola through the two bracket
    ends and the midpoint in (s, p); the bracket is shrunk until the
    nearest computed parameter is within ``tol`` (relative) of it.
    """
    s_lo, s_hi = 0.0, ds
    pts = {0.0: (u, p, tp)}

    def point(s):
        if s not in pts:
            res = arc.correct(u, p, tu, tp, s)
            if res is None:
                return None
            try:
                _, tps = arc.tangent(res[0], res[1], tu, tp)
            except SingularOperatorError:
                return None
            pts[s] = (res[0], res[1], tps)
        return pts[s]

    hi_pt = point(s_hi)
    if hi_pt is None:
        return Fold(p, (p, p)), None
    estimate = max(p, hi_pt[1]) if tp > 0 else min(p, hi_pt[1])
    best = None
    for _ in range(60):
        s_mid = 0.5 * (s_lo + s_hi)
        mid = point(s_mid)
        if mid is None:
            break
        a, b, c = pts[s_lo], mid, pts[s_hi]
        ss = np.array([s_lo, s_mid, s_hi])
        coeffs = np.polyfit(ss - s_mid, [a[1], b[1], c[1]], 2)
        if coeffs[0] != 0:
            sv = -coeffs[1] / (2 * coeffs[0])
            if -0.5 * (s_hi - s_lo) <= sv <= 0.5 * (s_hi - s_lo):
                estimate = float(np.polyval(coeffs, sv))
        near = max((a, b, c), key=lambda q: q[1]) if tp > 0 else min((a, b, c), key=lambda q: q[1])
        best = near
        if (mid[2] > 0) == (tp > 0):
            s_lo = s_mid
        else:
            s_hi = s_mid
        if abs(estimate - near[1]) <= tol * max(abs(estimate), 1e-12):
            break
    if best is None:
        return Fold(estimate, (p, estimate)), None
    rep_pt = BranchPoint.make(best[1], best[0], 0.0,
                              float(np.max(np.abs(arc.fam.residual(best[0], best[1], arc.scheme)))),
                              fold_flag=True)
    return Fold(float(estimate), (float(best[1]), float(estimate))), rep_pt


def continue_lambda(problem: ProblemSpec, lambda_start: float, u_start, direction: float = 1.0,
                    cfg: ContinuationConfig = ContinuationConfig(),
                    lambda_end: Optional[float] = None) -> Branch:
    """Continuation in lambda; ``lambda_end`` defaults to lambda_start +- 2 gamma_1."""
    if lambda_end is None:
        lambda_end = lambda_start + math.copysign(2.0 * gamma1(problem).value, direction)
    return continue_param(lambda_family(problem), lambda_start, u_start, lambda_end, cfg)


# ----------------------------------------------------------------------------
# second solutions


def find_second_solution(problem: ProblemSpec, lam: float, first, cfg: SolverConfig = DEFAULT, *,
                         formulation: str = "auto", extra_starts: Sequence = (),
                         n_random: int = 0, seed: int = 0) -> SolveReport:
    """Deflated Newton from the multistart family, away from ``first``.

    On success the report carries ``info["certificate"]``, an
    OrderedCertificate of the pair (lower one first) against phi_1.
    With ``formulation="auto"`` the transformed iteration is used when mu is
    constant and the result is polished by direct Newton.
    """
    first = problem.grid.check(first, "first")
    if formulation == "auto":
        formulation = "transformed" if problem.constant_mu else "direct"
    starts = multistart_family(problem, lam, extra=extra_starts, n_random=n_random, seed=seed)
    found = solve_multistart(problem, lam, starts, cfg, formulation, deflate=[first])
    phi1 = gamma1(problem).function
    for rep in found:
        if formulation != "direct":
            polished = newton_direct(problem, lam, rep.solution, cfg)
            if not (polished.converged and
                    np.max(np.abs(polished.solution - first)) >= cfg.min_distance):
                continue
            polished.info["found_by"] = formulation
            rep = polished
        u = rep.solution
        if np.mean(u - first) >= 0:
            cert = ordered_certificate(first, u, phi1)
        else:
            cert = ordered_certificate(u, first, phi1)
        rep.info["certificate"] = cert
        rep.info["starts_tried"] = len(starts)
        return rep
    rep = SolveReport(first.copy(), math.inf, 0, False, formulation,
                      message=f"no distinct solution from {len(starts)} starts")
    rep.info["starts_tried"] = len(starts)
    return rep


def first_solution(problem: ProblemSpec, lam: float, cfg: SolverConfig = DEFAULT,
                   upper=None) -> SolveReport:
    """A solution near the bottom of the solution set.

    With an upper solution and constant mu this is the minimal solution
    from monotone iteration; otherwise Newton from 0, then from the lower
    solution, then from ``upper``.
    """
    alpha = None
    if lam >= 0:
        try:
            alpha = construct_lower_solution(problem, lam, cfg.scheme)
        except (CertificateError, SingularOperatorError):
            alpha = None
    if upper is not None and alpha is not None and problem.constant_mu and np.all(alpha <= upper):
        mu = problem.mu
        rep = monotone_iterate(problem, lam, cole_hopf_forward(alpha, mu),
                               cole_hopf_forward(upper, mu), "lower", cfg)
        if rep.converged:
            polished = newton_direct(problem, lam, rep.solution, cfg)
            if polished.converged:
                return polished
    for start in (np.zeros(problem.grid.size), alpha, upper):
        if start is None:
            continue
        try:
            rep = newton_direct(problem, lam, start, cfg)
        except SingularOperatorError:
            continue
        if rep.converged:
            return rep
    return SolveReport(np.zeros(problem.grid.size), math.inf, 0, False, "direct",
                       message="no starting solution found")


# ----------------------------------------------------------------------------
# sweeps


class ShiftSweep(NamedTuple):
    A1_estimate: Optional[float]
    branch: Branch


def sweep_nonexistence_a(problem: ProblemSpec, lam: float,
                         cfg: ContinuationConfig = ContinuationConfig(),
                         a_max: Optional[float] = None) -> ShiftSweep:
    """Continue in a (data h + a c) from a = 0 to the fold A_1."""
    if lam < 0:
        raise InputError("sweep_nonexistence_a needs lam >= 0")
    start = first_solution(problem, lam, cfg.solver)
    if not start.converged:
        return ShiftSweep(None, Branch("a", terminated_by="solver_failure",
                                       message=start.message))
    if a_max is None:
        cmax = float(np.max(problem.c))
        a_max = 4.0 * (gamma1(problem).value / problem.mu1 + float(np.max(np.abs(problem.h)))) / cmax
    br = continue_param(shift_family(problem, lam), 0.0, start.solution, a_max, cfg)
    return ShiftSweep(None if br.fold is None else br.fold.param_estimate, br)


class ScaleSweep(NamedTuple):
    k_bar: Optional[float]
    lower_branch: Branch
    k_start: float


def sweep_k(problem: ProblemSpec, lam: float, cfg: ContinuationConfig = ContinuationConfig(),
            k_max: Optional[float] = None) -> ScaleSweep:
    """Continue in k for data k h~^+ - h~^- (h~ = problem.h) up to the fold k_bar.

    The start k and an upper solution beta << 0 come from the
    anti-maximum construction; the first solution is the minimal one
    below beta.
    """
    if not np.any(problem.h_plus > 0):
        raise InputError("sweep_k needs h~^+ not identically zero")
    nu = nu1(problem).value
    if not lam > nu:
        raise InputError(f"sweep_k needs lambda > nu_1 = {nu:.6g}, got {lam:.6g}")
    neg = construct_negative_upper_solution(problem, lam, scheme=cfg.solver.scheme)
    if neg is None:
        raise CertificateError("anti-maximum construction found no negative upper solution")
    fam = scale_family(problem, lam)
    k0 = neg.k
    start = first_solution(fam.problem_at(k0), lam, cfg.solver, upper=neg.beta)
    if not start.converged:
        return ScaleSweep(None, Branch("k", terminated_by="solver_failure",
                                       message=start.message), k0)
    if k_max is None:
        k_max = k0 + 50.0 * (1.0 + k0)
    br = continue_param(fam, k0, start.solution, k_max, cfg)
    return ScaleSweep(None if br.fold is None else br.fold.param_estimate, br, k0)


class BlowupRow(NamedTuple):
    lam: float
    sup_norm_u2: float
    product: float
    min_val: float
    residual: float
    guard_tripped: bool


def blowup_diagnostic(problem: ProblemSpec, lambdas: Sequence[float], cfg: SolverConfig = DEFAULT,
                      blowup_guard: float = 1e6) -> List[BlowupRow]:
    """Track the large solution u_2 as lambda decreases.

    At the first (largest) lambda u_2 comes from :func:`find_second_solution`;
    afterwards each point is seeded with the previous u_2 scaled by
    lambda_prev/lambda, the growth rate of the large branch.  ``min_val``
    is the smallest value over both u_1 and u_2 at that lambda.
    """
    lambdas = [float(x) for x in lambdas]
    if any(b >= a for a, b in zip(lambdas, lambdas[1:])) or lambdas[-1] <= 0:
        raise InputError("lambda sequence must be positive and strictly decreasing")
    formulation = "transformed" if problem.constant_mu else "direct"
    rows: List[BlowupRow] = []
    u2 = None
    prev = None
    for lam in lambdas:
        first = first_solution(problem, lam, cfg)
        if not first.converged:
            raise CertificateError(f"no first solution at lambda={lam:.6g}")
        rep = None
        if u2 is not None:
            seed = u2 * (prev / lam)
            try:
                trial = solve(problem, lam, seed, cfg, formulation)
                if trial.converged and np.max(trial.solution - first.solution) > cfg.min_distance:
                    rep = trial
            except (SingularOperatorError, ArithmeticError, ValueError):
                rep = None
            extra = [seed]
        else:
            extra = []
        if rep is None:
            rep = find_second_solution(problem, lam, first.solution, cfg, extra_starts=extra)
            if not rep.converged:
                raise CertificateError(f"large solution lost at lambda={lam:.6g}")
        u2 = rep.solution
        prev = lam
        sup = float(np.max(np.abs(u2)))
        tripped = sup > blowup_guard
        rows.append(BlowupRow(lam, sup, lam * float(np.max(np.maximum(u2, 0.0))),
                              float(min(np.min(u2), np.min(first.solution))),
                              float(rep.residual_inf), tripped))
        if tripped:
            break
    return rows
