"""Nonlinear solvers for -Lap u = lam c u + mu |grad u|^2 + h on a grid.

Discretization of the gradient term
-----------------------------------
Two schemes are available for mu |grad u|^2:

``"fitted"`` (default)
    mu_i Q_i with Q_i = sum_j (exp(mu_i (u_j - u_i)) - 1 - mu_i (u_j - u_i)) / (mu_i^2 h_j^2),
    the sum running over the stencil neighbors (zero across the boundary).
    It is second-order consistent with |grad u|^2 and makes the Cole-Hopf
    map exact on the grid: with v = exp(mu u) - 1 and constant mu,
    A v - f(v) = mu (1 + v) * F(u), so direct and transformed discrete
    problems share their solutions to rounding.
``"central"``
    mu * gradient_sq(u) with central differences.

Both use the same 3/5-point pattern, so Jacobians have a fixed sparsity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, NamedTuple, Optional, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .eigen import BandedCholesky, bandwidth, gamma1, nu1
from .errors import CertificateError, InputError, SingularOperatorError
from .grid import (Grid, build_operator, difference_matrices, gradient_sq, integrate,
                   laplacian, linear_solve, neighbor_offsets, neighbor_shifts,
                   strictly_below)
from .problem import ProblemSpec
from .transform import SemilinearRhs, cole_hopf_forward, cole_hopf_inverse, semilinear_eval

SCHEMES = ("fitted", "central")


@dataclass(frozen=True)
class SolverConfig:
    tol: float = 1e-10
    step_tol: float = 1e-12
    max_iters: int = 200
    armijo: float = 1e-4
    max_halvings: int = 40
    monotone_max_iters: int = 100_000
    scheme: str = "fitted"
    min_distance: float = 1e-4
    deflation_power: float = 2.0
    deflation_shift: float = 1.0

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise InputError(f"unknown gradient scheme {self.scheme!r}")
        for name in ("tol", "step_tol", "armijo", "min_distance"):
            if not getattr(self, name) > 0:
                raise InputError(f"{name} must be positive")


DEFAULT = SolverConfig()


@dataclass(eq=False)
class SolveReport:
    solution: np.ndarray
    residual_inf: float
    iterations: int
    converged: bool
    formulation: str
    v: Optional[np.ndarray] = None
    message: str = ""
    info: dict = field(default_factory=dict)

    def summary(self) -> dict:
        return {
            "converged": bool(self.converged),
            "residual_inf": float(self.residual_inf),
            "iterations": int(self.iterations),
            "formulation": self.formulation,
            "sup_norm": float(np.max(np.abs(self.solution))),
            "min": float(np.min(self.solution)),
            "max": float(np.max(self.solution)),
            "message": self.message,
        }


class OrderedCertificate(NamedTuple):
    lower: np.ndarray
    upper: np.ndarray
    epsilon: float
    max_violation: float

    @property
    def holds(self) -> bool:
        return self.max_violation <= 0 and self.epsilon > 1e-8


def ordered_certificate(lower, upper, phi1) -> OrderedCertificate:
    order = strictly_below(lower, upper, phi1)
    return OrderedCertificate(lower, upper, order.epsilon, float(np.max(lower - upper)))


# ----------------------------------------------------------------------------
# residuals and Jacobians


def gradient_term(problem: ProblemSpec, u, scheme: str = "fitted") -> np.ndarray:
    """Discrete mu(x) |grad u|^2 in the requested scheme."""
    grid = problem.grid
    mu = problem.mu_field
    if scheme == "central":
        return mu * gradient_sq(grid, u)
    u = np.asarray(u, dtype=float)
    out = np.zeros(grid.size)
    with np.errstate(over="ignore", invalid="ignore"):
        for inv_h2, un, _ in neighbor_shifts(grid, u):
            s = mu * (un - u)
            out += inv_h2 * (np.expm1(s) - s) / mu
    return out


def gradient_term_jacobian(problem: ProblemSpec, u, scheme: str = "fitted") -> sp.csr_matrix:
    grid = problem.grid
    mu = problem.mu_field
    if scheme == "central":
        return sum(sp.diags(2.0 * mu * (D @ u)) @ D for D in difference_matrices(grid)).tocsr()
    u = np.asarray(u, dtype=float)
    rows, cols, vals = [], [], []
    diag = np.zeros(grid.size)
    idx = np.arange(grid.size)
    with np.errstate(over="ignore", invalid="ignore"):
        for (inv_h2, un, has), off in zip(neighbor_shifts(grid, u), neighbor_offsets(grid)):
            e = inv_h2 * np.expm1(mu * (un - u))
            diag -= e
            rows.append(idx[has])
            cols.append(idx[has] + off)
            vals.append(e[has])
    rows.append(idx)
    cols.append(idx)
    vals.append(diag)
    return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                         shape=(grid.size, grid.size))


def residual_direct(problem: ProblemSpec, lam: float, u, scheme: str = "fitted") -> np.ndarray:
    """F(u) = -Lap_h u - lam c u - mu |grad u|^2 - h, nodewise."""
    u = problem.grid.check(u)
    A = laplacian(problem.grid)
    return A @ u - lam * problem.c * u - gradient_term(problem, u, scheme) - problem.h


def jacobian_direct(problem: ProblemSpec, lam: float, u, scheme: str = "fitted") -> sp.csr_matrix:
    A = laplacian(problem.grid)
    return (A - sp.diags(lam * problem.c) - gradient_term_jacobian(problem, u, scheme)).tocsr()


def _require_constant_mu(problem: ProblemSpec):
    if not problem.constant_mu:
        raise InputError("the transformed formulation needs a constant mu")


def semilinear_rhs(problem: ProblemSpec, lam: float) -> SemilinearRhs:
    _require_constant_mu(problem)
    return SemilinearRhs(lam, problem.mu, problem.c, problem.h)


def residual_transformed(problem: ProblemSpec, lam: float, v) -> np.ndarray:
    """G(v) = -Lap_h v - lam c (1+v)ln(1+v) - mu h v - mu h."""
    A = laplacian(problem.grid)
    return A @ v - semilinear_eval(semilinear_rhs(problem, lam), v).f


def jacobian_transformed(problem: ProblemSpec, lam: float, v) -> sp.csr_matrix:
    A = laplacian(problem.grid)
    return (A - sp.diags(semilinear_eval(semilinear_rhs(problem, lam), v).fprime)).tocsr()


# ----------------------------------------------------------------------------
# Newton machinery


def _inf(x) -> float:
    return float(np.max(np.abs(x))) if np.all(np.isfinite(x)) else math.inf


def _factorize(J):
    J = sp.csc_matrix(J)
    try:
        lu = spla.splu(J)
    except RuntimeError as exc:
        raise SingularOperatorError(
            f"singular Jacobian (condition estimate inf): {exc}", pivot=0.0) from exc
    pivot = float(np.min(np.abs(lu.U.diagonal())))
    norm1 = float(spla.norm(J, 1))
    if not pivot > 1e-14 * norm1:
        raise SingularOperatorError(
            f"singular Jacobian: smallest pivot {pivot:.3e}, condition estimate "
            f">= {norm1 / max(pivot, 1e-300):.3e}", pivot=pivot)
    return lu


class Deflation:
    """M(x) = prod_k (||x - r_k||^-p + shift) over known roots r_k.

    The norm is the domain-averaged discrete L2 norm, which keeps M smooth.
    """

    def __init__(self, roots: Sequence[np.ndarray], power: float = 2.0, shift: float = 1.0):
        self.roots = [np.asarray(r, dtype=float) for r in roots]
        self.power = power
        self.shift = shift

    def __bool__(self):
        return bool(self.roots)

    def value_and_grad(self, x):
        m = 1.0
        grad_log = np.zeros_like(x)
        for r in self.roots:
            e = x - r
            with np.errstate(over="ignore"):
                d2 = float(np.mean(e * e))
            d2 = max(d2, 1e-300)
            term = d2 ** (-self.power / 2) + self.shift
            m *= term
            # d/dx of d2^(-p/2) = -p d2^(-p/2 - 1) e / N
            grad_log += (-self.power * d2 ** (-self.power / 2 - 1) * e / x.size) / term
        return m, m * grad_log


def rounding_floor(grid: Grid, x, weight=None) -> float:
    """Componentwise rounding bound of -Lap_h x: (stencil size) eps (|A| |x|).

    Residuals cannot be driven below this level in double precision.
    ``weight`` divides the bound nodewise (used for scaled residuals).
    """
    A = laplacian(grid)
    bound = (2 * grid.dim + 1) * np.finfo(float).eps * (abs(A) @ np.abs(x))
    if weight is not None:
        bound = bound / weight
    return float(np.max(bound))


def newton(residual: Callable, jacobian: Callable, x0, cfg: SolverConfig = DEFAULT, *,
           max_step: Optional[Callable] = None, deflation: Optional[Deflation] = None,
           floor: Optional[Callable] = None, formulation: str = "direct") -> SolveReport:
    """Damped Newton with Armijo backtracking on the sup norm of the residual.

    ``max_step(x, dx)`` returns the largest admissible step fraction (domain
    guard).  With ``deflation`` the iteration is the deflated Newton method;
    convergence is still judged on the undeflated residual.  ``floor(x)`` is
    the rounding level of the residual; convergence is declared at
    max(cfg.tol, floor(x)) and then up to two polishing steps are tried.
    """
    x = np.array(x0, dtype=float)
    F = residual(x)
    r = _inf(F)
    best, best_r = x, r
    it = 0
    message = ""
    while True:
        if r < best_r:
            best, best_r = x, r
        target = max(cfg.tol, floor(x)) if floor is not None and math.isfinite(r) else cfg.tol
        if r <= target:
            for _ in range(2):
                if r <= 0.1 * cfg.tol:
                    break
                try:
                    xt = x - _factorize(jacobian(x)).solve(F)
                except SingularOperatorError:
                    break
                if max_step is not None and max_step(x, xt - x) < 1.0:
                    break
                Ft = residual(xt)
                rt = _inf(Ft)
                if not rt < r:
                    break
                x, F, r = xt, Ft, rt
                it += 1
            msg = "converged" if r <= cfg.tol else "converged at rounding floor"
            return SolveReport(x, r, it, True, formulation, message=msg)
        if it >= cfg.max_iters:
            message = "max iterations"
            break
        if not math.isfinite(r):
            message = "non-finite residual"
            break
        lu = _factorize(jacobian(x))
        dx = -lu.solve(F)
        merit = r
        if deflation:
            m, g = deflation.value_and_grad(x)
            denom = 1.0 - float(g @ dx) / m
            if abs(denom) > 1e-8:
                dx = dx / denom
            merit = m * r
        t = 1.0
        if max_step is not None:
            t = min(1.0, max_step(x, dx))
            if not t > 0:
                message = "no admissible step"
                break
        accepted = False
        for _ in range(cfg.max_halvings + 1):
            xt = x + t * dx
            Ft = residual(xt)
            rt = _inf(Ft)
            trial = rt * deflation.value_and_grad(xt)[0] if deflation else rt
            if trial <= (1.0 - cfg.armijo * t) * merit:
                accepted = True
                break
            t *= 0.5
        it += 1
        if not accepted:
            message = "line search failed"
            break
        x, F, r = xt, Ft, rt
    rep = SolveReport(x, r, it, False, formulation, message=message)
    rep.info.update(best=best, best_residual=best_r)
    return rep


def newton_direct(problem: ProblemSpec, lam: float, u0, cfg: SolverConfig = DEFAULT, *,
                  deflation: Optional[Deflation] = None) -> SolveReport:
    u0 = problem.grid.check(u0, "start")
    return newton(lambda u: residual_direct(problem, lam, u, cfg.scheme),
                  lambda u: jacobian_direct(problem, lam, u, cfg.scheme),
                  u0, cfg, deflation=deflation,
                  floor=lambda u: rounding_floor(problem.grid, u), formulation="direct")


def _domain_guard(floor: float = 1e-12):
    def max_step(v, dv):
        neg = dv < 0
        if not np.any(neg):
            return 1.0
        room = (v[neg] + 1.0 - floor) / (-dv[neg])
        return float(min(1.0, 0.99 * np.min(room)))
    return max_step


def scaled_residual_transformed(problem: ProblemSpec, lam: float, v) -> np.ndarray:
    """G(v) / (mu (1+v)): the transformed residual in units of the direct one."""
    return residual_transformed(problem, lam, v) / (problem.mu * (1.0 + np.asarray(v)))


def newton_transformed(problem: ProblemSpec, lam: float, v0, cfg: SolverConfig = DEFAULT, *,
                       deflation: Optional[Deflation] = None) -> SolveReport:
    """Newton on the gradient-free problem for v = exp(mu u) - 1.

    The iteration works on G(v)/(mu(1+v)), whose roots are those of G and
    whose size is comparable to the direct residual even when v is huge;
    ``residual_inf`` reports that scaled residual.  Steps are damped so that
    v > -1 + 1e-12 at every iterate.
    """
    _require_constant_mu(problem)
    v0 = problem.grid.check(v0, "start")
    if np.any(v0 <= -1):
        raise InputError("transformed start must satisfy v > -1")
    mu = problem.mu

    def jac(v):
        scale = 1.0 / (mu * (1.0 + v))
        G = residual_transformed(problem, lam, v)
        return (sp.diags(scale) @ jacobian_transformed(problem, lam, v)
                - sp.diags(G * scale / (1.0 + v))).tocsr()

    rep = newton(lambda v: scaled_residual_transformed(problem, lam, v), jac,
                 v0, cfg, max_step=_domain_guard(), deflation=deflation,
                 floor=lambda v: rounding_floor(problem.grid, v, mu * (1.0 + v)),
                 formulation="transformed")
    rep.v = rep.solution
    rep.solution = cole_hopf_inverse(rep.v, mu)
    if "best" in rep.info:
        rep.info["best"] = cole_hopf_inverse(rep.info["best"], mu)
    return rep


def solve(problem: ProblemSpec, lam: float, u0, cfg: SolverConfig = DEFAULT,
          formulation: str = "direct", deflation: Optional[Deflation] = None) -> SolveReport:
    """Newton in either formulation; the start is always given in u."""
    if formulation == "direct":
        return newton_direct(problem, lam, u0, cfg, deflation=deflation)
    if formulation == "transformed":
        _require_constant_mu(problem)
        v0 = cole_hopf_forward(u0, problem.mu)
        if deflation:
            deflation = Deflation([cole_hopf_forward(r, problem.mu) for r in deflation.roots],
                                  deflation.power, deflation.shift)
        return newton_transformed(problem, lam, v0, cfg, deflation=deflation)
    raise InputError(f"unknown formulation {formulation!r}")


# ----------------------------------------------------------------------------
# lower / upper solutions


class Verification(NamedTuple):
    holds: bool
    max_violation: float
    node: int


def _verify_tol(problem: ProblemSpec, lam: float) -> float:
    return 1e-9 * (1.0 + abs(lam) * float(np.max(problem.c)) + float(np.max(np.abs(problem.h)))
                   + problem.mu2)


def verify_lower(problem: ProblemSpec, lam: float, alpha, scheme: str = "fitted") -> Verification:
    """-Lap_h alpha <= lam c alpha + mu |grad alpha|^2 + h at every node."""
    gap = residual_direct(problem, lam, alpha, scheme)
    node = int(np.argmax(gap))
    return Verification(bool(gap[node] <= _verify_tol(problem, lam)), float(gap[node]), node)


def verify_upper(problem: ProblemSpec, lam: float, beta, scheme: str = "fitted") -> Verification:
    """-Lap_h beta >= lam c beta + mu |grad beta|^2 + h at every node."""
    gap = -residual_direct(problem, lam, beta, scheme)
    node = int(np.argmax(gap))
    return Verification(bool(gap[node] <= _verify_tol(problem, lam)), float(gap[node]), node)


def construct_lower_solution(problem: ProblemSpec, lam: float, scheme: str = "fitted",
                             cfg: SolverConfig = DEFAULT) -> np.ndarray:
    """A verified lower solution lying below every upper solution.

    First tries alpha_k solving -Lap alpha = -lam k c - h^- - 1, with k
    doubling from 1 until min alpha_k >= -k (alpha_k is affine in k, so both
    pieces are solved once).  That fails once lam ||A^-1 c|| >= 1; then the
    lower solution is a nonpositive solution of
    -Lap v = lam c v + mu |grad v|^2 - h^- - 1, found by Newton, which is a
    lower solution with margin h^+ + 1.
    """
    if lam < 0:
        raise InputError("construct_lower_solution needs lam >= 0")
    A = laplacian(problem.grid)
    a = linear_solve(A, -lam * problem.c) if lam > 0 else np.zeros(problem.grid.size)
    b = linear_solve(A, -problem.h_minus - 1.0)
    k = 1.0
    while np.min(k * a + b) < -k and k <= 2.0**60:
        k *= 2.0
    if k <= 2.0**60:
        alpha = k * a + b
    else:
        alpha = _truncated_lower(problem, lam, b, scheme, cfg)
    check = verify_lower(problem, lam, alpha, scheme)
    if not check.holds:
        raise CertificateError("constructed lower solution failed verification",
                               node=check.node, violation=check.max_violation)
    return alpha


def _truncated_lower(problem, lam, b, scheme, cfg) -> np.ndarray:
    aux = problem.with_h(-problem.h_minus - 1.0)
    for start in (np.zeros_like(b), b, 4 * b, 16 * b):
        try:
            rep = newton_direct(aux, lam, start, replace(cfg, scheme=scheme))
        except SingularOperatorError:
            continue
        if rep.converged and np.max(rep.solution) <= 0:
            return rep.solution
    # at large lam Newton prefers other solutions: follow the nonpositive
    # branch from lam = 0 instead
    sub = replace(cfg, scheme=scheme)
    cur_lam, cur = 0.0, newton_direct(aux, 0.0, b, sub).solution
    step = lam / 8.0
    while cur_lam < lam and step > 1e-6 * lam:
        nxt = min(lam, cur_lam + step)
        try:
            rep = newton_direct(aux, nxt, cur, sub)
            ok = rep.converged and np.max(rep.solution) <= 0
        except SingularOperatorError:
            ok = False
        if ok:
            cur_lam, cur = nxt, rep.solution
            step *= 1.5
        else:
            step *= 0.5
    if cur_lam == lam:
        return cur
    raise CertificateError(
        f"no nonpositive solution of the auxiliary problem at lam={lam:.6g} "
        "(lam ||A^-1 c|| >= 1 and the Newton fallbacks failed)")


def construct_upper_solution_P0(problem: ProblemSpec, scheme: str = "fitted") -> Optional[np.ndarray]:
    """beta = ln(1+w)/mu with (-Lap - mu h) w = mu h^+, or None when xi_1 <= 0."""
    _require_constant_mu(problem)
    from .eigen import xi1
    if xi1(problem).value <= 0:
        return None
    mu = problem.mu
    w = linear_solve(build_operator(problem.grid, -mu * problem.h), mu * problem.h_plus)
    if np.any(w < -1e-12 * (1 + np.max(np.abs(w)))):
        return None
    beta = cole_hopf_inverse(np.maximum(w, 0.0), mu)
    check = verify_upper(problem, 0.0, beta, scheme)
    if not check.holds:
        raise CertificateError("constructed upper solution of (P_0) failed verification",
                               node=check.node, violation=check.max_violation)
    return beta


class NegativeUpper(NamedTuple):
    beta: np.ndarray
    k: float
    lambda0: float
    w: np.ndarray


def construct_negative_upper_solution(problem: ProblemSpec, lam: float, k_scale: float = 1.0,
                                      window: Optional[float] = None,
                                      scheme: str = "fitted") -> Optional[NegativeUpper]:
    """Upper solution beta << 0 for lam above nu_1 (anti-maximum construction).

    Looks for lambda0 in ]nu1, min(nu1 + window, (nu1 + lam)/2)] such that
    (-Lap + mu2 h^-) w = lambda0 c w + forcing has w << 0, where the forcing
    is mu2 h^+ (or 1 when h^+ vanishes).  Then beta = ln(1 + k w)/mu2 with k
    halved from ``k_scale`` until beta is a verified upper solution.

    When h^+ is nonzero, beta is an upper solution of the problem with data
    k h^+ - h^-; the returned ``k`` says which.  Returns None when lam <= nu1
    or no admissible lambda0 / k was found.
    """
    pair = nu1(problem)
    nu = pair.value
    if not lam > nu:
        return None
    d = problem.mu2 * problem.h_minus
    scale_data = bool(np.any(problem.h_plus > 0))
    forcing = problem.mu2 * problem.h_plus if scale_data else np.ones(problem.grid.size)
    window = nu if window is None else window
    top = min(nu + window, 0.5 * (nu + lam))
    A = build_operator(problem.grid, d)
    w = None
    for i in range(60):
        lam0 = nu + (top - nu) / 2.0**i
        try:
            trial = linear_solve(A - sp.diags(lam0 * problem.c), forcing)
        except SingularOperatorError:
            continue
        if strictly_below(trial, np.zeros_like(trial), pair.function).holds:
            w = trial
            break
    if w is None:
        return None
    k = float(k_scale)
    for _ in range(60):
        z = k * w
        if np.min(z) > -1.0:
            beta = np.log1p(z) / problem.mu2
            target = problem.with_h(k * problem.h_plus - problem.h_minus) if scale_data else problem
            if verify_upper(target, lam, beta, scheme).holds:
                return NegativeUpper(beta, k, lam0, w)
        k *= 0.5
    return None


# ----------------------------------------------------------------------------
# monotone iteration


def monotone_iterate(problem: ProblemSpec, lam: float, alpha_v, beta_v, start: str = "lower",
                     cfg: SolverConfig = DEFAULT) -> SolveReport:
    """K-shifted monotone scheme between transformed lower/upper solutions.

    (A + K) v_{k+1} = f(v_k) + K v_k with K = max(0, -min f') + 1 over
    [min alpha, max beta].  From the lower solution the iterates increase to
    the minimal solution in [alpha, beta]; from the upper one they decrease
    to the maximal one.
    """
    rhs = semilinear_rhs(problem, lam)
    grid = problem.grid
    alpha_v = grid.check(alpha_v, "alpha")
    beta_v = grid.check(beta_v, "beta")
    if start not in ("lower", "upper"):
        raise InputError("start must be 'lower' or 'upper'")
    if np.any(alpha_v > beta_v):
        node = int(np.argmax(alpha_v - beta_v))
        raise CertificateError("alpha <= beta fails", node=node,
                               violation=float(alpha_v[node] - beta_v[node]))
    tol = _verify_tol(problem, lam) * (1.0 + max(_inf(alpha_v), _inf(beta_v)))
    G_alpha = residual_transformed(problem, lam, alpha_v)
    if np.max(G_alpha) > tol:
        node = int(np.argmax(G_alpha))
        raise CertificateError("alpha is not a lower solution", node=node,
                               violation=float(G_alpha[node]))
    G_beta = residual_transformed(problem, lam, beta_v)
    if np.min(G_beta) < -tol:
        node = int(np.argmin(G_beta))
        raise CertificateError("beta is not an upper solution", node=node,
                               violation=float(-G_beta[node]))

    fp_low = semilinear_eval(rhs, np.full(grid.size, np.min(alpha_v))).fprime
    K = max(0.0, -float(np.min(fp_low))) + 1.0
    A = laplacian(grid)
    chol = BandedCholesky(A + K * sp.identity(grid.size), bandwidth(grid))
    sign = 1.0 if start == "lower" else -1.0
    v = (alpha_v if start == "lower" else beta_v).copy()
    worst_monotone = 0.0
    it = 0
    r = math.inf
    while it < cfg.monotone_max_iters:
        it += 1
        v_new = chol.solve(semilinear_eval(rhs, v).f + K * v)
        delta = v_new - v
        worst_monotone = max(worst_monotone, float(np.max(-sign * delta)))
        v = v_new
        if _inf(delta) <= cfg.step_tol * (1.0 + _inf(v)):
            break
    r = _inf(scaled_residual_transformed(problem, lam, v))
    u = cole_hopf_inverse(v, problem.mu)
    r_direct = _inf(residual_direct(problem, lam, u, cfg.scheme))
    converged = r <= max(cfg.tol, rounding_floor(grid, v, problem.mu * (1.0 + v)))
    rep = SolveReport(u, r, it, converged, "transformed", v=v,
                      message="converged" if converged else "monotone iteration stalled")
    rep.info.update(K=K, monotone_violation=worst_monotone, direct_residual=r_direct)
    return rep


# ----------------------------------------------------------------------------
# identity check and multistart


class IdentityCheck(NamedTuple):
    lhs: float
    rhs: float
    rel_gap: float

    @property
    def gap(self) -> float:
        return self.lhs - self.rhs


def check_identity_phi1(problem: ProblemSpec, lam: float, u, phi=None) -> IdentityCheck:
    """(gamma1 - lam) int c u phi1 versus int mu |grad u|^2 phi1 + int h phi1.

    The gradient is taken by central differences, independently of the
    scheme used to solve, so the gap measures discretization error.
    """
    grid = problem.grid
    pair = gamma1(problem) if phi is None else phi
    phi1 = pair.function
    lhs = (pair.value - lam) * integrate(grid, problem.c * u * phi1)
    rhs = (integrate(grid, problem.mu_field * gradient_sq(grid, u) * phi1)
           + integrate(grid, problem.h * phi1))
    return IdentityCheck(lhs, rhs, abs(lhs - rhs) / (abs(lhs) + abs(rhs) + 1e-300))


def random_smooth(grid: Grid, rng: np.random.Generator, modes: int = 4) -> np.ndarray:
    """Random combination of the first few Dirichlet sine modes, sup norm 1."""
    coords = grid.coordinates()
    out = np.zeros(grid.size)
    if grid.dim == 1:
        x = (coords[0] + grid.lengths[0] / 2) / grid.lengths[0]
        for m in range(1, modes + 1):
            out += rng.normal() / m * np.sin(m * np.pi * x)
    else:
        x = coords[0] / grid.lengths[0]
        y = coords[1] / grid.lengths[1]
        for m in range(1, modes + 1):
            for k in range(1, modes + 1):
                out += rng.normal() / (m * k) * np.sin(m * np.pi * x) * np.sin(k * np.pi * y)
    return out / np.max(np.abs(out))


def multistart_family(problem: ProblemSpec, lam: float, *, extra: Sequence = (),
                      n_random: int = 0, seed: int = 0,
                      amplitudes: Sequence[float] = (1.0, 5.0, 25.0, 125.0)) -> list:
    """Default start set {0, +-alpha, +-t phi1} plus extrapolants and random starts."""
    grid = problem.grid
    phi1 = gamma1(problem).function
    starts = [np.zeros(grid.size)]
    if lam >= 0:
        try:
            alpha = construct_lower_solution(problem, lam)
            starts += [alpha, -alpha]
        except (CertificateError, SingularOperatorError):
            pass
    for t in amplitudes:
        starts += [t * phi1, -t * phi1]
    starts += [np.asarray(e, dtype=float) for e in extra]
    rng = np.random.default_rng(seed)
    for _ in range(n_random):
        amp = math.exp(rng.uniform(math.log(0.1), math.log(max(amplitudes))))
        starts.append(amp * random_smooth(grid, rng))
    return starts


def distinct(u, known: Sequence[np.ndarray], min_distance: float) -> bool:
    return all(_inf(u - k) >= min_distance for k in known)


def solve_multistart(problem: ProblemSpec, lam: float, starts: Sequence, cfg: SolverConfig = DEFAULT,
                     formulation: str = "direct", deflate: Sequence = ()) -> list:
    """Run Newton from every start; return the distinct converged reports."""
    found = []
    known = [np.asarray(k, dtype=float) for k in deflate]
    for u0 in starts:
        if formulation == "transformed" and np.any(problem.mu * np.asarray(u0) > 700):
            continue
        defl = Deflation(known, cfg.deflation_power, cfg.deflation_shift) if known else None
        try:
            rep = solve(problem, lam, u0, cfg, formulation, deflation=defl)
        except (SingularOperatorError, ArithmeticError, ValueError):
            continue
        if rep.converged and distinct(rep.solution, known, cfg.min_distance):
            found.append(rep)
            known.append(rep.solution)
    return found
