"""Principal eigenpairs of (-Lap_h + d) phi = xi c phi.

The weight c may vanish on part of the domain, which makes the pencil
singular.  We run inverse power iteration on (A + sigma C)^-1 C with a
shift sigma making A + sigma C positive definite; the dominant eigenvalue
of that operator is 1/(xi_1 + sigma) and its eigenvector is positive.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .errors import ConvergenceError, DefinitenessError, InputError
from .grid import Grid, build_operator
from .problem import ProblemSpec


@dataclass(frozen=True, eq=False)
class EigenPair:
    value: float
    function: np.ndarray
    residual: float
    iterations: int = 0
    shift: float = 0.0


class BandedCholesky:
    """Cholesky factor of a symmetric banded sparse matrix.

    Raises DefinitenessError when the matrix is not positive definite.
    """

    def __init__(self, matrix, bandwidth: int):
        matrix = sp.csr_matrix(matrix)
        n = matrix.shape[0]
        ab = np.zeros((bandwidth + 1, n))
        for k in range(bandwidth + 1):
            ab[bandwidth - k, k:] = matrix.diagonal(k)
        try:
            self.factor = sla.cholesky_banded(ab, lower=False, check_finite=False)
        except np.linalg.LinAlgError as exc:
            raise DefinitenessError(f"operator is not positive definite ({exc})") from exc

    def solve(self, rhs) -> np.ndarray:
        return sla.cho_solve_banded((self.factor, False), rhs, check_finite=False)


def bandwidth(grid: Grid) -> int:
    return 1 if grid.dim == 1 else grid.n


def default_shift(d, c) -> float:
    """1 + max(0, -min(d/c) over the support of c), so d + sigma c >= c there."""
    support = c > 0
    worst = np.max(-d[support] / c[support]) if np.any(support) else 0.0
    return 1.0 + max(0.0, float(worst))


def principal_eigen(grid: Grid, d=None, c=None, *, tol: float = 1e-12,
                    residual_tol: float = 1e-9, max_iters: int = 20000,
                    shift: Optional[float] = None) -> EigenPair:
    d = np.zeros(grid.size) if d is None else np.broadcast_to(
        np.asarray(d, dtype=float), (grid.size,)).copy()
    c = np.ones(grid.size) if c is None else grid.check(c, "weight")
    if np.any(c < 0) or not np.any(c > 0):
        raise InputError("weight c must be nonnegative and not identically zero")
    A = build_operator(grid, d)
    sigma = default_shift(d, c) if shift is None else float(shift)
    chol = BandedCholesky(A + sp.diags(sigma * c), bandwidth(grid))

    x = np.ones(grid.size)
    rho_old = np.inf
    resid = np.inf
    for it in range(1, max_iters + 1):
        cx = c * x
        y = chol.solve(cx)
        # rho = 1/(xi + sigma) estimated without forming x^T A x (no cancellation)
        rho = float(x @ (c * y)) / float(x @ cx)
        x = y / np.max(np.abs(y))
        value = 1.0 / rho - sigma
        if abs(rho - rho_old) <= tol * abs(rho):
            resid = float(np.max(np.abs(A @ x - value * c * x)))
            if resid <= residual_tol:
                break
        rho_old = rho
    else:
        raise ConvergenceError(
            f"inverse power iteration did not converge in {max_iters} steps", residual=resid)
    if x[np.argmax(np.abs(x))] < 0:
        x = -x
    if np.any(x <= 0):
        raise DefinitenessError("principal eigenfunction is not positive; "
                                "shifted operator is not an M-matrix")
    return EigenPair(value, x, resid, it, sigma)


def gamma1(problem: ProblemSpec) -> EigenPair:
    """-Lap phi = gamma c phi."""
    return principal_eigen(problem.grid, None, problem.c)


def nu1(problem: ProblemSpec, h_tilde_minus=None) -> EigenPair:
    """-Lap u + mu2 h~^- u = nu c u (h~^- defaults to the problem's h^-)."""
    hm = problem.h_minus if h_tilde_minus is None else np.asarray(h_tilde_minus, dtype=float)
    return principal_eigen(problem.grid, problem.mu2 * hm, problem.c)


def nu_tilde1(problem: ProblemSpec) -> EigenPair:
    """-Lap u + mu1 h^- u = nu c u."""
    return principal_eigen(problem.grid, problem.mu1 * problem.h_minus, problem.c)


def xi1(problem: ProblemSpec, mu_const: Optional[float] = None) -> EigenPair:
    """-Lap w - mu h w = xi c w (constant mu)."""
    mu = problem.mu if mu_const is None else mu_const
    if np.ndim(mu) != 0:
        raise InputError("xi1 needs a constant mu")
    return principal_eigen(problem.grid, -mu * problem.h, problem.c)


class Coercivity(NamedTuple):
    coercive: bool
    margin: float


def coercivity_check(problem: ProblemSpec) -> Coercivity:
    """Smallest eigenvalue of -Lap_h - mu2 diag(h^+) (unweighted)."""
    pair = principal_eigen(problem.grid, -problem.mu2 * problem.h_plus, None)
    return Coercivity(pair.value > 0, pair.value)
