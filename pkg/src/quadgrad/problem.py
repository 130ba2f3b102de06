"""Problem data: grid plus the coefficient fields c, h and mu."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .errors import InputError
from .grid import Grid


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    """Data of -Lap u = lam c u + mu |grad u|^2 + h, u = 0 on the boundary.

    ``mu`` is either a positive float (constant mode) or a nodal field, in
    which case ``mu1 <= mu <= mu2`` must hold nodewise.  For a constant mu
    the bounds default to mu itself.
    """

    grid: Grid
    c: np.ndarray
    h: np.ndarray
    mu: object
    mu1: Optional[float] = None
    mu2: Optional[float] = None

    def __post_init__(self):
        grid = self.grid
        c = np.broadcast_to(np.asarray(self.c, dtype=float), (grid.size,)).copy()
        h = np.broadcast_to(np.asarray(self.h, dtype=float), (grid.size,)).copy()
        if not (np.all(np.isfinite(c)) and np.all(np.isfinite(h))):
            raise InputError("c and h must be finite")
        if np.any(c < 0) or not np.any(c > 0):
            raise InputError("assumption (A) needs c >= 0 with c not identically zero")
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "h", h)
        if np.ndim(self.mu) == 0:
            mu = float(self.mu)
            if not mu > 0:
                raise InputError(f"constant mu must be positive, got {mu}")
            object.__setattr__(self, "mu", mu)
            mu1 = mu if self.mu1 is None else float(self.mu1)
            mu2 = mu if self.mu2 is None else float(self.mu2)
            field = np.array([mu])
        else:
            field = grid.check(self.mu, "mu").copy()
            object.__setattr__(self, "mu", field)
            mu1 = float(field.min()) if self.mu1 is None else float(self.mu1)
            mu2 = float(field.max()) if self.mu2 is None else float(self.mu2)
        if not (0 < mu1 <= mu2):
            raise InputError(f"need 0 < mu1 <= mu2, got mu1={mu1}, mu2={mu2}")
        tol = 1e-14 * mu2
        if np.any(field < mu1 - tol) or np.any(field > mu2 + tol):
            raise InputError("assumption (A) needs mu1 <= mu(x) <= mu2 at every node")
        object.__setattr__(self, "mu1", mu1)
        object.__setattr__(self, "mu2", mu2)

    @property
    def constant_mu(self) -> bool:
        return np.ndim(self.mu) == 0

    @property
    def mu_field(self) -> np.ndarray:
        return np.full(self.grid.size, self.mu) if self.constant_mu else self.mu

    @property
    def h_plus(self) -> np.ndarray:
        return np.maximum(self.h, 0.0)

    @property
    def h_minus(self) -> np.ndarray:
        return np.maximum(-self.h, 0.0)

    def with_h(self, h) -> "ProblemSpec":
        return replace(self, h=np.broadcast_to(np.asarray(h, dtype=float), (self.grid.size,)).copy())

    def with_grid(self, grid: Grid, c=None, h=None, mu=None) -> "ProblemSpec":
        """Same constant data on another grid (fields must be given explicitly)."""
        def pick(given, current):
            if given is not None:
                return given
            if np.ndim(current) == 0:
                return current
            if np.ptp(current) == 0:
                return float(current[0])
            raise InputError("non-constant fields must be resampled explicitly")
        new_mu = pick(mu, self.mu)
        if np.ndim(new_mu) == 0:
            return ProblemSpec(grid, pick(c, self.c), pick(h, self.h), new_mu)
        return ProblemSpec(grid, pick(c, self.c), pick(h, self.h), new_mu, self.mu1, self.mu2)


def constant_problem(T: float, n: int, c: float = 1.0, h: float = 0.0,
                     mu: float = 1.0) -> ProblemSpec:
    """1D problem on [-T/2, T/2] with constant data (handy for tests)."""
    from .grid import Interval
    grid = Grid(Interval(T), n)
    return ProblemSpec(grid, grid.constant(c), grid.constant(h), mu)
