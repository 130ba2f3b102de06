"""Uniform finite-difference grids on an interval or a rectangle.

Grid functions are plain numpy vectors over the interior nodes; the zero
Dirichlet boundary value is implicit.  In 2D the ordering is lexicographic
with x running fastest, so ``u.reshape(grid.shape)`` has rows indexed by y.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import NamedTuple, Union

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import GridMismatchError, InputError, SingularOperatorError


@dataclass(frozen=True)
class Interval:
    """The interval [-T/2, T/2]."""

    length: float

    def __post_init__(self):
        if not self.length > 0:
            raise InputError(f"interval length must be positive, got {self.length}")


@dataclass(frozen=True)
class Rectangle:
    """The rectangle [0, lx] x [0, ly]."""

    lx: float
    ly: float

    def __post_init__(self):
        if not (self.lx > 0 and self.ly > 0):
            raise InputError(f"rectangle sides must be positive, got {self.lx}, {self.ly}")


Domain = Union[Interval, Rectangle]


@dataclass(frozen=True)
class Grid:
    domain: Domain
    n: int

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 3:
            raise InputError(f"need at least 3 interior nodes per axis, got n={self.n}")

    @property
    def dim(self) -> int:
        return 1 if isinstance(self.domain, Interval) else 2

    @property
    def lengths(self) -> tuple:
        if self.dim == 1:
            return (self.domain.length,)
        return (self.domain.lx, self.domain.ly)

    @property
    def spacings(self) -> tuple:
        return tuple(length / (self.n + 1) for length in self.lengths)

    @property
    def spacing(self) -> float:
        """Mesh width along x (the only axis in 1D)."""
        return self.spacings[0]

    @property
    def shape(self) -> tuple:
        return (self.n,) if self.dim == 1 else (self.n, self.n)

    @property
    def size(self) -> int:
        return self.n ** self.dim

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacings))

    def axis_nodes(self, axis: int = 0) -> np.ndarray:
        h = self.spacings[axis]
        start = -self.lengths[0] / 2 if self.dim == 1 else 0.0
        return start + h * np.arange(1, self.n + 1)

    def coordinates(self) -> tuple:
        """Nodal coordinates, each flattened in grid ordering."""
        if self.dim == 1:
            return (self.axis_nodes(0),)
        X, Y = np.meshgrid(self.axis_nodes(0), self.axis_nodes(1))
        return (X.ravel(), Y.ravel())

    def sample(self, f) -> np.ndarray:
        """Evaluate ``f(x)`` (1D) or ``f(x, y)`` (2D) at the interior nodes."""
        values = np.asarray(f(*self.coordinates()), dtype=float)
        return np.broadcast_to(values, (self.size,)).copy()

    def constant(self, value: float) -> np.ndarray:
        return np.full(self.size, float(value))

    def check(self, u, name: str = "grid function") -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if u.shape != (self.size,):
            raise GridMismatchError(
                f"{name} has shape {u.shape}, grid expects ({self.size},)")
        return u

    def refined(self) -> "Grid":
        """Same domain with 2n+1 interior nodes (halved spacing, nested nodes)."""
        return Grid(self.domain, 2 * self.n + 1)


# ----------------------------------------------------------------------------
# operators


def _second_difference(n: int, h: float) -> sp.csr_matrix:
    main = np.full(n, 2.0 / h**2)
    off = np.full(n - 1, -1.0 / h**2)
    return sp.diags([off, main, off], [-1, 0, 1], format="csr")


def _central_difference(n: int, h: float) -> sp.csr_matrix:
    off = np.full(n - 1, 0.5 / h)
    return sp.diags([-off, off], [-1, 1], format="csr")


def laplacian(grid: Grid) -> sp.csr_matrix:
    """The discrete -Laplacian (3-point / 5-point stencil)."""
    if grid.dim == 1:
        return _second_difference(grid.n, grid.spacing)
    hx, hy = grid.spacings
    eye = sp.identity(grid.n, format="csr")
    return (sp.kron(eye, _second_difference(grid.n, hx))
            + sp.kron(_second_difference(grid.n, hy), eye)).tocsr()


def build_operator(grid: Grid, d=None) -> sp.csr_matrix:
    """Return -Lap_h + diag(d) as a CSR matrix; ``d`` defaults to zero."""
    op = laplacian(grid)
    if d is None:
        return op
    d = np.broadcast_to(np.asarray(d, dtype=float), (grid.size,)) if np.ndim(d) == 0 \
        else grid.check(d, "potential")
    return (op + sp.diags(d)).tocsr()


def difference_matrices(grid: Grid) -> list:
    """Central first-difference matrices, one per axis, zero boundary values."""
    if grid.dim == 1:
        return [_central_difference(grid.n, grid.spacing)]
    hx, hy = grid.spacings
    eye = sp.identity(grid.n, format="csr")
    return [sp.kron(eye, _central_difference(grid.n, hx)).tocsr(),
            sp.kron(_central_difference(grid.n, hy), eye).tocsr()]


def neighbor_shifts(grid: Grid, u) -> list:
    """List of ``(inv_h2, u_neighbor, has_neighbor)`` for each stencil direction.

    ``u_neighbor`` holds the value at the neighboring node (zero across the
    boundary) and ``has_neighbor`` flags interior neighbors.
    """
    U = np.asarray(u, dtype=float).reshape(grid.shape)
    out = []
    for axis, h in enumerate(grid.spacings):
        ax = grid.dim - 1 - axis  # x is the last array axis in 2D
        for step in (1, -1):
            shifted = np.zeros_like(U)
            mask = np.zeros(U.shape, dtype=bool)
            src = [slice(None)] * grid.dim
            dst = [slice(None)] * grid.dim
            if step == 1:
                src[ax], dst[ax] = slice(1, None), slice(None, -1)
            else:
                src[ax], dst[ax] = slice(None, -1), slice(1, None)
            shifted[tuple(dst)] = U[tuple(src)]
            mask[tuple(dst)] = True
            out.append((1.0 / h**2, shifted.ravel(), mask.ravel()))
    return out


def neighbor_offsets(grid: Grid) -> list:
    """Index offset of each direction returned by :func:`neighbor_shifts`."""
    offsets = []
    for axis in range(grid.dim):
        stride = 1 if axis == 0 else grid.n
        offsets.extend([stride, -stride])
    return offsets


def linear_solve(op, rhs, refine: int = 2) -> np.ndarray:
    """Sparse direct solve with a couple of refinement sweeps.

    Raises SingularOperatorError (with the smallest pivot) when the LU
    factorization fails or the residual stays above 1e-10 ||b|| plus the
    rounding level 64 eps ||A|| ||x|| (a normwise backward-error test).
    """
    rhs = np.asarray(rhs, dtype=float)
    if not np.any(rhs):
        return np.zeros_like(rhs)
    op = sp.csc_matrix(op)
    try:
        lu = spla.splu(op)
    except RuntimeError as exc:
        raise SingularOperatorError(f"factorization failed: {exc}", pivot=0.0) from exc
    pivot = float(np.min(np.abs(lu.U.diagonal())))
    x = lu.solve(rhs)
    op_norm = float(np.max(np.asarray(abs(op).sum(axis=1))))

    def bound(x):
        return 1e-10 * np.max(np.abs(rhs)) + 64 * np.finfo(float).eps * op_norm * np.max(np.abs(x))

    for _ in range(refine):
        r = rhs - op @ x
        if not np.all(np.isfinite(x)) or np.max(np.abs(r)) <= bound(x):
            break
        x = x + lu.solve(r)
    finite = np.all(np.isfinite(x))
    resid = np.max(np.abs(rhs - op @ x)) if finite else np.inf
    if not (finite and resid <= bound(x)):
        raise SingularOperatorError(
            f"linear solve failed: residual {resid:.3e}, smallest pivot {pivot:.3e}",
            pivot=pivot)
    return x


# ----------------------------------------------------------------------------
# nodal quantities


def gradient_sq(grid: Grid, u) -> np.ndarray:
    """|grad u|^2 by central differences, using u = 0 beyond the boundary."""
    u = grid.check(u)
    return sum((D @ u) ** 2 for D in difference_matrices(grid))


def integrate(grid: Grid, u) -> float:
    """Trapezoid rule with the zero boundary values (h * sum in 1D)."""
    return float(grid.cell_volume * np.sum(grid.check(u)))


class Ordering(NamedTuple):
    holds: bool
    epsilon: float


def strictly_below(u, v, phi1, eps_min: float = 1e-8) -> Ordering:
    """Grid version of u << v: largest eps >= 0 with v - u >= eps * phi1."""
    phi1 = np.asarray(phi1, dtype=float)
    if np.any(phi1 <= 0):
        raise InputError("gauge function phi1 must be positive at every node")
    ratio = np.min((np.asarray(v, dtype=float) - np.asarray(u, dtype=float)) / phi1)
    eps = max(0.0, float(ratio))
    return Ordering(eps > eps_min, eps)


# ----------------------------------------------------------------------------
# CSV serialization


def format_float(x: float) -> str:
    return format(float(x), ".17g")


def write_grid_function(grid: Grid, values, target) -> None:
    """Write ``index,x[,y],value`` rows; ``target`` is a path or text stream."""
    values = grid.check(values)
    coords = grid.coordinates()
    header = ["index", "x", "value"] if grid.dim == 1 else ["index", "x", "y", "value"]
    own = isinstance(target, (str, bytes)) or hasattr(target, "__fspath__")
    fh = open(target, "w", newline="") if own else target
    try:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for i in range(grid.size):
            row = [str(i)] + [format_float(c[i]) for c in coords] + [format_float(values[i])]
            writer.writerow(row)
    finally:
        if own:
            fh.close()


def read_grid_function(grid: Grid, source) -> np.ndarray:
    """Read values written by :func:`write_grid_function` (ordered by index)."""
    if isinstance(source, str) and "\n" in source:
        fh = io.StringIO(source)
    elif isinstance(source, (str, bytes)) or hasattr(source, "__fspath__"):
        fh = open(source, newline="")
    else:
        fh = source
    with fh:
        rows = list(csv.DictReader(fh))
    if len(rows) != grid.size:
        raise GridMismatchError(f"CSV has {len(rows)} rows, grid has {grid.size} nodes")
    values = np.empty(grid.size)
    for row in rows:
        values[int(row["index"])] = float(row["value"])
    return values
