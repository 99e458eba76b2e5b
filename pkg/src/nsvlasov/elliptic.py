"""Sparse MAC operators and direct elliptic solves.

Unknown vectors hold the interior faces only (wall-normal faces are fixed
at zero): first the x-faces ``i = 1..nx-1`` in C order, then the y-faces
``j = 1..ny-1``. Cells are numbered ``i * ny + j``.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .exceptions import SolverError
from .fields import Grid2D, ScalarField, VectorField


def _diff(n):
    """(n-1) x n forward difference."""
    return sp.diags([-np.ones(n - 1), np.ones(n - 1)], [0, 1], shape=(n - 1, n))


def _tri_dirichlet(n):
    return sp.diags([np.ones(n - 1), -2.0 * np.ones(n), np.ones(n - 1)], [-1, 0, 1])


def _tri_ghost(n):
    d = -2.0 * np.ones(n)
    d[0] = d[-1] = -3.0
    return sp.diags([np.ones(n - 1), d, np.ones(n - 1)], [-1, 0, 1])


@lru_cache(maxsize=16)
def gradient_matrix(grid: Grid2D) -> sp.csr_matrix:
    """Cells -> interior faces. Its negative transpose is the divergence."""
    nx, ny = grid.nx, grid.ny
    gx = sp.kron(_diff(nx), sp.identity(ny)) / grid.hx
    gy = sp.kron(sp.identity(nx), _diff(ny)) / grid.hy
    return sp.vstack([gx, gy]).tocsr()


@lru_cache(maxsize=16)
def vector_laplacian_matrix(grid: Grid2D) -> sp.csr_matrix:
    """No-slip vector Laplacian on interior faces (symmetric, negative definite)."""
    nx, ny = grid.nx, grid.ny
    lx = sp.kron(_tri_dirichlet(nx - 1), sp.identity(ny)) / grid.hx**2 + sp.kron(
        sp.identity(nx - 1), _tri_ghost(ny)
    ) / grid.hy**2
    ly = sp.kron(_tri_ghost(nx), sp.identity(ny - 1)) / grid.hx**2 + sp.kron(
        sp.identity(nx), _tri_dirichlet(ny - 1)
    ) / grid.hy**2
    return sp.block_diag([lx, ly]).tocsr()


def n_interior_faces(grid: Grid2D) -> int:
    return (grid.nx - 1) * grid.ny + grid.nx * (grid.ny - 1)


def pack(u: VectorField) -> np.ndarray:
    return np.concatenate([u.x[1:-1, :].ravel(), u.y[:, 1:-1].ravel()])


def unpack(vec: np.ndarray, grid: Grid2D, walls: VectorField | None = None) -> VectorField:
    """Inverse of :func:`pack`; wall faces are copied from ``walls`` (default zero)."""
    nx, ny = grid.nx, grid.ny
    k = (nx - 1) * ny
    ux = np.zeros((nx + 1, ny))
    uy = np.zeros((nx, ny + 1))
    if walls is not None:
        ux[0], ux[-1] = walls.x[0], walls.x[-1]
        uy[:, 0], uy[:, -1] = walls.y[:, 0], walls.y[:, -1]
    ux[1:-1, :] = vec[:k].reshape(nx - 1, ny)
    uy[:, 1:-1] = vec[k:].reshape(nx, ny - 1)
    return VectorField(grid, ux, uy)


def _pinned(mat):
    """Drop the first row and column to remove the constant null space."""
    return mat[1:, 1:].tocsc()


class NeumannPoisson:
    """Solve ``div(beta grad q) = r`` with zero-flux walls, ``q`` of mean zero.

    ``beta`` are interior-face coefficients (default 1). The factorisation is
    computed once and reused.
    """

    def __init__(self, grid: Grid2D, beta: np.ndarray | None = None, tol: float = 1e-10):
        self.grid = grid
        self.tol = tol
        G = gradient_matrix(grid)
        B = sp.identity(G.shape[0]) if beta is None else sp.diags(beta)
        # D beta G with D = -G^T; we store the positive semi-definite -L
        self.matrix = (G.T @ B @ G).tocsr()
        self._lu = splu(_pinned(self.matrix))

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        """Return ``q`` with ``D beta G q = rhs`` (rhs flattened over cells)."""
        r = np.asarray(rhs, dtype=float).ravel()
        r = r - r.mean()  # compatibility: the range is mean-zero
        q = np.zeros_like(r)
        q[1:] = self._lu.solve(-r[1:])
        q -= q.mean()
        res = np.linalg.norm(-self.matrix @ q - r)
        scale = max(np.linalg.norm(r), 1e-300)
        if res > self.tol * scale and res > 1e-14:
            raise SolverError(f"Poisson residual {res / scale:.3e} above tolerance {self.tol:g}", residual=res / scale)
        self.last_residual = res / scale
        return q


@lru_cache(maxsize=8)
def _unit_poisson(grid: Grid2D, tol: float) -> NeumannPoisson:
    return NeumannPoisson(grid, None, tol)


def poisson_solver(grid: Grid2D, beta=None, tol: float = 1e-10) -> NeumannPoisson:
    if beta is None:
        return _unit_poisson(grid, tol)
    return NeumannPoisson(grid, beta, tol)


def cells_to_field(q: np.ndarray, grid: Grid2D) -> ScalarField:
    return ScalarField(grid, q.reshape(grid.shape))
