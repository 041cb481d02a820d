"""
Discrete Laplacians and the Crank-Nicolson factorization shared by every solver.
"""
from __future__ import annotations

import logging
from functools import lru_cache

import numpy as np
from scipy.sparse import csc_matrix, diags, identity
from scipy.sparse.linalg import splu

from .schemas import Grid1D, GridKind

logger = logging.getLogger(__name__)


@lru_cache(maxsize=32)
def laplacian_matrix(grid: Grid1D) -> csc_matrix:
    """
    Second-order central Laplacian with zero rows on the Dirichlet nodes.

    Radial grids discretize u_rr + (N-1)/r u_r and use the even reflection
    u_{-1} = u_1 at r = 0, where the operator is N u_rr.
    """
    n, h = grid.n_nodes, grid.h
    main = np.full(n, -2.0 / h ** 2)
    upper = np.full(n - 1, 1.0 / h ** 2)
    lower = np.full(n - 1, 1.0 / h ** 2)
    if grid.kind == GridKind.RADIAL and grid.N > 1:
        r = grid.nodes
        drift = (grid.N - 1) / (2.0 * h * r[1:-1])
        upper[1:] += drift
        lower[:-1] -= drift
    if grid.kind == GridKind.RADIAL:
        main[0] = -2.0 * grid.N / h ** 2
        upper[0] = 2.0 * grid.N / h ** 2
    else:
        main[0], upper[0] = 0.0, 0.0
    main[-1], lower[-1] = 0.0, 0.0
    return csc_matrix(diags([lower, main, upper], offsets=[-1, 0, 1]))


def radial_laplacian(field: np.ndarray, grid: Grid1D) -> np.ndarray:
    """Laplacian of nodal values; the last axis is the node axis. Dirichlet rows return 0."""
    field = np.asarray(field, dtype=float)
    L = laplacian_matrix(grid)
    flat = field.reshape(-1, grid.n_nodes)
    return (L @ flat.T).T.reshape(field.shape)


class CrankNicolson:
    """
    LU factors of I - dt/2 L and the explicit half I + dt/2 L.

    One instance per solve; the factorization is not shared between threads.
    """

    def __init__(self, grid: Grid1D, dt: float):
        self.grid = grid
        self.dt = float(dt)
        L = laplacian_matrix(grid)
        eye = identity(grid.n_nodes, format="csc")
        self.implicit = splu(csc_matrix(eye - 0.5 * self.dt * L))
        self.explicit = csc_matrix(eye + 0.5 * self.dt * L)
        self.explicit_T = csc_matrix(self.explicit.T)

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        """(I - dt/2 L)^(-1) applied to each row of a (k, n) array."""
        return np.stack([self.implicit.solve(row) for row in np.atleast_2d(rhs)])

    def solve_transpose(self, rhs: np.ndarray) -> np.ndarray:
        return np.stack([self.implicit.solve(row, trans="T") for row in np.atleast_2d(rhs)])

    def apply_explicit(self, y: np.ndarray) -> np.ndarray:
        return (self.explicit @ np.atleast_2d(y).T).T

    def apply_explicit_transpose(self, y: np.ndarray) -> np.ndarray:
        return (self.explicit_T @ np.atleast_2d(y).T).T
