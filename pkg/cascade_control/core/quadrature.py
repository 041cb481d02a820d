"""
Cumulative integrals of piecewise-smooth integrands and finite-difference stencils.
"""
from __future__ import annotations

from typing import Callable, Optional, Sequence

import numpy as np
from numpy.polynomial import chebyshev as cheb
from numpy.polynomial import legendre


def _chebval_rows(x: np.ndarray, rows: np.ndarray) -> np.ndarray:
    """Clenshaw evaluation where each point carries its own coefficient row."""
    b1 = np.zeros_like(x)
    b2 = np.zeros_like(x)
    for k in range(rows.shape[1] - 1, 0, -1):
        b1, b2 = 2.0 * x * b1 - b2 + rows[:, k], b1
    return x * b1 - b2 + rows[:, 0]


class CumulativeIntegral:
    """
    F(z) = int_anchor^z integrand(s) ds on [edges[0], edges[-1]].

    The integrand is interpolated on ``cells`` Chebyshev cells per interval
    between consecutive edges (never across an edge), integrated exactly and
    chained with cumulative constants.
    """

    def __init__(
        self,
        integrand: Callable[[np.ndarray], np.ndarray],
        edges: Sequence[float],
        anchor: float,
        cells: int = 32,
        degree: int = 24,
    ):
        cell_edges = []
        for lo, hi in zip(edges[:-1], edges[1:]):
            cell_edges.append(np.linspace(lo, hi, cells + 1)[:-1])
        cell_edges.append(np.array([edges[-1]]))
        self.cell_edges = np.concatenate(cell_edges)
        n_cells = self.cell_edges.size - 1

        rows = np.zeros((n_cells, degree + 2))
        totals = np.zeros(n_cells)
        for k in range(n_cells):
            a, b = self.cell_edges[k], self.cell_edges[k + 1]
            half = 0.5 * (b - a)
            mid = 0.5 * (b + a)
            coef = cheb.chebinterpolate(lambda s: integrand(mid + half * s), degree)
            anti = cheb.chebint(coef, lbnd=-1.0) * half
            rows[k, : anti.size] = anti
            totals[k] = cheb.chebval(1.0, anti)
        self._rows = rows
        self._offsets = np.concatenate([[0.0], np.cumsum(totals)])[:-1]
        self._shift = 0.0
        self._shift = float(self(np.array([anchor]))[0])

    @property
    def total(self) -> float:
        """Integral over the whole covered interval."""
        return float(self(np.array([self.cell_edges[-1]]))[0] - self(np.array([self.cell_edges[0]]))[0])

    def __call__(self, z) -> np.ndarray:
        z = np.atleast_1d(np.asarray(z, dtype=float))
        k = np.clip(np.searchsorted(self.cell_edges, z, side="right") - 1, 0, self._rows.shape[0] - 1)
        a = self.cell_edges[k]
        b = self.cell_edges[k + 1]
        s = (2.0 * z - a - b) / (b - a)
        return _chebval_rows(s, self._rows[k]) + self._offsets[k] - self._shift


def gauss_legendre_unit(n: int) -> tuple:
    """Gauss-Legendre nodes and weights on [0, 1]."""
    x, w = legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


def fd_weights(offsets: Sequence[float], derivative: int) -> np.ndarray:
    """
    Finite-difference weights for the given stencil offsets (in units of h).

    Solves the Vandermonde moment system; exact on polynomials of degree
    len(offsets) - 1.
    """
    offsets = np.asarray(offsets, dtype=float)
    n = offsets.size
    if derivative >= n:
        raise ValueError("stencil too short for the requested derivative")
    vander = np.vander(offsets, n, increasing=True).T
    rhs = np.zeros(n)
    rhs[derivative] = float(np.prod(np.arange(1, derivative + 1)))
    return np.linalg.solve(vander, rhs)


def central_weights(half_width: int, derivative: int) -> np.ndarray:
    """Central stencil of 2*half_width + 1 points (order 2*half_width)."""
    return fd_weights(np.arange(-half_width, half_width + 1), derivative)


class ChebyshevTable:
    """Piecewise Chebyshev interpolant of a smooth function, for fast ODE right-hand sides."""

    def __init__(self, fn: Callable[[np.ndarray], np.ndarray], edges: Sequence[float],
                 cells: int = 8, degree: int = 32):
        cell_edges = []
        for lo, hi in zip(edges[:-1], edges[1:]):
            cell_edges.append(np.linspace(lo, hi, cells + 1)[:-1])
        cell_edges.append(np.array([edges[-1]]))
        self.cell_edges = np.concatenate(cell_edges)
        n_cells = self.cell_edges.size - 1
        self._rows = np.zeros((n_cells, degree + 1))
        for k in range(n_cells):
            a, b = self.cell_edges[k], self.cell_edges[k + 1]
            half = 0.5 * (b - a)
            mid = 0.5 * (b + a)
            self._rows[k] = cheb.chebinterpolate(lambda s: fn(mid + half * s), degree)

    def __call__(self, z) -> np.ndarray:
        z = np.atleast_1d(np.asarray(z, dtype=float))
        k = np.clip(np.searchsorted(self.cell_edges, z, side="right") - 1, 0, self._rows.shape[0] - 1)
        a = self.cell_edges[k]
        b = self.cell_edges[k + 1]
        s = (2.0 * z - a - b) / (b - a)
        return _chebval_rows(s, self._rows[k])
