"""
Piecewise-analytic functions on [0, hi] with even extension and compact support.
"""
from __future__ import annotations

from enum import Enum
from typing import Callable, List, Optional, Sequence

import numpy as np

from .jet import Jet


class Parity(str, Enum):
    EVEN = "even"
    NONE = "none"


# ============================================================================
# PIECES
# ============================================================================

class Piece:
    """
    One closed-form (or ODE-backed) piece on [lo, hi].

    ``jet_fn(z, order)`` returns a t-order 0 Jet at the points z.
    """

    def __init__(self, lo: float, hi: float, jet_fn: Callable[[np.ndarray, int], Jet], label: str):
        if not lo < hi:
            raise ValueError(f"empty piece '{label}' on [{lo}, {hi}]")
        self.lo = float(lo)
        self.hi = float(hi)
        self.jet_fn = jet_fn
        self.label = label

    @classmethod
    def analytic(cls, lo: float, hi: float, expr: Callable[[Jet], Jet], label: str) -> "Piece":
        """Piece given by an expression in the Jet variable z."""
        def jet_fn(z: np.ndarray, order: int) -> Jet:
            return expr(Jet.z_variable(z, order))
        return cls(lo, hi, jet_fn, label)

    def jet(self, z: np.ndarray, order: int) -> Jet:
        out = self.jet_fn(np.asarray(z, dtype=float), order)
        if out.z_order < order:
            raise ValueError(f"piece '{self.label}' returned order {out.z_order} < {order}")
        return out.truncate(0, order)

    def restricted(self, lo: float, hi: float) -> "Piece":
        return Piece(max(lo, self.lo), min(hi, self.hi), self.jet_fn, self.label)

    def __repr__(self) -> str:
        return f"Piece({self.label}, [{self.lo:.6g}, {self.hi:.6g}])"


# ============================================================================
# PIECEWISE FUNCTION
# ============================================================================

class PiecewiseAnalytic:
    """
    Ordered pieces covering [breakpoints[0], breakpoints[-1]).

    With even parity, evaluation reflects |z| and flips the sign of odd
    derivatives for z < 0. Outside the covered interval the function is 0.
    """

    def __init__(self, pieces: Sequence[Piece], parity: Parity = Parity.EVEN, name: str = ""):
        pieces = sorted(pieces, key=lambda p: p.lo)
        for left, right in zip(pieces[:-1], pieces[1:]):
            if abs(left.hi - right.lo) > 1e-14:
                raise ValueError(
                    f"{name}: pieces '{left.label}' and '{right.label}' do not share a breakpoint"
                )
        self.pieces: List[Piece] = list(pieces)
        self.parity = parity
        self.name = name
        self._edges = np.array([p.lo for p in self.pieces] + [self.pieces[-1].hi])

    @property
    def breakpoints(self) -> np.ndarray:
        return self._edges.copy()

    @property
    def support_end(self) -> float:
        return float(self._edges[-1])

    def piece_index(self, x: np.ndarray) -> np.ndarray:
        """Index of the piece containing each x, -1 outside the support."""
        idx = np.searchsorted(self._edges, x, side="right") - 1
        idx[(x < self._edges[0]) | (x >= self._edges[-1])] = -1
        return idx

    def jet(self, z, order: int) -> Jet:
        z = np.atleast_1d(np.asarray(z, dtype=float))
        flat = z.ravel()
        x = np.abs(flat) if self.parity == Parity.EVEN else flat
        coeffs = np.zeros((1, order + 1, flat.size))
        idx = self.piece_index(x)
        for k, piece in enumerate(self.pieces):
            mask = idx == k
            if np.any(mask):
                coeffs[:, :, mask] = piece.jet(x[mask], order).coeffs
        if self.parity == Parity.EVEN:
            negative = flat < 0
            if np.any(negative):
                coeffs[:, 1::2, negative] *= -1.0
        return Jet(coeffs.reshape((1, order + 1) + z.shape))

    def derivatives(self, z, order: int) -> np.ndarray:
        """Array of shape (order + 1, *z.shape) holding f, f', ..., f^(order)."""
        return self.jet(z, order).z_derivatives()

    def __call__(self, z):
        scalar = np.ndim(z) == 0
        values = self.jet(z, 0).value
        return float(values.ravel()[0]) if scalar else values

    def splice(self, piece: Piece) -> "PiecewiseAnalytic":
        """Replace the function on [piece.lo, piece.hi] by ``piece``."""
        kept: List[Piece] = []
        for p in self.pieces:
            if p.hi <= piece.lo or p.lo >= piece.hi:
                kept.append(p)
                continue
            if p.lo < piece.lo:
                kept.append(p.restricted(p.lo, piece.lo))
            if p.hi > piece.hi:
                kept.append(p.restricted(piece.hi, p.hi))
        kept.append(piece)
        return PiecewiseAnalytic(kept, self.parity, self.name)

    def labels(self) -> List[str]:
        return [p.label for p in self.pieces]

    def __repr__(self) -> str:
        return f"PiecewiseAnalytic({self.name}, pieces={self.labels()})"


def piecewise_from(
    edges: Sequence[float],
    builders: Sequence[Callable[[np.ndarray, int], Jet]],
    labels: Sequence[str],
    name: str,
    parity: Parity = Parity.EVEN,
) -> PiecewiseAnalytic:
    """Convenience constructor from consecutive edges and jet functions."""
    if len(edges) != len(builders) + 1 or len(labels) != len(builders):
        raise ValueError("edges, builders and labels do not line up")
    pieces = [Piece(edges[k], edges[k + 1], builders[k], labels[k]) for k in range(len(builders))]
    return PiecewiseAnalytic(pieces, parity, name)
