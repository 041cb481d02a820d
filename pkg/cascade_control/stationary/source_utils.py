"""
The source function G of the stationary construction and the tuning of kappa.

G is negative on (0, 1/2), positive on (1/2, 1) and built from three frozen
closed forms joined by exponential blends. kappa scales two flat bumps on
the blends so that the weighted integral of G over (0, 1) vanishes.
"""
from __future__ import annotations

import logging
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import integrate, optimize

from ..audit.audit_utils import log_stationary_event
from ..audit.models import AuditAction
from ..core.jet import Jet, stack_pieces
from ..core.piecewise import Parity, Piece, PiecewiseAnalytic
from ..errors import ConstructionError, ConvergenceError
from .schemas import StationaryParams

logger = logging.getLogger(__name__)

# 1 - z^2 below this is treated as the flat end of the profiles
NEAR_ONE_FLOOR = 2e-3
KAPPA_WIDEN_LIMIT = 1e12


# ============================================================================
# CUTOFFS
# ============================================================================

def flat_exp(x: Jet, scale: float = 1.0) -> Jet:
    """e^(-scale/x) for x > 0, identically 0 (all coefficients) for x <= 0."""
    x0 = x.value
    safe = x0 > scale / 600.0
    xs = Jet(np.where(safe, x.coeffs, 1.0))
    out = (-scale / xs).exp()
    return Jet(np.where(safe, out.coeffs, 0.0))


def flat_exp_values(x: np.ndarray, scale: float = 1.0) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    safe = x > scale / 600.0
    return np.where(safe, np.exp(-scale / np.where(safe, x, 1.0)), 0.0)


def smoothstep(x: Jet, steepness: float = 1.0) -> Jet:
    """C-infinity step: 0 for x <= 0, 1 for x >= 1."""
    a = flat_exp(x, steepness)
    b = flat_exp(1.0 - x, 1.0)
    return a / (a + b)


def smoothstep_values(x: np.ndarray, steepness: float = 1.0) -> np.ndarray:
    a = flat_exp_values(x, steepness)
    b = flat_exp_values(1.0 - np.asarray(x, dtype=float), 1.0)
    return a / (a + b)


def near_one(expr: Callable[[Jet], Jet], extra: int = 0) -> Callable[[np.ndarray, int], Jet]:
    """
    Jet function that evaluates ``expr`` only where 1 - z^2 > NEAR_ONE_FLOOR.

    ``extra`` is the number of orders ``expr`` loses (derivatives taken inside).
    """
    def jet_fn(z: np.ndarray, order: int) -> Jet:
        z = np.asarray(z, dtype=float)
        safe = 1.0 - z * z > NEAR_ONE_FLOOR
        jets = []
        if np.any(safe):
            jets.append((safe, expr(Jet.z_variable(z[safe], order + extra))))
        return stack_pieces(order, z.size, jets)
    return jet_fn


# ============================================================================
# CLOSED FORMS
# ============================================================================

def axis_source(z: Jet, N: int) -> Jet:
    return -8.0 * (6 + N) * z ** 6


def middle_source(z: Jet) -> Jet:
    return z ** 3 * (z - 0.5) ** 3


def near_one_rational(z: Jet, N: int) -> Jet:
    """q(z) with G = q(z) e^(-1/(1 - z^2)) next to z = 1."""
    u = 1.0 - z * z
    return (-2.0 + 6.0 * z ** 4) / u ** 4 - 2.0 * (N - 1) / u ** 2


def near_one_source(z: Jet, N: int) -> Jet:
    return near_one_rational(z, N) * flat_exp(1.0 - z * z, 1.0)


def near_one_root(N: int) -> float:
    """Zero z_R in (1/2, 1) of -2 + 6z^4 - 2(N-1)(1 - z^2)^2."""
    def f(z):
        return -2.0 + 6.0 * z ** 4 - 2.0 * (N - 1) * (1.0 - z * z) ** 2
    return float(optimize.brentq(f, 0.5, 1.0, xtol=1e-15))


def left_bump(z: Jet, delta: float) -> Jet:
    return flat_exp(z - delta, 1.0) * flat_exp(1.0 - 2.0 * delta - 2.0 * z, 1.0)


def right_bump(z: Jet, delta: float) -> Jet:
    return flat_exp(2.0 * z - 1.0 - 2.0 * delta, 1.0) * flat_exp(1.0 - delta - z, 1.0)


# ============================================================================
# G
# ============================================================================

class SourceProfile(PiecewiseAnalytic):
    """G together with the parameters and the kappa it was built with."""

    def __init__(self, pieces: Sequence[Piece], params: StationaryParams, z_R: float, kappa: float = 0.0):
        super().__init__(pieces, Parity.EVEN, "G")
        self.params = params
        self.z_R = z_R
        self.kappa = kappa

    def splice(self, piece: Piece) -> "SourceProfile":
        spliced = super().splice(piece)
        return SourceProfile(spliced.pieces, self.params, self.z_R, self.kappa)


def _check_sign(G: PiecewiseAnalytic, lo: float, hi: float, label: str, samples: int = 2001) -> None:
    """Sample (z - 1/2) G(z) > 0 on the open interval (lo, hi)."""
    z = np.linspace(lo, hi, samples)[1:-1]
    values = (z - 0.5) * G(z)
    bad = values <= 0.0
    if np.any(bad):
        z_bad = float(z[np.argmax(bad)])
        raise ConstructionError(
            f"sign condition (z - 1/2)G > 0 fails on '{label}' ({lo:.6g}, {hi:.6g}) at z = {z_bad:.6g}",
            {"piece": label, "interval": [lo, hi], "z": z_bad},
        )


def build_base_G(params: StationaryParams) -> SourceProfile:
    """
    Build the source G with kappa = 0.

    Pieces, left to right: the axis form -8(6+N)z^6 on [0, delta], a blend
    into z^3(z-1/2)^3, the middle form on [1/2-delta, 1/2+delta], the middle
    form again up to z_R, a blend into the near-one form, and the near-one
    form q(z)e^(-1/(1-z^2)) on [1-delta, 1). Zero beyond 1.

    Raises:
        ConstructionError: delta too large for the right blend to start
            after the zero of the near-one form
    """
    N, delta, c = params.N, params.delta, params.blend_steepness
    z_R = near_one_root(N)
    if z_R >= 1.0 - delta:
        log_stationary_event(AuditAction.BUILD, "G", {"delta": delta, "z_R": z_R}, success=False,
                             error_message="right blend is empty")
        raise ConstructionError(
            f"delta = {delta} too large: near-one form is negative on ({1.0 - delta:.6g}, {z_R:.6g})",
            {"interval": [1.0 - delta, z_R], "delta": delta, "z_R": z_R},
        )
    s = max(z_R, 0.5 + delta)
    left_width = 0.5 - 2.0 * delta
    right_width = 1.0 - delta - s

    def left_blend(z: Jet) -> Jet:
        S = smoothstep((z - delta) / left_width, c)
        return (1.0 - S) * axis_source(z, N) + S * middle_source(z)

    def right_blend(z: Jet) -> Jet:
        S = smoothstep((z - s) / right_width, c)
        return (1.0 - S) * middle_source(z) + S * near_one_source(z, N)

    pieces: List[Piece] = [
        Piece.analytic(0.0, delta, lambda z: axis_source(z, N), "axis"),
        Piece.analytic(delta, 0.5 - delta, left_blend, "left_blend"),
        Piece.analytic(0.5 - delta, 0.5 + delta, middle_source, "middle"),
    ]
    if s > 0.5 + delta:
        pieces.append(Piece.analytic(0.5 + delta, s, middle_source, "right_plateau"))
    pieces.append(Piece.analytic(s, 1.0 - delta, right_blend, "right_blend"))
    pieces.append(Piece(1.0 - delta, 1.0, near_one(lambda z: near_one_source(z, N)), "near_one"))

    G = SourceProfile(pieces, params, z_R)
    _check_sign(G, delta, 0.5 - delta, "left_blend")
    _check_sign(G, 0.5 + delta, 1.0 - delta, "right_blend")
    log_stationary_event(AuditAction.BUILD, "G", {"N": N, "delta": delta, "z_R": z_R, "pieces": G.labels()})
    return G


def _with_bump(piece: Piece, bump: Callable[[Jet], Jet], weight: float) -> Piece:
    def jet_fn(z: np.ndarray, order: int) -> Jet:
        return piece.jet(z, order) + weight * bump(Jet.z_variable(z, order))
    return Piece(piece.lo, piece.hi, jet_fn, piece.label)


def apply_kappa_bumps(Gbar: SourceProfile, kappa: float) -> SourceProfile:
    """
    G_kappa = Gbar + min(kappa, 0) * left bump + max(kappa, 0) * right bump.

    The frozen pieces are untouched; the sign condition is re-checked by
    sampling on both blends.
    """
    if Gbar.kappa != 0.0:
        raise ValueError("apply_kappa_bumps expects the base source (kappa = 0)")
    delta = Gbar.params.delta
    low, high = min(kappa, 0.0), max(kappa, 0.0)
    pieces = []
    for piece in Gbar.pieces:
        if piece.label == "left_blend" and low != 0.0:
            piece = _with_bump(piece, lambda z: left_bump(z, delta), low)
        elif piece.label in ("right_plateau", "right_blend") and high != 0.0:
            piece = _with_bump(piece, lambda z: right_bump(z, delta), high)
        pieces.append(piece)
    G = SourceProfile(pieces, Gbar.params, Gbar.z_R, kappa)
    _check_sign(G, delta, 0.5 - delta, "left_blend")
    _check_sign(G, 0.5 + delta, 1.0 - delta, "right_blend")
    return G


# ============================================================================
# KAPPA
# ============================================================================

class KappaIntegral:
    """
    kappa -> int_0^1 s^(N-1) G_kappa(s) ds.

    The map is I0 + min(kappa, 0) P_L + max(kappa, 0) P_R with P_L, P_R > 0,
    so the three integrals are computed once with adaptive quadrature.
    """

    def __init__(self, Gbar: SourceProfile):
        params = Gbar.params
        N, delta, tol = params.N, params.delta, params.quadrature_tol
        self.Gbar = Gbar

        def weighted(fn):
            return lambda s: s ** (N - 1) * float(fn(np.array([s])).ravel()[0])

        self.I0 = 0.0
        for piece in Gbar.pieces:
            value = lambda z, p=piece: p.jet(z, 0).value
            self.I0 += self._quad(weighted(value), piece.lo, piece.hi, tol, piece.label)
        left = lambda z: left_bump(Jet.z_variable(z, 0), delta).value
        right = lambda z: right_bump(Jet.z_variable(z, 0), delta).value
        self.P_L = self._quad(weighted(left), delta, 0.5 - delta, tol, "left_bump")
        self.P_R = self._quad(weighted(right), 0.5 + delta, 1.0 - delta, tol, "right_bump")

    @staticmethod
    def _quad(fn, lo: float, hi: float, tol: float, label: str) -> float:
        try:
            value, err = integrate.quad(fn, lo, hi, epsabs=tol * 1e-4, epsrel=1e-14, limit=800)
        except Exception as e:
            raise ConstructionError(f"quadrature failed on '{label}': {e}", {"piece": label}) from e
        if err > tol:
            logger.warning("quadrature error estimate %.3g above tolerance on %s", err, label)
        return float(value)

    def __call__(self, kappa: float) -> float:
        return self.I0 + min(kappa, 0.0) * self.P_L + max(kappa, 0.0) * self.P_R


def kappa_integral(Gbar: SourceProfile, kappa: float) -> float:
    return KappaIntegral(Gbar)(kappa)


def widen_bracket(fn: Callable[[float], float], bracket: Tuple[float, float]) -> Tuple[float, float]:
    """Multiply both ends by 10 until fn changes sign (ends grow up to 1e12)."""
    lo, hi = float(bracket[0]), float(bracket[1])
    f_lo, f_hi = fn(lo), fn(hi)
    while f_lo * f_hi > 0.0:
        if max(abs(lo), abs(hi)) >= KAPPA_WIDEN_LIMIT:
            raise ConvergenceError(
                "no sign change of the kappa integral in the bracket",
                history=[f_lo, f_hi],
                context={"bracket": [lo, hi], "integrals": [f_lo, f_hi]},
            )
        lo = lo * 10.0 if lo < 0 else -1.0
        hi = hi * 10.0 if hi > 0 else 1.0
        f_lo, f_hi = fn(lo), fn(hi)
    return lo, hi


def tune_kappa(params: StationaryParams, Gbar: Optional[SourceProfile] = None) -> float:
    """
    kappa* with int_0^1 s^(N-1) G_kappa*(s) ds = 0.

    The integral is linear on each side of 0, so once the bracket holds a sign
    change the root is -I0 / P_L or -I0 / P_R.

    Returns:
        kappa*

    Raises:
        ConvergenceError: no sign change up to |kappa| = 1e12, or the
            integral at kappa* exceeds quadrature_tol
    """
    Gbar = Gbar if Gbar is not None else build_base_G(params)
    integral = KappaIntegral(Gbar)
    lo, hi = widen_bracket(integral, params.kappa_bracket)
    if (lo, hi) != tuple(params.kappa_bracket):
        logger.info("kappa bracket widened to [%.3g, %.3g]", lo, hi)
    kappa = -integral.I0 / (integral.P_L if integral.I0 > 0.0 else integral.P_R)
    residual = integral(kappa)
    if abs(residual) > params.quadrature_tol:
        raise ConvergenceError(
            f"kappa root leaves the integral at {residual:.3g}",
            history=[residual],
            context={"kappa": kappa, "bracket": [lo, hi]},
        )
    log_stationary_event(AuditAction.TUNE, "kappa", {"kappa_star": kappa, "bracket": [lo, hi],
                                                      "residual": residual})
    return float(kappa)


# ============================================================================
# PLATEAU
# ============================================================================

def plateau_values(x: np.ndarray) -> np.ndarray:
    """1 on |x| <= 1/2, 0 on |x| >= 1, flat in between."""
    s = 2.0 * np.abs(np.asarray(x, dtype=float)) - 1.0
    blend = 1.0 - smoothstep_values(s)
    return np.where(s >= 1.0, 0.0, np.where(s <= 0.0, 1.0, blend))


def plateau(z: Jet, center: float, half_width: float) -> Jet:
    """
    Jet of plateau_values((z - center) / half_width).

    Coefficients are exact: the value is 1 with zero derivatives on the
    inner half and every coefficient is 0 outside the window.
    """
    side = np.where(z.value >= center, 1.0, -1.0)
    s = 2.0 * side * (z - center) / half_width - 1.0
    blend = 1.0 - smoothstep(s)
    one = np.zeros_like(blend.coeffs)
    one[0, 0] = 1.0
    coeffs = np.where(s.value >= 1.0, 0.0, np.where(s.value <= 0.0, one, blend.coeffs))
    return Jet(coeffs)
