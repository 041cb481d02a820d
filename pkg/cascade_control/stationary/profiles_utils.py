"""
A, B and C from the tuned source G, and the zeros of C.

A solves A'' + (N-1)/z A' = G with A(1) = A'(1) = 0, B = -G^(1/3) and
C = -(B'' + (N-1)/z B')^(1/3). The frozen windows keep their factored
closed forms; the blends go through Jet arithmetic.
"""
from __future__ import annotations

import logging
from typing import List

import numpy as np
from scipy import optimize

from ..audit.audit_utils import log_stationary_event
from ..audit.models import AuditAction
from ..core.jet import Jet, signed_cbrt, stack_pieces
from ..core.piecewise import Parity, Piece, PiecewiseAnalytic
from ..core.quadrature import CumulativeIntegral
from ..errors import ConstructionError
from .schemas import CZero, StationaryParams, ZeroKind
from .source_utils import NEAR_ONE_FLOOR, SourceProfile, flat_exp, near_one, near_one_rational

logger = logging.getLogger(__name__)


# ============================================================================
# RADIAL OPERATOR
# ============================================================================

def over_z(jet: Jet, z: np.ndarray) -> Jet:
    """jet / z, one order lower; at z = 0 the jet must vanish (odd derivative of an even profile)."""
    z = np.asarray(z, dtype=float).ravel()
    order, t_order = jet.z_order - 1, jet.t_order
    at_axis = z == 0.0
    parts = []
    if np.any(~at_axis):
        Z = Jet.z_variable(z[~at_axis], order, t_order)
        parts.append((~at_axis, jet.select(~at_axis).truncate(None, order) / Z))
    if np.any(at_axis):
        parts.append((at_axis, jet.select(at_axis).shift_down_z()))
    return stack_pieces(order, z.size, parts, t_order)


def radial_laplacian(jet: Jet, z: np.ndarray, N: int) -> Jet:
    """f'' + (N-1)/z f' from a jet of f, two orders lower."""
    fp = jet.dz()
    out = fp.dz()
    if N != 1:
        out = out + (N - 1) * over_z(fp, z)
    return out


def radial_operator(f: PiecewiseAnalytic, z, order: int, N: int) -> Jet:
    """
    Jet of f'' + (N-1)/z f' at the points z, to the given order.

    Negative z are folded by parity before the operator is applied; the
    result is even when f is.
    """
    z = np.atleast_1d(np.asarray(z, dtype=float)).ravel()
    x = np.abs(z)
    out = radial_laplacian(f.jet(x, order + 2), x, N)
    negative = z < 0
    if np.any(negative):
        out.coeffs[:, 1::2, negative] *= -1.0
    return out


def _piece_laplacian(piece: Piece, z: np.ndarray, order: int, N: int) -> Jet:
    return radial_laplacian(piece.jet(z, order + 2), z, N)


# ============================================================================
# A
# ============================================================================

class QuadratureA:
    """
    A on (0, 1] from integrals of G anchored at 1:

        N = 1:  A = z I - J
        N = 2:  A = ln(z) I - L
        N > 2:  A = -I / ((N-2) z^(N-2)) + J / (N-2)

    with I = int_1^z s^(N-1) G, J = int_1^z s G, L = int_1^z s ln(s) G.
    """

    def __init__(self, G: PiecewiseAnalytic, N: int, cells: int = 32, degree: int = 24):
        self.G = G
        self.N = N
        edges = [e for e in G.breakpoints if e <= 1.0]
        self.I = CumulativeIntegral(lambda s: s ** (N - 1) * G(s), edges, 1.0, cells, degree)
        self.J = CumulativeIntegral(lambda s: s * G(s), edges, 1.0, cells, degree) if N != 2 else self.I
        self.L = None
        if N == 2:
            self.L = CumulativeIntegral(
                lambda s: np.where(s > 0, s * np.log(np.where(s > 0, s, 1.0)), 0.0) * G(s),
                edges, 1.0, cells, degree,
            )

    def __call__(self, z) -> np.ndarray:
        z = np.atleast_1d(np.asarray(z, dtype=float))
        I = self.I(z)
        if self.N == 1:
            return z * I - self.J(z)
        if self.N == 2:
            return np.log(z) * I - self.L(z)
        return -I / ((self.N - 2) * z ** (self.N - 2)) + self.J(z) / (self.N - 2)

    def jet(self, z: np.ndarray, order: int) -> Jet:
        """A' = z^(1-N) I, A = int A' with the quadrature values as constants."""
        z = np.asarray(z, dtype=float)
        N = self.N
        g = self.G.jet(z, max(order - 2, 0))
        Z = Jet.z_variable(z, max(order, 1))
        weighted = g if N == 1 else Z ** (N - 1) * g
        slope = weighted.integrate_z(self.I(z))
        if N > 1:
            slope = slope * Z.power(1.0 - N)
        return slope.integrate_z(self(z))


def a_quadrature(G: PiecewiseAnalytic, params: StationaryParams) -> QuadratureA:
    """Quadrature-only evaluator of A, kept for cross-checks against the closed forms."""
    return QuadratureA(G, params.N)


def integrate_A(G: PiecewiseAnalytic, params: StationaryParams) -> PiecewiseAnalytic:
    """
    A with closed forms at both ends.

    c0 - z^8 on [0, delta], the quadrature formulas on [delta, 1 - delta_A],
    e^(-1/(1 - z^2)) on [1 - delta_A, 1), zero beyond 1.

    Raises:
        ConstructionError: a quadrature piece returned non-finite values
    """
    delta, delta_A = params.delta, params.delta_A
    quad = a_quadrature(G, params)
    samples = np.linspace(delta, 1.0 - delta_A, 257)
    values = quad(samples)
    if not np.all(np.isfinite(values)):
        bad = G.piece_index(samples[~np.isfinite(values)])[0]
        label = G.pieces[bad].label if bad >= 0 else "?"
        raise ConstructionError(f"quadrature of A failed on piece '{label}'", {"piece": label})
    c0 = float(quad(np.array([delta]))[0] + delta ** 8)

    A = PiecewiseAnalytic(
        [
            Piece.analytic(0.0, delta, lambda z: c0 - z ** 8, "axis"),
            Piece(delta, 1.0 - delta_A, quad.jet, "quadrature"),
            Piece(1.0 - delta_A, 1.0, near_one(lambda z: flat_exp(1.0 - z * z, 1.0)), "near_one"),
        ],
        Parity.EVEN,
        "A",
    )
    jump = abs(float(quad(np.array([1.0 - delta_A]))[0]) - float(np.exp(-1.0 / (1.0 - (1.0 - delta_A) ** 2))))
    if jump > 1e3 * params.quadrature_tol:
        logger.warning("A: quadrature and closed form differ by %.3g at 1 - delta_A", jump)
    log_stationary_event(AuditAction.BUILD, "A", {"c0": c0, "outer_jump": jump})
    return A


# ============================================================================
# B AND C
# ============================================================================

def derive_B(G: SourceProfile) -> PiecewiseAnalytic:
    """B = -G^(1/3) piece by piece, factored on the frozen windows."""
    N = G.params.N
    k = (6.0 + N) ** (1.0 / 3.0)
    pieces = []
    for piece in G.pieces:
        if piece.label == "axis":
            pieces.append(Piece.analytic(piece.lo, piece.hi, lambda z: 2.0 * k * z * z, "axis"))
        elif piece.label == "middle":
            pieces.append(Piece.analytic(piece.lo, piece.hi, lambda z: -z * (z - 0.5), "middle"))
        elif piece.label == "near_one":
            expr = lambda z: -near_one_rational(z, N).cbrt() * flat_exp(1.0 - z * z, 1.0 / 3.0)
            pieces.append(Piece(piece.lo, piece.hi, near_one(expr), "near_one"))
        else:
            pieces.append(Piece(piece.lo, piece.hi,
                                lambda z, order, p=piece: -(p.jet(z, order).cbrt()), piece.label))
    B = PiecewiseAnalytic(pieces, Parity.EVEN, "B")
    log_stationary_event(AuditAction.BUILD, "B", {"pieces": B.labels()})
    return B


def _near_one_C(z: Jet, N: int) -> Jet:
    """
    C next to z = 1, factored as cbrt(-h) e^(-1/(9(1 - z^2))).

    With B = beta e^(-1/(3u)), u = 1 - z^2 and phi = -2z/(3u^2):
    B'' + (N-1)/z B' = h e^(-1/(3u)).
    """
    u = 1.0 - z * z
    beta = -near_one_rational(z, N).cbrt()
    phi = -2.0 * z / (3.0 * u * u)
    beta_p = beta.dz()
    phi_p = phi.dz()
    h = beta_p.dz() + 2.0 * beta_p * phi + beta * phi_p + beta * phi * phi
    if N != 1:
        h = h + (N - 1) * (beta_p + beta * phi) / z
    return (-h).cbrt() * flat_exp(u, 1.0 / 9.0)


def derive_C(B: PiecewiseAnalytic, G: SourceProfile) -> PiecewiseAnalytic:
    """C = -(B'' + (N-1)/z B')^(1/3) with the signed cube root."""
    N = G.params.N
    axis_value = -((4.0 * N) ** (1.0 / 3.0)) * (6.0 + N) ** (1.0 / 9.0)
    pieces = []
    for piece in B.pieces:
        if piece.label == "axis":
            pieces.append(Piece(piece.lo, piece.hi,
                                lambda z, order: Jet.constant(np.full(np.shape(z), axis_value), 0, order),
                                "axis"))
        elif piece.label == "middle":
            pieces.append(Piece.analytic(piece.lo, piece.hi,
                                         lambda z: (2.0 * N - (N - 1) / (2.0 * z)).cbrt(), "middle"))
        elif piece.label == "near_one":
            pieces.append(Piece(piece.lo, piece.hi, near_one(lambda z: _near_one_C(z, N), extra=2), "near_one"))
        else:
            pieces.append(Piece(piece.lo, piece.hi,
                                lambda z, order, p=piece: -(_piece_laplacian(p, z, order, N).cbrt()),
                                piece.label))
    C = PiecewiseAnalytic(pieces, Parity.EVEN, "C")
    log_stationary_event(AuditAction.BUILD, "C", {"axis_value": axis_value})
    return C


# ============================================================================
# ZEROS OF C
# ============================================================================

def blend_intervals(params: StationaryParams) -> List[tuple]:
    d = params.delta
    return [(d, 0.5 - d), (0.5 + d, 1.0 - d)]


def _check_frozen_windows(C: PiecewiseAnalytic, params: StationaryParams) -> None:
    d = params.delta
    windows = [
        ("axis", 0.0, d, -1.0),
        ("middle", 0.5 - d, 0.5 + d, 1.0),
        ("near_one", 1.0 - d, float(np.sqrt(1.0 - 2.0 * NEAR_ONE_FLOOR)), 1.0),
    ]
    for label, lo, hi, sign in windows:
        z = np.linspace(lo, hi, 2001)
        values = sign * C(z)
        if np.any(values <= 0.0):
            z_bad = float(z[np.argmax(values <= 0.0)])
            log_stationary_event(AuditAction.VERIFY, "C", {"window": label, "z": z_bad}, success=False,
                                 error_message="zero of C inside a frozen window")
            raise ConstructionError(
                f"C vanishes inside the frozen window '{label}' [{lo:.6g}, {hi:.6g}] near z = {z_bad:.6g}; "
                f"decrease delta",
                {"window": label, "interval": [lo, hi], "z": z_bad},
            )


def _classify(B: PiecewiseAnalytic, rho: float, N: int, slope_scale: float,
              params: StationaryParams) -> CZero:
    h = radial_operator(B, np.array([rho]), 3, N).z_derivatives()[:, 0]
    if abs(h[1]) > 1e-6 * slope_scale:
        return CZero(rho=rho, kind=ZeroKind.KINK, derivative=None, needs_repair=True)
    c_prime = float(-signed_cbrt(h[3] / 6.0))
    return CZero(rho=rho, kind=ZeroKind.SMOOTH, derivative=c_prime,
                 needs_repair=abs(c_prime) < params.repair_threshold)


def find_c_zeros(C: PiecewiseAnalytic, B: PiecewiseAnalytic, params: StationaryParams) -> List[CZero]:
    """
    Zeros of C on the two blends, found on H = B'' + (N-1)/z B'.

    Sign changes are refined with brentq; touching zeros are local minima of
    |H| below 1e-9 of its scale on the blend.

    Raises:
        ConstructionError: C vanishes on a frozen window
    """
    _check_frozen_windows(C, params)
    N = params.N

    def h_value(z):
        return float(radial_operator(B, np.array([z]), 0, N).value[0])

    zeros: List[CZero] = []
    for lo, hi in blend_intervals(params):
        z = np.linspace(lo, hi, params.zero_scan_points)[1:-1]
        h = radial_operator(B, z, 0, N).value
        scale = float(np.max(np.abs(h)))
        slope_scale = scale / (hi - lo)
        sign = np.sign(h)
        for i in np.nonzero(sign[:-1] * sign[1:] < 0)[0]:
            rho = float(optimize.brentq(h_value, z[i], z[i + 1], xtol=1e-15, rtol=4.0 * np.finfo(float).eps))
            zeros.append(_classify(B, rho, N, slope_scale, params))

        mag = np.abs(h)
        minima = np.nonzero((mag[1:-1] <= mag[:-2]) & (mag[1:-1] <= mag[2:]))[0] + 1
        for i in minima:
            if sign[i - 1] != sign[i + 1] or mag[i] > 1e-9 * scale:
                continue
            res = optimize.minimize_scalar(lambda s: abs(h_value(s)), bounds=(z[i - 1], z[i + 1]),
                                           method="bounded", options={"xatol": 1e-14})
            zeros.append(CZero(rho=float(res.x), kind=ZeroKind.TANGENTIAL, derivative=0.0, needs_repair=True))

    zeros.sort(key=lambda c: c.rho)
    log_stationary_event(AuditAction.VERIFY, "C.zeros",
                         {"rho": [c.rho for c in zeros], "kinds": [c.kind.value for c in zeros]})
    return zeros
