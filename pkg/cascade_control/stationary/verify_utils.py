"""
Checks of the stationary identities on built profiles.
"""
from __future__ import annotations

import logging
from typing import Dict, Optional, Sequence

import numpy as np
from scipy import integrate

from ..audit.audit_utils import log_stationary_event
from ..audit.models import AuditAction
from ..core.quadrature import central_weights
from .profiles_utils import a_quadrature, radial_laplacian
from .repair_utils import controllability_determinant
from .schemas import ResidualRow, StationaryProfiles, StationaryReport

logger = logging.getLogger(__name__)

DEFAULT_STEPS = (4e-3, 2e-3, 1e-3)
MIN_ORDER = 1.8


def weighted_integral(profiles: StationaryProfiles) -> float:
    """int_0^1 s^(N-1) G(s) ds of the final (tuned and repaired) source."""
    N, G = profiles.N, profiles.G
    total = 0.0
    for piece in G.pieces:
        f = lambda s, p=piece: s ** (N - 1) * float(p.jet(np.array([s]), 0).value[0])
        value, _ = integrate.quad(f, piece.lo, piece.hi, epsabs=1e-16, epsrel=1e-14, limit=800)
        total += value
    return float(total)


def fd_residuals(profiles: StationaryProfiles, h: float, z: Optional[np.ndarray] = None) -> ResidualRow:
    """Second-order central-difference residuals of both radial identities."""
    N = profiles.N
    z = np.linspace(0.05, 0.95, 37) if z is None else z
    w1 = central_weights(1, 1) / h
    w2 = central_weights(1, 2) / h ** 2
    stencil = z[None, :] + h * np.array([-1.0, 0.0, 1.0])[:, None]

    def residual(f, g):
        values = f(stencil)
        d1 = w1 @ values
        d2 = w2 @ values
        return float(np.max(np.abs(d2 + (N - 1) / z * d1 + g(z) ** 3)))

    return ResidualRow(h=h, residual_A=residual(profiles.A, profiles.B),
                       residual_B=residual(profiles.B, profiles.C))


def jet_residuals(profiles: StationaryProfiles, z: np.ndarray) -> Dict[str, float]:
    """Residuals with exact derivatives, relative to the size of the source terms."""
    N = profiles.N
    out = {}
    for name, f, g in (("A", profiles.A, profiles.B), ("B", profiles.B, profiles.C)):
        lap = radial_laplacian(f.jet(z, 2), z, N).value
        cube = g(z) ** 3
        scale = max(1.0, float(np.max(np.abs(cube))))
        out[name] = float(np.max(np.abs(lap + cube))) / scale
    return out


def convergence_slopes(rows: Sequence[ResidualRow]) -> Dict[str, float]:
    """Observed orders log(r_h / r_{h/2}) / log 2 between consecutive grids (minimum)."""
    slopes = {}
    for key in ("residual_A", "residual_B"):
        values = [getattr(r, key) for r in rows]
        orders = [np.log(values[k] / values[k + 1]) / np.log(rows[k].h / rows[k + 1].h)
                  for k in range(len(rows) - 1)]
        slopes[key] = float(min(orders))
    return slopes


def verify_stationary(profiles: StationaryProfiles, steps: Sequence[float] = DEFAULT_STEPS,
                      config_hash: Optional[str] = None) -> StationaryReport:
    """
    Residual tables and the boolean checks of the stationary construction.

    Report only: nothing raises, failed checks show up in ``report.checks``.
    """
    A, B, C, G = profiles.A, profiles.B, profiles.C, profiles.G
    params = profiles.params
    N, delta = params.N, params.delta
    report = StationaryReport(config_hash=config_hash)
    checks, values = report.checks, report.values

    grid = np.linspace(1e-3, 0.999, 2001)
    outside = np.concatenate([np.linspace(1.0, 1.5, 51), -np.linspace(1.0, 1.5, 51)])
    checks["support"] = all(np.all(f(outside) == 0.0) for f in (A, B, C))
    checks["even"] = all(np.array_equal(f(grid), f(-grid)) for f in (A, B, C))
    checks["nonempty_bc"] = bool(np.any((B(grid) != 0.0) & (C(grid) != 0.0)))

    z_outer = np.linspace(1.0 - params.delta_A, 1.0, 202)[1:-1]
    exact = np.exp(-1.0 / (1.0 - z_outer ** 2))
    values["A_outer_error"] = float(np.max(np.abs(A(z_outer) - exact)))
    checks["A_near_one"] = values["A_outer_error"] <= params.quadrature_tol

    z_axis = np.linspace(0.0, 0.5 * delta, 101)
    values["A_axis_error"] = float(np.max(np.abs(A(z_axis) - (profiles.c0 - z_axis ** 8))))
    checks["A_axis_closed_form"] = values["A_axis_error"] <= 1e-8
    z_cross = np.linspace(0.25 * delta, delta, 41)
    values["A_quadrature_gap"] = float(np.max(np.abs(a_quadrature(G, params)(z_cross) - A(z_cross))))
    checks["A_quadrature_cross_check"] = values["A_quadrature_gap"] <= 1e-7

    jets = jet_residuals(profiles, grid)
    values["jet_residual_A"], values["jet_residual_B"] = jets["A"], jets["B"]
    checks["identity_A"] = jets["A"] <= 1e-9
    checks["identity_B"] = jets["B"] <= 1e-9
    report.residuals = [fd_residuals(profiles, h) for h in steps]
    report.slopes = convergence_slopes(report.residuals)
    checks["residual_order"] = min(report.slopes.values()) >= MIN_ORDER

    left = grid[(grid > 0.0) & (grid < 0.5)]
    right = grid[(grid > 0.5) & (grid < 1.0 - delta)]
    d_half = B.derivatives(np.array([0.5]), 1)[:, 0]
    values["B_half"], values["B_prime_half"] = float(d_half[0]), float(d_half[1])
    checks["B_zero_set"] = bool(d_half[0] == 0.0 and np.all(B(left) > 0.0) and np.all(B(right) < 0.0))
    checks["B_slope_half"] = d_half[1] < 0.0
    values["C_half"] = float(C(0.5))
    checks["C_half_positive"] = values["C_half"] > 0.0

    step = 1e-5
    slopes = [(C(r + step) - C(r - step)) / (2 * step) for r in profiles.rhos()]
    values["min_abs_C_slope"] = float(min(np.abs(slopes))) if slopes else float("nan")
    sign = np.sign(C(grid))
    crossings = int(np.count_nonzero(sign[:-1] * sign[1:] < 0))
    checks["C_zero_slopes"] = all(abs(s) > 0.0 for s in slopes) and crossings == len(slopes)

    g_values = G(grid)
    cube = np.abs(B(grid) ** 3 + g_values) / np.maximum(1.0, np.abs(g_values))
    values["cube_consistency"] = float(np.max(cube))
    checks["cube_consistency"] = values["cube_consistency"] <= 1e-12

    values["kappa_integral"] = weighted_integral(profiles)
    checks["kappa_integral"] = abs(values["kappa_integral"]) <= params.quadrature_tol

    z_det = np.linspace(delta + 0.01, 0.5 - delta - 0.01, 25)
    det = controllability_determinant(B, z_det, N)
    expected = 9.0 * B(z_det) ** 4
    values["determinant_gap"] = float(np.max(np.abs(det - expected) / expected))
    checks["determinant"] = values["determinant_gap"] <= 1e-8

    log_stationary_event(AuditAction.VERIFY, "stationary", {"failed": report.failed_checks()},
                         success=report.passed,
                         error_message=None if report.passed else ", ".join(report.failed_checks()))
    return report
