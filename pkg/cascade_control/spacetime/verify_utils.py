"""
Checks on the fields: triple zeros of nu, window signs, PDE residuals and the choice of eps.
"""
from __future__ import annotations

import logging
from typing import List, Optional, Sequence, Tuple

import numpy as np

from ..audit.audit_utils import log_spacetime_event
from ..audit.models import AuditAction
from ..core.quadrature import central_weights
from ..errors import AdmissibilityError
from ..stationary.schemas import StationaryProfiles
from ..stationary.source_utils import NEAR_ONE_FLOOR
from .coefficients_utils import m_hat_jet, nu_hat_jet
from .fields_utils import ABCFields
from .schemas import (EpsilonAttempt, FieldResidualReport, FieldResidualRow, SpacetimeParams,
                      TripleZeroReport, TripleZeroRow, Window, WindowCase)
from .weights_utils import TimeWeights, layout_windows

logger = logging.getLogger(__name__)

TRIPLE_ZERO_TOL = 1e-6
FD_STEP = 1e-3
WINDOW_SAMPLES = 9
OFF_SAMPLES = 240
RESIDUAL_STEPS = (2e-3, 1e-3, 5e-4)
MIN_SLOPE = 1.8


def time_grid(n: int) -> np.ndarray:
    """n interior points of (-1, 1) off the flat rims."""
    t = np.linspace(-1.0, 1.0, n + 2)[1:-1]
    return t[TimeWeights.safe(t)]


# ============================================================================
# TRIPLE ZERO
# ============================================================================

def fd_step(profiles: StationaryProfiles, w: Window) -> float:
    """Difference step at a generic centre: FD_STEP capped by the plateau and the repair core."""
    h = min(FD_STEP, 0.1 * w.plateau)
    for record in profiles.repairs:
        if abs(record.zeta - w.center) < record.eta:
            h = min(h, 0.2 * record.epsilon)
    return h


def verify_triple_zero(fields: ABCFields, index: int, t: Optional[np.ndarray] = None,
                       tol: float = TRIPLE_ZERO_TOL) -> TripleZeroReport:
    """
    nu, nu_z, nu_zz vanish at the centre of a generic window and nu_zzz keeps the sign of C'(rho).

    Values are reported for nuhat = nu / f0^(1/3); the tolerances are relative
    to |nuhat_zzz| at the same t. nu_zz is cross-checked by a central
    difference of nuhat_z with a step inside the window plateau and inside the
    core of a repaired zero.
    """
    w = fields.windows[index]
    if w.case != WindowCase.GENERIC:
        raise ValueError(f"window {index} is a {w.case.value} window")
    coeff = fields.coefficients[index]
    t = time_grid(fields.params.check_t_points) if t is None else np.atleast_1d(np.asarray(t, dtype=float))
    rho = np.full(t.shape, w.center)

    jet = nu_hat_jet(fields.profiles, t, rho, 3, fields.epsilon, coeff)
    nu, nu_z, nu_zz, nu_zzz = (jet.partial(0, j) for j in range(4))

    h = fd_step(fields.profiles, w)
    plus = nu_hat_jet(fields.profiles, t, rho + h, 1, fields.epsilon, coeff).partial(0, 1)
    minus = nu_hat_jet(fields.profiles, t, rho - h, 1, fields.epsilon, coeff).partial(0, 1)
    fd = (plus - minus) / (2.0 * h)

    report = TripleZeroReport(center=w.center, tolerance=tol)
    scale = np.maximum(np.abs(nu_zzz), 1e-300)
    for k in range(t.size):
        report.rows.append(TripleZeroRow(t=t[k], nu=nu[k], nu_z=nu_z[k], nu_zz=nu_zz[k],
                                         nu_zzz=nu_zzz[k], nu_zz_fd=fd[k]))
        small = max(abs(nu[k]), abs(nu_z[k]), abs(nu_zz[k])) <= tol * scale[k]
        if not small or np.sign(nu_zzz[k]) != w.c_sign:
            report.offending_t.append(float(t[k]))
    report.fd_mismatch = float(np.max(np.abs(fd - nu_zz) / scale))
    if report.offending_t:
        logger.warning("triple zero at %.6g fails for %d times (first t = %.4g)",
                       w.center, len(report.offending_t), report.offending_t[0])
    return report


# ============================================================================
# WINDOW SIGNS
# ============================================================================

def _window_points(fields: ABCFields, index: int, t: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Generic windows are sampled across, the axis and 1/2 windows on their plateau."""
    w = fields.windows[index]
    reach = w.half_width if w.case == WindowCase.GENERIC else w.plateau
    z = np.linspace(max(w.center - reach, 0.0), w.center + reach, WINDOW_SAMPLES + 2)[1:-1]
    if w.case == WindowCase.AXIS:
        z = np.concatenate([[0.0], z])
    T, Z = np.meshgrid(t, z, indexing="ij")
    return T.ravel(), Z.ravel()


def _off_window_points(fields: ABCFields, t: np.ndarray, samples: int = OFF_SAMPLES) -> Tuple[np.ndarray, np.ndarray]:
    """Points off every plateau: the complement of the windows plus their rims."""
    z = np.linspace(0.0, 1.0, samples + 2)[1:-1]
    keep = 1.0 - z * z > NEAR_ONE_FLOOR
    for w in fields.windows:
        keep &= ~w.on_plateau(z)
    z = z[keep]
    T, Z = np.meshgrid(t, z, indexing="ij")
    return T.ravel(), Z.ravel()


def window_checks(fields: ABCFields, triple_zero: bool = True) -> EpsilonAttempt:
    """
    Sign checks for one eps.

    generic windows: sign(M) = sign(G(rho)) (b has the sign of B) and the triple zero holds
    1/2 and axis:    on the plateau the remainder factor of M keeps its sign and c has the sign of C
    off plateaus:    sign(M) = sign(G) and sign(nu) = sign(C), with the window terms where they act
    """
    attempt = EpsilonAttempt(epsilon=fields.epsilon)
    t = time_grid(fields.params.check_t_points)
    profiles = fields.profiles
    for index, w in enumerate(fields.windows):
        key = f"{w.case.value}@{w.center:.6f}"
        coeff = fields.coefficients[index]
        T, Z = _window_points(fields, index, t)
        if w.case == WindowCase.GENERIC:
            m = m_hat_jet(profiles, T, Z, 0, 0, fields.epsilon, coeff).value
            attempt.checks[f"M_sign:{key}"] = bool(np.all(np.sign(m) == w.m_sign))
            attempt.details[f"M_min:{key}"] = float(np.min(w.m_sign * m))
            if triple_zero:
                report = verify_triple_zero(fields, index, t)
                attempt.checks[f"triple_zero:{key}"] = report.passed
                attempt.details[f"fd_mismatch:{key}"] = report.fd_mismatch
        else:
            m = fields.m_tilde(index, T, Z).value
            c = fields.c_hat(index, T, Z)
            attempt.checks[f"M_sign:{key}"] = bool(np.all(np.sign(m) == w.m_sign))
            attempt.checks[f"c_sign:{key}"] = bool(np.all(np.sign(c) == w.c_sign))
            attempt.details[f"c_min:{key}"] = float(np.min(w.c_sign * c))

    T, Z = _off_window_points(fields, t)
    m = fields.m_hat(T, Z).value
    attempt.checks["M_sign:off_windows"] = bool(np.all(np.sign(m) == np.sign(profiles.G(Z))))
    nu = fields.nu_hat(T, Z).value
    attempt.checks["c_sign:off_windows"] = bool(np.all(np.sign(nu) == np.sign(profiles.C(Z))))
    return attempt


def choose_epsilon(profiles: StationaryProfiles, params: SpacetimeParams,
                   candidates: Optional[Sequence[float]] = None) -> Tuple[ABCFields, List[EpsilonAttempt]]:
    """
    First eps of the descending candidates whose fields pass every window check.

    Raises:
        AdmissibilityError: every candidate fails (failures listed per eps)
    """
    candidates = list(params.epsilon_candidates if candidates is None else candidates)
    windows = layout_windows(profiles, params.window_fraction)
    attempts: List[EpsilonAttempt] = []
    for epsilon in candidates:
        fields = ABCFields(profiles, params, epsilon, windows)
        attempt = window_checks(fields)
        attempts.append(attempt)
        if attempt.passed:
            logger.info("eps = %g accepted after %d attempts", epsilon, len(attempts))
            log_spacetime_event(AuditAction.TUNE, "epsilon", {
                "epsilon": epsilon, "rejected": [a.epsilon for a in attempts[:-1]],
            })
            return fields, attempts
        logger.info("eps = %g rejected: %s", epsilon, ", ".join(attempt.failures()))

    failures = {str(a.epsilon): a.failures() for a in attempts}
    log_spacetime_event(AuditAction.TUNE, "epsilon", {"failures": failures}, success=False,
                        error_message="no admissible epsilon")
    raise AdmissibilityError("no candidate epsilon passes the window checks", {"failures": failures})


# ============================================================================
# PDE RESIDUALS
# ============================================================================

def pair_slope(h_coarse: float, e_coarse: float, h_fine: float, e_fine: float) -> float:
    """log(e_coarse / e_fine) / log(h_coarse / h_fine); inf when an error vanishes."""
    if e_coarse <= 0.0 or e_fine <= 0.0:
        return float("inf")
    return float(np.log(e_coarse / e_fine) / np.log(h_coarse / h_fine))


def _residuals(fields: ABCFields, t: np.ndarray, z: np.ndarray, h: float, half_width: int) -> FieldResidualRow:
    offsets = np.arange(-half_width, half_width + 1, dtype=float)
    d1 = central_weights(half_width, 1)
    d2 = central_weights(half_width, 2)
    r = z * fields.epsilon * TimeWeights.lam(t)
    hr = h * fields.epsilon * TimeWeights.lam(t)
    n, m = t.size, offsets.size

    t_st = np.concatenate([(t[:, None] + offsets[None, :] * h).ravel(), np.repeat(t, m)])
    r_st = np.concatenate([np.repeat(r, m), (r[:, None] + offsets[None, :] * hr[:, None]).ravel()])
    a, b, c = fields.eval_abc(t_st, r_st)
    a_t, a_r = a[: n * m].reshape(n, m), a[n * m:].reshape(n, m)
    b_t, b_r = b[: n * m].reshape(n, m), b[n * m:].reshape(n, m)
    centre = half_width
    b0, c0 = b_r[:, centre], c[n * m:].reshape(n, m)[:, centre]

    def heat(ft, fr):
        dt = ft @ d1 / h
        dr = fr @ d1 / hr
        drr = fr @ d2 / hr ** 2
        return dt - drr - (fields.N - 1) / r * dr

    res_a = heat(a_t, a_r) - b0 ** 3
    res_b = heat(b_t, b_r) - c0 ** 3
    return FieldResidualRow(
        h=h,
        residual_a=float(np.max(np.abs(res_a)) / max(np.max(np.abs(b0 ** 3)), 1e-300)),
        residual_b=float(np.max(np.abs(res_b)) / max(np.max(np.abs(c0 ** 3)), 1e-300)),
    )


def clear_of_windows(fields: ABCFields, z, clearance) -> np.ndarray:
    """Mask of the z at least ``clearance`` away from every window and repair interval."""
    z = np.asarray(z, dtype=float)
    keep = np.ones(z.shape, dtype=bool)
    for w in fields.windows:
        keep &= np.abs(z - w.center) >= w.half_width + clearance
    for record in fields.profiles.repairs:
        keep &= np.abs(z - record.zeta) >= record.eta + clearance
    return keep


def clear_samples(fields: ABCFields, clearance: float, count: int = 12, lo: float = 0.1,
                  hi: float = 0.8) -> np.ndarray:
    """Up to ``count`` z in [lo, hi] clear of the windows and repair intervals."""
    z = np.linspace(lo, hi, 701)
    z = z[clear_of_windows(fields, z, clearance)]
    if z.size == 0:
        raise ValueError(f"no residual sample in [{lo}, {hi}] clear of the windows")
    picks = np.unique(np.linspace(0, z.size - 1, min(count, z.size)).round().astype(int))
    return z[picks]


def verify_field_residuals(fields: ABCFields, steps: Sequence[float] = RESIDUAL_STEPS,
                           t_samples: Optional[np.ndarray] = None, z_samples: Optional[np.ndarray] = None,
                           half_width: int = 1) -> FieldResidualReport:
    """
    Relative residuals of a_t - Delta a = b^3 and b_t - Delta b = c^3 on a (t, z) grid.

    Central stencils of 2*half_width + 1 points in t and in r. The default z
    samples keep the stencils off the windows and the repair intervals and
    avoid the axis band, so (N-1)/r is never evaluated at r = 0. The slope of
    each residual is the smallest over consecutive steps.
    """
    t_samples = np.linspace(-0.5, 0.5, 5) if t_samples is None else np.asarray(t_samples, dtype=float)
    if z_samples is None:
        z_samples = clear_samples(fields, 5.0 * half_width * max(steps))
    z_samples = np.asarray(z_samples, dtype=float)
    T, Z = np.meshgrid(t_samples, z_samples, indexing="ij")
    T, Z = T.ravel(), Z.ravel()

    report = FieldResidualReport(epsilon=fields.epsilon, points=T.size)
    for h in steps:
        report.rows.append(_residuals(fields, T, Z, h, half_width))
    for key in ("residual_a", "residual_b"):
        pairs = zip(report.rows, report.rows[1:])
        slopes = [pair_slope(coarse.h, getattr(coarse, key), fine.h, getattr(fine, key)) for coarse, fine in pairs]
        if slopes:
            report.slopes[key] = min(slopes)

    t_out = np.array([-1.2, -0.5, 0.0, 0.5, 1.0, 1.3])
    r_out = 1.5 * fields.epsilon * np.maximum(TimeWeights.lam(t_out), 1e-3)
    a, b, c = fields.eval_abc(np.concatenate([t_out, t_out]), np.concatenate([r_out, -r_out]))
    report.outside_max = float(max(np.max(np.abs(a)), np.max(np.abs(b)), np.max(np.abs(c))))
    log_spacetime_event(AuditAction.VERIFY, "residuals", report.model_dump(mode="json"))
    return report
