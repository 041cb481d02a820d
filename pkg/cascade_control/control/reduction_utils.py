"""
Post-processing of HUM controls: mollification, algebraic reduction to one
control, homogeneity scaling and the remainders of the perturbation system.
"""
from __future__ import annotations

import logging
from typing import Optional, Tuple

import numpy as np
from scipy.ndimage import convolve1d

from ..audit.audit_utils import log_control_event
from ..audit.models import AuditAction
from ..errors import AdmissibilityError
from ..reference.schemas import CouplingWindow
from ..simulation.operators_utils import radial_laplacian
from ..simulation.schemas import ControlBundle, FieldState, Grid1D, LinearCoefficients
from ..simulation.solver_utils import solve_forward_linearized
from ..stationary.source_utils import flat_exp_values
from .actuators_utils import region_indicator
from .schemas import ReductionResult, WitnessReport

logger = logging.getLogger(__name__)

BINOMIAL = np.array([0.25, 0.5, 0.25])


# ============================================================================
# MOLLIFICATION
# ============================================================================

def smooth_controls(bundle: ControlBundle, grid: Grid1D, window: CouplingWindow, cutoff_k: float,
                    mollifier_nodes: int = 2) -> ControlBundle:
    """
    Mollify the applied forcing in t and x, then multiply by e^(-k/(t2 - t))
    and by the smooth indicator of omega2 inside omega1.

    The result is a bundle whose masks are ones on the interior nodes and whose
    ramp is 1, so its values are the applied forcing itself.
    """
    forcing = np.stack([bundle.ramp[n] * bundle.masks * bundle.values[n] for n in range(bundle.times.size)])
    for _ in range(mollifier_nodes):
        forcing = convolve1d(forcing, BINOMIAL, axis=0, mode="constant")
        forcing = convolve1d(forcing, BINOMIAL, axis=2, mode="constant")
    t2 = bundle.window[1]
    cutoff = flat_exp_values(t2 - bundle.times, cutoff_k)
    indicator = region_indicator(grid, window.omega1)
    values = forcing * cutoff[:, None, None] * indicator[None, None, :]
    masks = np.repeat(grid.interior.astype(float)[None, :], bundle.masks.shape[0], axis=0)
    return ControlBundle(times=bundle.times, values=values, masks=masks, ramp=np.ones(bundle.times.size),
                         window=bundle.window)


# ============================================================================
# ALGEBRAIC REDUCTION
# ============================================================================

def _safe_divide(numerator: np.ndarray, coefficient: np.ndarray, floor: float, name: str,
                 times: np.ndarray, grid: Grid1D) -> np.ndarray:
    unsafe = (numerator != 0.0) & (np.abs(coefficient) < floor)
    if np.any(unsafe):
        n, j = np.argwhere(unsafe)[0]
        raise AdmissibilityError(
            f"division by {name} below the margin at t = {times[n]:.6g}, x = {grid.nodes[j]:.6g}",
            {"t": float(times[n]), "x": float(grid.nodes[j]), "value": float(coefficient[n, j]), "floor": floor},
        )
    return np.where(numerator != 0.0, numerator / np.where(unsafe | (coefficient == 0.0), 1.0, coefficient), 0.0)


def _heat(field: np.ndarray, times: np.ndarray, grid: Grid1D) -> np.ndarray:
    """f_t - Delta f with second-order differences (one-sided at the ends of the window)."""
    return np.gradient(field, times, axis=0, edge_order=2) - radial_laplacian(field, grid)


def algebraic_reduce(bundle: ControlBundle, betabar: np.ndarray, gammabar: np.ndarray, grid: Grid1D,
                     window: CouplingWindow, margin_fraction: float = 0.5) -> ReductionResult:
    """
    Solve for (0, beta~, gamma~) and u~ with

        -3 betabar^2 beta~                          = v1
        beta~_t - Delta beta~ - 3 gammabar^2 gamma~ = v2
        gamma~_t - Delta gamma~ - u~                = v3

    by beta~ = -v1 / (3 betabar^2), gamma~ = (beta~_t - Delta beta~ - v2) / (3 gammabar^2),
    u~ = gamma~_t - Delta gamma~ - v3. The outputs vanish where the v's do,
    in particular at t1 and t2 and off omega1.

    Args:
        bundle: three-control bundle (smoothed)
        betabar, gammabar: reference values (n_times, n_nodes) on the bundle's time grid
        window: coupling window with the margins mu_beta, mu_gamma
        margin_fraction: divisions are refused where |betabar| < fraction * mu_beta
            (resp. gammabar)

    Raises:
        AdmissibilityError: a nonzero numerator meets a coefficient below the margin
    """
    if bundle.masks.shape[0] != 3:
        raise ValueError("algebraic reduction needs a three-control bundle")
    times = bundle.times
    v = np.stack([bundle.forcing(n) for n in range(times.size)])
    v1, v2, v3 = v[:, 0], v[:, 1], v[:, 2]

    beta = -_safe_divide(v1, 3.0 * betabar ** 2, 3.0 * (margin_fraction * window.mu_beta) ** 2,
                         "3 betabar^2", times, grid)
    beta *= grid.interior
    gamma = _safe_divide(_heat(beta, times, grid) - v2, 3.0 * gammabar ** 2,
                         3.0 * (margin_fraction * window.mu_gamma) ** 2, "3 gammabar^2", times, grid)
    gamma *= grid.interior
    u = (_heat(gamma, times, grid) - v3) * grid.interior
    alpha = np.zeros_like(beta)

    residuals = {
        "alpha": float(np.max(np.abs(-3.0 * betabar ** 2 * beta - v1))),
        "beta": float(np.max(np.abs(_heat(beta, times, grid) - 3.0 * gammabar ** 2 * gamma - v2))),
        "gamma": float(np.max(np.abs(_heat(gamma, times, grid) - u - v3))),
    }
    log_control_event(AuditAction.SOLVE, "reduction", {"residuals": residuals, "u_max": float(np.max(np.abs(u)))})
    return ReductionResult(alpha=alpha, beta=beta, gamma=gamma, u=u, residuals=residuals)


def one_control_from_reduction(reduction: ReductionResult, bundle: ControlBundle, grid: Grid1D) -> ControlBundle:
    """The single control -u~ acting on gamma, on the bundle's time grid."""
    masks = grid.interior.astype(float)[None, :]
    return ControlBundle(times=bundle.times, values=-reduction.u[:, None, :], masks=masks,
                         ramp=np.ones(bundle.times.size), window=bundle.window)


# ============================================================================
# HOMOGENEITY
# ============================================================================

HOMOGENEITY = (9.0, 3.0, 1.0)


def homogeneity_scale(y0: FieldState, s: float) -> FieldState:
    """(s^9 alpha, s^3 beta, s gamma)."""
    if s <= 0.0:
        raise ValueError("s must be positive")
    return FieldState(t=y0.t, alpha=s ** 9 * y0.alpha, beta=s ** 3 * y0.beta, gamma=s * y0.gamma)


def homogeneity_unscale(y: np.ndarray, s: float) -> np.ndarray:
    """Inverse map on stacked states (..., 3, n_nodes)."""
    factors = np.array([s ** -p for p in HOMOGENEITY])
    return np.asarray(y) * factors[:, None]


def homogeneous_size(y: FieldState) -> float:
    """max(|alpha|^(1/9), |beta|^(1/3), |gamma|); scaling by s multiplies it by s."""
    a, b, c = y.component_norms()
    return max(a ** (1.0 / 9.0), b ** (1.0 / 3.0), c)


# ============================================================================
# PERTURBATION SYSTEM
# ============================================================================

def hat_system_residual(states: np.ndarray, background: np.ndarray) -> np.ndarray:
    """
    Remainders of the perturbation system beyond its linearization.

    Args:
        states: (n_times, 3, n_nodes) perturbation (alpha^, beta^, gamma^)
        background: (n_times, 2, n_nodes) values of (betabar, gammabar)

    Returns:
        (n_times, 3, n_nodes): (3 betabar beta^2 + beta^3, 3 gammabar gamma^2 + gamma^3, 0)
    """
    out = np.zeros_like(states)
    beta, gamma = states[:, 1], states[:, 2]
    out[:, 0] = 3.0 * background[:, 0] * beta ** 2 + beta ** 3
    out[:, 1] = 3.0 * background[:, 1] * gamma ** 2 + gamma ** 3
    return out


def linearized_zero_witness(grid: Grid1D, y0: FieldState, times: np.ndarray, first: ControlBundle,
                            second: ControlBundle, coeffs: Optional[LinearCoefficients] = None) -> WitnessReport:
    """
    alpha^(t2) of the linearization around 0 for two one-control bundles.

    Around 0 the coefficients vanish and the control on gamma never reaches
    alpha, so both values agree bit for bit.
    """
    coeffs = coeffs or LinearCoefficients.zeros(times, grid.n_nodes)
    runs = [solve_forward_linearized(grid, y0, coeffs, b, stride=times.size) for b in (first, second)]
    finals = [r.final for r in runs]
    return WitnessReport(alpha_first=finals[0].alpha, alpha_second=finals[1].alpha,
                         gamma_difference=float(np.max(np.abs(finals[0].gamma - finals[1].gamma))))


def window_indices(times: np.ndarray, window: Tuple[float, float]) -> Tuple[int, int]:
    """Indices of the grid times nearest to t1 and t2."""
    i1 = int(np.argmin(np.abs(times - window[0])))
    i2 = int(np.argmin(np.abs(times - window[1])))
    if i2 <= i1 + 2:
        raise AdmissibilityError("coupling window shorter than three time steps",
                                 {"t1": window[0], "t2": window[1], "dt": float(times[1] - times[0])})
    return i1, i2
