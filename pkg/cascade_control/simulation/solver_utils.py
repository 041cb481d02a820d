"""
Forward and adjoint solvers of the cascade on a Grid1D.

Every solver uses the same scheme: Crank-Nicolson on the diffusion and
Adams-Bashforth 2 (forward Euler on the first step) on the sources

    y^{n+1} = P (I - dt/2 L)^(-1) [(I + dt/2 L) y^n + dt (3/2 F^n - 1/2 F^{n-1})]

with P the projection that zeroes the Dirichlet nodes. The adjoint solver is
the exact transpose of the linearized recurrence in the weighted inner product
of the grid.
"""
from __future__ import annotations

import logging
from typing import Callable, Optional

import numpy as np

from ..audit.audit_utils import log_simulation_event
from ..audit.models import AuditAction
from ..errors import BlowUpError
from .operators_utils import CrankNicolson
from .schemas import AdjointResult, ControlBundle, FieldState, Grid1D, LinearCoefficients, Trajectory

logger = logging.getLogger(__name__)

DEFAULT_BOUND = 1e6

Forcing = Callable[[int, np.ndarray], np.ndarray]


def make_times(t_start: float, t_end: float, dt: float) -> np.ndarray:
    """Uniform grid from t_start to t_end whose step is at most dt."""
    if t_end <= t_start:
        raise ValueError(f"empty time interval ({t_start}, {t_end})")
    steps = max(1, int(np.ceil((t_end - t_start) / dt - 1e-9)))
    return np.linspace(t_start, t_end, steps + 1)


def _check_times(name: str, times: np.ndarray, other: np.ndarray) -> None:
    if other.shape != times.shape or not np.allclose(other, times, rtol=0.0, atol=1e-12):
        raise ValueError(f"{name} is sampled on a different time grid")


def _march(grid: Grid1D, y0: np.ndarray, times: np.ndarray, forcing: Forcing, bound: float,
           stride: int = 1, keep_all: bool = False) -> Trajectory:
    dt = float(times[1] - times[0])
    cn = CrankNicolson(grid, dt)
    P = grid.interior.astype(float)
    y = np.asarray(y0, dtype=float) * P
    previous: Optional[np.ndarray] = None
    snap_t, snaps = [times[0]], [y.copy()]
    steps = times.size - 1
    for n in range(steps):
        F = forcing(n, y) * P
        source = F if previous is None else 1.5 * F - 0.5 * previous
        y = cn.solve(cn.apply_explicit(y) + dt * source) * P
        previous = F
        peak = np.max(np.abs(y))
        if not np.isfinite(peak) or peak > bound:
            log_simulation_event(AuditAction.FAIL, "forward", {"t": float(times[n + 1]), "peak": float(peak)},
                                 success=False, error_message="blow-up")
            raise BlowUpError(f"state exceeds {bound:g} at t = {times[n + 1]:.6g}", float(times[n + 1]), bound)
        if keep_all or (n + 1) % stride == 0 or n + 1 == steps:
            snap_t.append(times[n + 1])
            snaps.append(y.copy())
    return Trajectory(times=np.asarray(snap_t), states=np.stack(snaps), steps=steps, dt=dt)


# ============================================================================
# FORWARD SOLVERS
# ============================================================================

def solve_forward_semilinear(grid: Grid1D, y0: FieldState, times: np.ndarray,
                             controls: Optional[ControlBundle] = None,
                             source: Optional[np.ndarray] = None,
                             background: Optional[np.ndarray] = None,
                             bound: float = DEFAULT_BOUND, stride: int = 1,
                             keep_all: bool = False) -> Trajectory:
    """
    alpha_t - Delta alpha = beta^3, beta_t - Delta beta = gamma^3, gamma_t - Delta gamma = forcing.

    Args:
        grid: spatial grid
        y0: state at times[0]
        times: uniform time grid
        controls: actuated controls on the same time grid
        source: extra forcing (n_times, 3, n_nodes), e.g. the reference control on gamma
        background: (n_times, 2, n_nodes) values of (betabar, gammabar); the
            sources become (betabar + beta)^3 - betabar^3 and
            (gammabar + gamma)^3 - gammabar^3 (the perturbation system)
        bound: blow-up bound on max |state|
        stride: snapshot stride
        keep_all: keep every step regardless of stride

    Raises:
        BlowUpError: the state leaves the bound
    """
    times = np.asarray(times, dtype=float)
    if controls is not None:
        _check_times("controls", times, controls.times)

    def forcing(n: int, y: np.ndarray) -> np.ndarray:
        F = np.zeros_like(y)
        if background is None:
            F[0] = y[1] ** 3
            F[1] = y[2] ** 3
        else:
            bb, gb = background[n, 0], background[n, 1]
            F[0] = 3.0 * bb * bb * y[1] + 3.0 * bb * y[1] ** 2 + y[1] ** 3
            F[1] = 3.0 * gb * gb * y[2] + 3.0 * gb * y[2] ** 2 + y[2] ** 3
        if controls is not None:
            F += controls.forcing(n)
        if source is not None:
            F += source[n]
        return F

    trajectory = _march(grid, y0.stack(), times, forcing, bound, stride, keep_all)
    logger.debug("semilinear solve: %d steps, max |y(T)| = %.3e", trajectory.steps, trajectory.final.sup_norm())
    return trajectory


def solve_forward_linearized(grid: Grid1D, y0: FieldState, coeffs: LinearCoefficients,
                             controls: Optional[ControlBundle] = None,
                             source: Optional[np.ndarray] = None,
                             bound: float = DEFAULT_BOUND, stride: int = 1,
                             keep_all: bool = False) -> Trajectory:
    """
    alpha_t - Delta alpha = 3 betabar^2 beta, beta_t - Delta beta = 3 gammabar^2 gamma,
    gamma_t - Delta gamma = forcing, on the time grid of ``coeffs``.
    """
    times = coeffs.times
    if controls is not None:
        _check_times("controls", times, controls.times)

    def forcing(n: int, y: np.ndarray) -> np.ndarray:
        F = np.zeros_like(y)
        F[0] = coeffs.beta2[n] * y[1]
        F[1] = coeffs.gamma2[n] * y[2]
        if controls is not None:
            F += controls.forcing(n)
        if source is not None:
            F += source[n]
        return F

    return _march(grid, y0.stack(), times, forcing, bound, stride, keep_all)


# ============================================================================
# ADJOINT
# ============================================================================

def solve_adjoint(grid: Grid1D, phi_T: np.ndarray, coeffs: LinearCoefficients,
                  template: Optional[ControlBundle] = None, keep_states: bool = False) -> AdjointResult:
    """
    Transpose of (y0, controls) -> y(t_end) of ``solve_forward_linearized``.

    For every y0 and every control u on the grid of ``template``,

        <y(t_end), phi_T> = <y0, initial> + sum_n dt <u^n, controls^n>

    with <., .> the weighted inner product of the grid, up to round-off.

    Args:
        grid: spatial grid
        phi_T: terminal adjoint data (3, n_nodes)
        coeffs: the coefficients of the forward map
        template: a bundle providing masks and ramp; without it the control
            adjoint is returned as zeros
        keep_states: also return the Euclidean adjoint states per step
    """
    times = coeffs.times
    steps = times.size - 1
    dt = float(times[1] - times[0])
    cn = CrankNicolson(grid, dt)
    P = grid.interior.astype(float)
    W = grid.weights
    if template is not None:
        _check_times("template", times, template.times)
        k = template.masks.shape[0]
    else:
        k = 1
    controls = np.zeros((times.size, k, grid.n_nodes))

    def a(n):
        return 1.0 if n == 0 else 1.5

    def b(n):
        return 0.0 if n == 0 else -0.5

    lam = np.asarray(phi_T, dtype=float) * W
    mu_next: Optional[np.ndarray] = None
    states = [lam.copy()] if keep_states else None
    for n in range(steps - 1, -1, -1):
        mu = cn.solve_transpose(lam * P)
        dF = dt * a(n) * mu
        if mu_next is not None:
            dF = dF + dt * b(n + 1) * mu_next
        q = dF * P
        lam = cn.apply_explicit_transpose(mu)
        lam[1] += coeffs.beta2[n] * q[0]
        lam[2] += coeffs.gamma2[n] * q[1]
        if template is not None:
            if k == 1:
                grad = (template.ramp[n] * template.masks[0] * q[2])[None, :]
            else:
                grad = template.ramp[n] * template.masks * q
            controls[n] = grad / (dt * W)
        mu_next = mu
        if keep_states:
            states.append(lam.copy())

    initial = lam * P / W
    return AdjointResult(initial=initial, controls=controls,
                         states=np.stack(states[::-1]) if keep_states else None)


def duality_gap(grid: Grid1D, coeffs: LinearCoefficients, y0: FieldState, controls: ControlBundle,
                phi_T: np.ndarray) -> float:
    """Relative gap |<y(T), phi_T> - <y0, p0> - sum dt <u, psi>| of the forward/adjoint pair."""
    forward = solve_forward_linearized(grid, y0, coeffs, controls, bound=np.inf)
    adjoint = solve_adjoint(grid, phi_T, coeffs, controls)
    lhs = grid.inner(forward.final.stack(), phi_T)
    rhs = grid.inner(y0.on_grid(grid).stack(), adjoint.initial)
    rhs += sum(controls.dt * grid.inner(controls.values[n], adjoint.controls[n]) for n in range(coeffs.times.size - 1))
    scale = max(abs(lhs), abs(rhs), 1e-300)
    return abs(lhs - rhs) / scale
