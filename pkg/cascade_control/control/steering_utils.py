"""
Nonlinear steering: homogeneity scaling, frozen-source Picard iteration on
the perturbation system, composition with the reference control.
"""
from __future__ import annotations

import logging
from typing import List, Optional

import numpy as np

from ..audit.audit_utils import log_control_event
from ..audit.models import AuditAction
from ..config import ControlMode, ControlSection, SimulationSection
from ..errors import ConvergenceError
from ..reference.reference_utils import ReferenceTrajectory
from ..reference.schemas import CouplingWindow
from ..simulation.schemas import ControlBundle, FieldState, Grid1D
from ..simulation.solver_utils import make_times, solve_forward_semilinear
from .controllers import ControllerFactory
from .reduction_utils import (hat_system_residual, homogeneity_scale, homogeneity_unscale, homogeneous_size,
                              window_indices)
from .schemas import OuterStep, ScaleAttempt, SteeringResult

logger = logging.getLogger(__name__)


class ReferenceHorizon:
    """Reference samples on the full time grid and the window slice."""

    def __init__(self, traj: ReferenceTrajectory, grid: Grid1D, window: CouplingWindow, dt: float):
        self.times = make_times(0.0, traj.T, dt)
        self.states, self.ubar = traj.on_grid(grid, self.times)
        self.i1, self.i2 = window_indices(self.times, (window.t1, window.t2))
        self.window_times = self.times[self.i1:self.i2 + 1]
        self.background = self.states[self.i1:self.i2 + 1, 1:3]

    def window_start(self, y0: FieldState, s: float, grid: Grid1D, bound: float) -> np.ndarray:
        """Perturbation at t1 of the data scaled by s, driven by the reference control up to t1."""
        scaled = homogeneity_scale(y0, s).on_grid(grid)
        if self.i1 == 0:
            return scaled.stack() - self.states[0]
        pre = solve_forward_semilinear(grid, scaled, self.times[:self.i1 + 1], source=self.source()[:self.i1 + 1],
                                       bound=bound, stride=self.i1 + 1)
        return pre.final.stack() - self.states[self.i1]

    def source(self, uhat: Optional[np.ndarray] = None, scale: float = 1.0) -> np.ndarray:
        """Gamma forcing (ubar + uhat) / scale on the full grid, as a (n_times, 3, n_nodes) source."""
        out = np.zeros_like(self.states)
        out[:, 2] = self.ubar
        if uhat is not None:
            out[self.i1:self.i2 + 1, 2] += uhat
        return out / scale


def _terminal_size(y: np.ndarray, s: float) -> float:
    """Sup norm of the unscaled state."""
    return float(np.max(np.abs(homogeneity_unscale(y, s))))


def _steer_scaled(y0: FieldState, s: float, grid: Grid1D, horizon: ReferenceHorizon, controller,
                  section: ControlSection, bound: float, attempt: ScaleAttempt) -> ControlBundle:
    """
    Picard iteration for the data scaled by s; returns uhat on the window.

    Each pass freezes the cubic remainder of the previous hat solve as a
    source and aims the linear step at the accumulated terminal defect
    (target <- target - y(t2)).
    """
    y1 = horizon.window_start(y0, s, grid, bound)

    remainder = np.zeros((horizon.window_times.size, 3, grid.n_nodes))
    target = np.zeros_like(y1)
    for iteration in range(section.outer_maxiter):
        uhat, cg_iterations = controller.control(y1, remainder, target)
        hat = solve_forward_semilinear(grid, FieldState.from_stack(float(horizon.window_times[0]), y1),
                                       horizon.window_times, controls=uhat, background=horizon.background,
                                       bound=bound, keep_all=True)
        norm = _terminal_size(hat.states[-1], s)
        remainder = hat_system_residual(hat.states, horizon.background)
        attempt.steps.append(OuterStep(iteration=iteration, terminal_norm=norm, cg_iterations=cg_iterations,
                                       remainder_max=float(np.max(np.abs(remainder))),
                                       target_norm=float(np.max(np.abs(target)))))
        target = target - hat.states[-1]
        logger.info("s = %.3g, outer iteration %d: |y(t2)| = %.3e", s, iteration, norm)
        if norm <= section.outer_tol:
            attempt.converged = True
            return uhat
        if iteration > 0 and norm > attempt.steps[-2].terminal_norm:
            raise ConvergenceError("outer iteration does not contract",
                                   [step.terminal_norm for step in attempt.steps], {"s": s})
    raise ConvergenceError(f"outer iteration did not reach {section.outer_tol:g}",
                           [step.terminal_norm for step in attempt.steps], {"s": s})


def initial_scale(y0: FieldState, section: ControlSection) -> float:
    """s_initial shrunk by s_shrink until s * homogeneous_size(y0) is within the smallness radius."""
    s = section.s_initial
    size = homogeneous_size(y0)
    while s * size > section.smallness_radius and s >= section.s_min:
        s *= section.s_shrink
    return s


def nonlinear_steer(grid: Grid1D, y0: FieldState, traj: ReferenceTrajectory, window: CouplingWindow,
                    section: ControlSection, simulation: SimulationSection,
                    mode: Optional[ControlMode] = None, eps_pen: Optional[float] = None) -> SteeringResult:
    """
    Control driving y0 at t = 0 to 0 at t = T.

    The data is scaled by s (starting from s_initial, shrinking by s_shrink)
    until its homogeneous size is below the smallness radius; failed Picard
    runs shrink s again. The returned control is (ubar + uhat) / s and its
    terminal norm comes from a separate forward solve of the unscaled data.

    Raises:
        ConvergenceError: s fell below s_min (the s-path is in the context)
    """
    mode = section.mode if mode is None else mode
    horizon = ReferenceHorizon(traj, grid, window, simulation.dt)
    controller = ControllerFactory.get_controller(mode, grid, horizon.background, horizon.window_times,
                                                  window, section, eps_pen)
    bound = simulation.blowup_bound

    s = initial_scale(y0, section)

    s_path: List[ScaleAttempt] = []
    uhat: Optional[ControlBundle] = None
    while s >= section.s_min:
        attempt = ScaleAttempt(s=s, converged=False)
        s_path.append(attempt)
        try:
            uhat = _steer_scaled(y0, s, grid, horizon, controller, section, bound, attempt)
            break
        except ConvergenceError as e:
            attempt.error = str(e)
            logger.info("s = %.3g failed (%s); shrinking", s, e)
            s *= section.s_shrink
    if uhat is None:
        log_control_event(AuditAction.FAIL, "steer", {"s_path": [a.model_dump(mode="json") for a in s_path]},
                          success=False, error_message="no admissible scale")
        raise ConvergenceError("nonlinear steering failed for every scale",
                               [a.steps[-1].terminal_norm for a in s_path if a.steps],
                               {"s_path": [a.s for a in s_path]})

    uhat_forcing = np.stack([uhat.forcing(n)[2] for n in range(horizon.window_times.size)])
    source = horizon.source(uhat_forcing, scale=s)
    check = solve_forward_semilinear(grid, y0, horizon.times, source=source, bound=np.inf,
                                     stride=horizon.times.size)
    components = check.final.component_norms()
    result = SteeringResult(
        times=horizon.times, control=source[:, 2], uhat=uhat, terminal_norm=max(components),
        terminal_components=components,
        cg_iterations=sum(step.cg_iterations for a in s_path for step in a.steps),
        outer_iterations=len(s_path[-1].steps), s=s, s_path=s_path,
        eps_pen=controller.config.eps_pen, mode=mode,
    )
    log_control_event(AuditAction.STEER, "steer", result.manifest(), success=result.terminal_norm <= section.outer_tol)
    return result
