"""
Penalized HUM for the linearized cascade on a window [t1, t2].

The Gramian Lambda phi = y(t2; y1 = 0, u = B* p(phi)) is symmetric positive
semidefinite in the weighted inner product of the grid; the penalized
problem (Lambda + eps_pen I) phi = -y_free(t2) is solved by conjugate
gradients and the control read off the adjoint, u = B* p(phi). The terminal
state is then -eps_pen phi.
"""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from ..audit.audit_utils import log_control_event
from ..audit.models import AuditAction
from ..errors import ConvergenceError
from ..simulation.schemas import ControlBundle, FieldState, Grid1D, LinearCoefficients
from ..simulation.solver_utils import DEFAULT_BOUND, solve_adjoint, solve_forward_linearized
from .schemas import HUMConfig, HUMResult, SweepReport, SweepRow

logger = logging.getLogger(__name__)


def conjugate_gradient(apply: Callable[[np.ndarray], np.ndarray], rhs: np.ndarray,
                       inner: Callable[[np.ndarray, np.ndarray], float], shift: float = 0.0,
                       tol: float = 1e-10, maxiter: int = 500) -> Tuple[np.ndarray, List[float], int]:
    """
    Solve (A + shift I) x = rhs for A self-adjoint in ``inner``, starting from 0.

    Returns:
        (x, history of |r| / |rhs|, iterations)

    Raises:
        ConvergenceError: tol not reached within maxiter, or a breakdown
    """
    x = np.zeros_like(rhs)
    r = rhs.copy()
    p = r.copy()
    norm = inner(r, r)
    scale = np.sqrt(norm)
    history: List[float] = [1.0]
    if scale == 0.0:
        return x, history, 0
    for i in range(maxiter):
        Ap = apply(p) + shift * p
        curvature = inner(p, Ap)
        if not curvature > 0.0:
            raise ConvergenceError("conjugate gradient breakdown (nonpositive curvature)", history,
                                   {"iteration": i, "curvature": curvature})
        alpha = norm / curvature
        x = x + alpha * p
        r = r - alpha * Ap
        new_norm = inner(r, r)
        history.append(float(np.sqrt(new_norm) / scale))
        if history[-1] <= tol:
            return x, history, i + 1
        p = r + (new_norm / norm) * p
        norm = new_norm
    raise ConvergenceError(f"conjugate gradient stopped at relative residual {history[-1]:.3e}", history,
                           {"maxiter": maxiter, "tol": tol})


class GramianOperator:
    """phi -> y(t2) of the control B* p(phi), with the pieces HUM needs."""

    def __init__(self, grid: Grid1D, coeffs: LinearCoefficients, template: ControlBundle,
                 bound: float = DEFAULT_BOUND):
        self.grid = grid
        self.coeffs = coeffs
        self.template = template
        self.bound = bound
        self._zero = FieldState.zeros(grid, float(coeffs.times[0]))

    def controls(self, phi: np.ndarray) -> ControlBundle:
        adjoint = solve_adjoint(self.grid, phi, self.coeffs, self.template)
        return self.template.with_values(adjoint.controls)

    def terminal(self, y1: FieldState, controls: Optional[ControlBundle] = None,
                 source: Optional[np.ndarray] = None) -> np.ndarray:
        run = solve_forward_linearized(self.grid, y1, self.coeffs, controls, source, bound=self.bound,
                                       stride=self.coeffs.times.size)
        return run.final.stack()

    def __call__(self, phi: np.ndarray) -> np.ndarray:
        return self.terminal(self._zero, self.controls(phi))


def hum_penalized(grid: Grid1D, y1: FieldState, coeffs: LinearCoefficients, config: HUMConfig,
                  template: ControlBundle, source: Optional[np.ndarray] = None,
                  bound: float = DEFAULT_BOUND, target: Optional[np.ndarray] = None) -> HUMResult:
    """
    Control of the linearized system from y1 at t1 towards 0 at t2.

    Args:
        grid: spatial grid
        y1: state at the first time of ``coeffs``
        coeffs: 3 betabar^2, 3 gammabar^2 on the window
        config: penalty and CG settings
        template: zero bundle with the actuator masks and ramp (one or three components)
        source: frozen extra forcing (n_times, 3, n_nodes)
        target: terminal state aimed at instead of 0 (defect correction)

    Raises:
        ConvergenceError: CG did not converge (history attached)
    """
    gram = GramianOperator(grid, coeffs, template, bound)
    free = gram.terminal(y1, None, source)
    free_norm = grid.norm(free)
    rhs = -free if target is None else target - free
    if grid.norm(rhs) == 0.0:
        return HUMResult(controls=template, phi_T=np.zeros_like(free), iterations=0,
                         free_norm=free_norm, terminal_norm=free_norm)
    try:
        phi, history, iterations = conjugate_gradient(gram, rhs, grid.inner, config.eps_pen,
                                                      config.cg_tol, config.cg_maxiter)
    except ConvergenceError as e:
        log_control_event(AuditAction.FAIL, "hum", {"mode": config.mode.value, "eps_pen": config.eps_pen,
                                                    "last_residual": e.history[-1] if e.history else None},
                          success=False, error_message=str(e))
        raise
    controls = gram.controls(phi)
    terminal_norm = grid.norm(gram.terminal(y1, controls, source))
    logger.info("HUM (%s, eps_pen = %g): %d CG iterations, |y(t2)| %.3e -> %.3e",
                config.mode.value, config.eps_pen, iterations, free_norm, terminal_norm)
    log_control_event(AuditAction.SOLVE, "hum", {
        "mode": config.mode.value, "eps_pen": config.eps_pen, "iterations": iterations,
        "free_norm": free_norm, "terminal_norm": terminal_norm,
    })
    return HUMResult(controls=controls, phi_T=phi, iterations=iterations, residual_history=history,
                     free_norm=free_norm, terminal_norm=terminal_norm)


def eps_pen_sweep(grid: Grid1D, y1: FieldState, coeffs: LinearCoefficients, config: HUMConfig,
                  template: ControlBundle, sweep: Sequence[float],
                  source: Optional[np.ndarray] = None, workers: int = 1) -> SweepReport:
    """
    Terminal norms of penalized HUM over a list of penalties.

    The penalties are independent runs; with workers > 1 they go to a thread
    pool. Rows keep the order of ``sweep``.
    """
    if not sweep:
        raise ValueError("empty eps_pen sweep")

    def run(eps_pen: float) -> HUMResult:
        return hum_penalized(grid, y1, coeffs, config.model_copy(update={"eps_pen": eps_pen}), template, source)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, sweep))
    else:
        results = [run(eps_pen) for eps_pen in sweep]

    report = SweepReport(mode=config.mode, free_norm=results[0].free_norm)
    for eps_pen, result in zip(sweep, results):
        report.rows.append(SweepRow(eps_pen=eps_pen, terminal_norm=result.terminal_norm,
                                    iterations=result.iterations, energy=result.controls.energy(grid)))
    if not report.monotone:
        logger.warning("terminal norms not monotone along the eps_pen sweep")
    return report
