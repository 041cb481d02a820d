"""
Grids, initial data and the reference run of the simulator.
"""
from __future__ import annotations

import logging
from typing import Optional, Sequence

import numpy as np

from ..audit.audit_utils import log_simulation_event
from ..audit.models import AuditAction
from ..config import DomainKind, ReferenceSection, SimulationSection
from ..stationary.source_utils import flat_exp_values
from .schemas import FieldState, Grid1D, ReferenceRunRow, SimulationReport
from .solver_utils import make_times, solve_forward_semilinear

logger = logging.getLogger(__name__)

# below this many nodes per lens radius the simulator cannot see the reference
MIN_NODES_PER_LENS = 8.0


def build_grid(section: ReferenceSection, n_nodes: int, N: int) -> Grid1D:
    if section.kind == DomainKind.BALL:
        return Grid1D.radial(section.radius, n_nodes, N)
    return Grid1D.interval(section.x_lo, section.x_hi, n_nodes)


def nodes_per_lens(lens_radius: float, grid: Grid1D) -> float:
    """Grid nodes across one lens radius; warns when the lens is under-resolved."""
    count = lens_radius / grid.h
    if count < MIN_NODES_PER_LENS:
        logger.warning("lens radius %.3g covers %.1f nodes (h = %.3g); raise --resolution",
                       lens_radius, count, grid.h)
    else:
        logger.info("lens radius %.3g covers %.1f nodes", lens_radius, count)
    return count


def bump_state(grid: Grid1D, center: float, width: float, amplitude: float = 1.0,
               t: float = 0.0, weights: Sequence[float] = (1.0, 1.0, 1.0)) -> FieldState:
    """
    Flat bump amplitude * e * e^(-1/(1 - s^2)), s = (x - center)/width, in each component.

    The peak value is ``amplitude`` (times the component weight).
    """
    s = (grid.nodes - center) / width
    bump = amplitude * np.e * flat_exp_values(1.0 - s * s, 1.0)
    return FieldState(t=t, alpha=weights[0] * bump, beta=weights[1] * bump,
                      gamma=weights[2] * bump).on_grid(grid)


def simulate_reference(traj, section: ReferenceSection, simulation: SimulationSection, N: int,
                       resolutions: Optional[Sequence[int]] = None) -> SimulationReport:
    """
    Solve the full system from 0 with u = ubar and compare with the reference.

    ``traj`` is a ReferenceTrajectory. dt is refined together with h so that
    the error slope measures the joint order of the scheme.
    """
    resolutions = list(resolutions or [simulation.n_nodes])
    report = SimulationReport()
    base_n = resolutions[0]
    for n in resolutions:
        grid = build_grid(section, n, N)
        dt = simulation.dt * (base_n - 1) / (n - 1)
        times = make_times(0.0, traj.T, dt)
        ref_states, ubar = traj.on_grid(grid, times)
        source = np.zeros_like(ref_states)
        source[:, 2] = ubar
        run = solve_forward_semilinear(grid, FieldState.zeros(grid), times, source=source,
                                       bound=simulation.blowup_bound, keep_all=True)
        error = float(np.max(np.abs(run.states - ref_states)))
        report.rows.append(ReferenceRunRow(n_nodes=n, h=grid.h, dt=float(times[1] - times[0]),
                                           max_error=error, nodes_per_lens=nodes_per_lens(traj.lens_radius, grid)))
        support = np.abs(ref_states).max(axis=(0, 1)) > 0.0
        report.support_ok &= bool(np.all(np.abs(traj.distance(grid.nodes[support])) < traj.rbar))
        logger.info("reference run n = %d: max error %.3e", n, error)
    if len(report.rows) >= 2:
        first, last = report.rows[0], report.rows[-1]
        if first.max_error > 0.0 and last.max_error > 0.0:
            report.slope = float(np.log(first.max_error / last.max_error) / np.log(first.h / last.h))
    log_simulation_event(AuditAction.VERIFY, "reference_run", report.model_dump(mode="json"),
                         success=report.passed)
    return report
