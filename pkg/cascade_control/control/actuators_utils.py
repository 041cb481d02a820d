"""
Actuator profiles: smooth indicators of the control regions and time ramps.
"""
from __future__ import annotations

from typing import Tuple

import numpy as np

from ..config import ControlMode, DomainKind, ReferenceSection
from ..reference.schemas import CouplingWindow
from ..simulation.schemas import ControlBundle, Grid1D
from ..stationary.source_utils import plateau_values


def region_indicator(grid: Grid1D, region: Tuple[float, float]) -> np.ndarray:
    """
    Smooth indicator: 1 on the middle half of ``region``, 0 outside it.

    With the nested choice omega2 = middle half of omega1 this is the
    indicator of omega2 supported in omega1.
    """
    lo, hi = region
    center, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
    return plateau_values((grid.nodes - center) / half) * grid.interior


def time_ramp(times: np.ndarray, window: Tuple[float, float]) -> np.ndarray:
    """1 on the middle half of the window, flat zeros at both ends."""
    t1, t2 = window
    center, half = 0.5 * (t1 + t2), 0.5 * (t2 - t1)
    return plateau_values((np.asarray(times, dtype=float) - center) / half)


def omega_mask(grid: Grid1D, section: ReferenceSection) -> np.ndarray:
    """Sharp indicator of the control region omega on the grid."""
    x = grid.nodes
    if section.kind == DomainKind.BALL:
        inside = x < section.omega_radius
    else:
        inside = (x > section.omega_lo) & (x < section.omega_hi)
    return inside.astype(float) * grid.interior


def hum_template(grid: Grid1D, times: np.ndarray, window: CouplingWindow, mode: ControlMode) -> ControlBundle:
    """Zero controls carrying the actuator theta(t, x) = ramp(t) indicator(x) of the window."""
    indicator = region_indicator(grid, window.omega1)
    k = 1 if mode == ControlMode.ONE else 3
    masks = np.repeat(indicator[None, :], k, axis=0)
    return ControlBundle.zeros(times, masks, time_ramp(times, (times[0], times[-1])),
                               (float(times[0]), float(times[-1])))
