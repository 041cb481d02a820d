"""
Linear steering strategies on the coupling window, behind one factory.
"""
from __future__ import annotations

import logging
from abc import ABC, abstractmethod
from typing import Optional, Tuple

import numpy as np

from ..config import ControlMode, ControlSection
from ..reference.schemas import CouplingWindow
from ..simulation.schemas import ControlBundle, FieldState, Grid1D, LinearCoefficients
from .actuators_utils import hum_template
from .hum_utils import hum_penalized
from .reduction_utils import algebraic_reduce, one_control_from_reduction, smooth_controls
from .schemas import HUMConfig

logger = logging.getLogger(__name__)


class BaseController(ABC):
    """Steers the linearized system (with a frozen source) from y1 at t1 to 0 at t2 with one control on gamma."""

    def __init__(self, grid: Grid1D, background: np.ndarray, times: np.ndarray, window: CouplingWindow,
                 section: ControlSection, eps_pen: Optional[float] = None):
        self.grid = grid
        self.background = background
        self.times = times
        self.window = window
        self.section = section
        self.coeffs = LinearCoefficients.from_reference(times, background[:, 0], background[:, 1])
        self.config = HUMConfig.from_section(section, (float(times[0]), float(times[-1])), eps_pen, self.mode)
        self.template = hum_template(grid, times, window, self.mode)

    @property
    @abstractmethod
    def mode(self) -> ControlMode:
        """Control mode of the HUM step."""

    @abstractmethod
    def control(self, y1: np.ndarray, source: Optional[np.ndarray] = None,
                target: Optional[np.ndarray] = None) -> Tuple[ControlBundle, int]:
        """
        The terminal state aimed at is ``target`` (0 when None).

        Returns:
            (one-control bundle on gamma, CG iterations)
        """


class ThreeControlController(BaseController):
    """HUM with three controls, mollification and algebraic reduction to one control."""

    @property
    def mode(self) -> ControlMode:
        return ControlMode.THREE

    def control(self, y1: np.ndarray, source: Optional[np.ndarray] = None,
                target: Optional[np.ndarray] = None) -> Tuple[ControlBundle, int]:
        start = FieldState.from_stack(float(self.times[0]), y1)
        hum = hum_penalized(self.grid, start, self.coeffs, self.config, self.template, source,
                            target=target)
        smooth = smooth_controls(hum.controls, self.grid, self.window, self.section.cutoff_k,
                                 self.section.mollifier_nodes)
        reduction = algebraic_reduce(smooth, self.background[:, 0], self.background[:, 1], self.grid, self.window)
        return one_control_from_reduction(reduction, smooth, self.grid), hum.iterations


class OneControlController(BaseController):
    """Direct HUM with the single control on gamma."""

    @property
    def mode(self) -> ControlMode:
        return ControlMode.ONE

    def control(self, y1: np.ndarray, source: Optional[np.ndarray] = None,
                target: Optional[np.ndarray] = None) -> Tuple[ControlBundle, int]:
        start = FieldState.from_stack(float(self.times[0]), y1)
        hum = hum_penalized(self.grid, start, self.coeffs, self.config, self.template, source,
                            target=target)
        return hum.controls, hum.iterations


# Factory class to get the steering strategy
class ControllerFactory:

    @staticmethod
    def get_controller(mode, grid: Grid1D, background: np.ndarray, times: np.ndarray,
                       window: CouplingWindow, section: ControlSection,
                       eps_pen: Optional[float] = None) -> BaseController:
        if mode == ControlMode.THREE:
            return ThreeControlController(grid, background, times, window, section, eps_pen)
        elif mode == ControlMode.ONE:
            return OneControlController(grid, background, times, window, section, eps_pen)
        else:
            raise ValueError(f"Unknown or unsupported control mode: {mode}")
