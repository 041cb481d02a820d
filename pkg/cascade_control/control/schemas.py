"""
Pydantic schemas for HUM runs, reductions and the nonlinear steering result.
"""
from __future__ import annotations

from typing import Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from ..config import ControlMode, ControlSection
from ..simulation.schemas import ControlBundle


class HUMConfig(BaseModel):
    """Penalized HUM settings for one window."""
    model_config = ConfigDict(frozen=True)

    eps_pen: float = Field(..., gt=0.0, description="Terminal penalty")
    cg_tol: float = Field(1e-10, gt=0.0, description="Relative residual of the CG iteration")
    cg_maxiter: int = Field(500, ge=1)
    mode: ControlMode = ControlMode.THREE
    window: Tuple[float, float]

    @classmethod
    def from_section(cls, section: ControlSection, window: Tuple[float, float],
                     eps_pen: Optional[float] = None, mode: Optional[ControlMode] = None) -> "HUMConfig":
        return cls(eps_pen=section.eps_pen if eps_pen is None else eps_pen, cg_tol=section.cg_tol,
                   cg_maxiter=section.cg_maxiter, mode=section.mode if mode is None else mode,
                   window=window)


class HUMResult(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    controls: ControlBundle
    phi_T: np.ndarray
    iterations: int
    residual_history: List[float] = Field(default_factory=list)
    free_norm: float = Field(..., description="|y(t2)| without control")
    terminal_norm: float = Field(..., description="|y(t2)| recomputed with the control")


class SweepRow(BaseModel):
    eps_pen: float
    terminal_norm: float
    iterations: int
    energy: float


class SweepReport(BaseModel):
    mode: ControlMode
    free_norm: float
    rows: List[SweepRow] = Field(default_factory=list)

    @property
    def monotone(self) -> bool:
        """Terminal norms nonincreasing as eps_pen decreases, up to 1%."""
        ordered = sorted(self.rows, key=lambda r: -r.eps_pen)
        return all(b.terminal_norm <= 1.01 * a.terminal_norm for a, b in zip(ordered[:-1], ordered[1:]))


class ReductionResult(BaseModel):
    """(alpha~, beta~, gamma~, u~) on the window grid, each (n_times, n_nodes)."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    alpha: np.ndarray
    beta: np.ndarray
    gamma: np.ndarray
    u: np.ndarray
    residuals: Dict[str, float] = Field(default_factory=dict)


class WitnessReport(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    alpha_first: np.ndarray
    alpha_second: np.ndarray
    gamma_difference: float = Field(..., description="max |gamma_1(t2) - gamma_2(t2)|, nonzero for distinct controls")

    @property
    def identical(self) -> bool:
        return bool(np.array_equal(self.alpha_first, self.alpha_second))


class OuterStep(BaseModel):
    iteration: int
    terminal_norm: float
    cg_iterations: int
    remainder_max: float
    target_norm: float = Field(0.0, description="sup of the terminal target the linear step aimed at")


class ScaleAttempt(BaseModel):
    s: float
    converged: bool
    steps: List[OuterStep] = Field(default_factory=list)
    error: Optional[str] = None


class SteeringResult(BaseModel):
    """
    Final control u = ubar + uhat on (0, T) (gamma forcing per node and time)
    and the terminal norm of an independent forward solve with it.
    """
    model_config = ConfigDict(arbitrary_types_allowed=True)

    times: np.ndarray
    control: np.ndarray = Field(..., description="(n_times, n_nodes) forcing of the gamma equation")
    uhat: ControlBundle
    terminal_norm: float
    terminal_components: Tuple[float, float, float]
    cg_iterations: int
    outer_iterations: int
    s: float
    s_path: List[ScaleAttempt] = Field(default_factory=list)
    eps_pen: float
    mode: ControlMode

    def manifest(self) -> Dict:
        return {
            "terminal_norms": {"sup": self.terminal_norm, "components": list(self.terminal_components)},
            "iterations": {"cg": self.cg_iterations, "outer": self.outer_iterations},
            "s": self.s,
            "s_path": [a.model_dump(mode="json") for a in self.s_path],
            "eps_pen": self.eps_pen,
            "mode": self.mode.value,
        }
