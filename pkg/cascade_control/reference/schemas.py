"""
Pydantic schemas for the scaled reference trajectory and its reports.
"""
from __future__ import annotations

from typing import Dict, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field

from ..config import ReferenceSection


class ReferenceParams(ReferenceSection):
    """Frozen copy of the reference section."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    @classmethod
    def from_section(cls, section: ReferenceSection) -> "ReferenceParams":
        return cls(**section.model_dump())


class CouplingWindow(BaseModel):
    """
    [t1, t2] x omega1 on which |betabar| >= mu_beta and |gammabar| >= mu_gamma.

    omega1 and omega2 are given in the grid coordinate: radii on a ball, x on
    an interval; omega2 sits strictly inside omega1.
    """
    t1: float
    t2: float
    omega1: Tuple[float, float]
    omega2: Tuple[float, float]
    mu_beta: float = Field(..., gt=0.0)
    mu_gamma: float = Field(..., gt=0.0)
    window_center: float = Field(..., description="Zero rho of C whose window hosts the band")
    z_band: Tuple[float, float] = Field(..., description="Band of the lens variable z covered by omega1")


class ReferenceResidualRow(BaseModel):
    n_nodes: int
    h: float
    residual_alpha: float = Field(..., description="max |alpha_t - Delta alpha - beta^3| / max |beta^3|")
    residual_beta: float = Field(..., description="max |beta_t - Delta beta - gamma^3| / max |gamma^3|")


class ReferenceReport(BaseModel):
    lens_radius: float
    rows: List[ReferenceResidualRow] = Field(default_factory=list)
    slopes: Dict[str, float] = Field(default_factory=dict)
    checks: Dict[str, bool] = Field(default_factory=dict)
    early_max: float = Field(0.0, description="max |(alpha, beta, gamma, u)| before T/2 - rbar^2")

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    def failed_checks(self) -> List[str]:
        return [k for k, ok in self.checks.items() if not ok]


class ReferenceManifest(BaseModel):
    """JSON export document of the reference trajectory."""
    x0: float
    rbar: float
    T: float
    epsilon: float
    lens_radius: float
    t1: Optional[float] = None
    t2: Optional[float] = None
    margins: Dict[str, float] = Field(default_factory=dict)
    coupling: Optional[CouplingWindow] = None
