"""
Pydantic schemas for the time-dependent fields (a, b, c), their windows and reports.
"""
from __future__ import annotations

from enum import Enum
from typing import Dict, List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from ..config import SpacetimeSection


class WindowCase(str, Enum):
    """Which jet conditions the bumps of a window satisfy."""
    GENERIC = "generic"  # zero rho of C with B(rho) != 0
    HALF = "half"        # the zero 1/2 of B
    AXIS = "axis"        # z = 0, where B vanishes by symmetry of A


class SpacetimeParams(SpacetimeSection):
    """Frozen copy of the spacetime section."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    @classmethod
    def from_section(cls, section: SpacetimeSection) -> "SpacetimeParams":
        return cls(**section.model_dump())


class Window(BaseModel):
    """A window (center - half_width, center + half_width) in the z variable."""
    model_config = ConfigDict(frozen=True)

    center: float = Field(..., ge=0.0, lt=1.0)
    half_width: float = Field(..., gt=0.0)
    case: WindowCase
    m_sign: float = Field(..., description="Expected sign of M (of its remainder factor at 1/2 and 0)")
    c_sign: float = Field(..., description="Sign of C at the centre, or of C'(rho) for generic windows")

    @property
    def lo(self) -> float:
        return self.center - self.half_width

    @property
    def hi(self) -> float:
        return self.center + self.half_width

    def contains(self, z):
        return abs(z - self.center) < self.half_width

    @property
    def plateau(self) -> float:
        """Half width of the part where the bumps equal 1."""
        return 0.5 * self.half_width

    def on_plateau(self, z):
        return np.abs(np.asarray(z, dtype=float) - self.center) <= self.plateau


# ============================================================================
# REPORTS
# ============================================================================

class TripleZeroRow(BaseModel):
    t: float
    nu: float
    nu_z: float
    nu_zz: float
    nu_zzz: float
    nu_zz_fd: float = Field(..., description="Richardson finite difference of nu_zz")


class TripleZeroReport(BaseModel):
    center: float
    tolerance: float
    rows: List[TripleZeroRow] = Field(default_factory=list)
    offending_t: List[float] = Field(default_factory=list)
    fd_mismatch: float = 0.0

    @property
    def passed(self) -> bool:
        return not self.offending_t


class FieldResidualRow(BaseModel):
    h: float
    residual_a: float = Field(..., description="max |a_t - a_rr - (N-1)/r a_r - b^3| / max |b^3|")
    residual_b: float = Field(..., description="max |b_t - b_rr - (N-1)/r b_r - c^3| / max |c^3|")


class FieldResidualReport(BaseModel):
    epsilon: float
    points: int
    rows: List[FieldResidualRow] = Field(default_factory=list)
    outside_max: float = Field(0.0, description="max |(a, b, c)| outside the lens")
    slopes: Dict[str, float] = Field(default_factory=dict)


class EpsilonAttempt(BaseModel):
    epsilon: float
    checks: Dict[str, bool] = Field(default_factory=dict)
    details: Dict[str, float] = Field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return bool(self.checks) and all(self.checks.values())

    def failures(self) -> List[str]:
        return [k for k, ok in self.checks.items() if not ok]


class SpacetimeManifest(BaseModel):
    """JSON export document of the chosen fields."""
    epsilon: float
    rho_list: List[float]
    windows: List[Window]
    checks: Dict[str, bool] = Field(default_factory=dict)
    attempts: List[EpsilonAttempt] = Field(default_factory=list)
    triple_zero: Optional[List[TripleZeroReport]] = None
