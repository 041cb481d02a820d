"""
Pydantic schemas for the stationary profiles (A, B, C), their zeros and reports.
"""
from __future__ import annotations

from enum import Enum
from typing import Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field

from ..config import StationarySection
from ..core.piecewise import PiecewiseAnalytic


# ============================================================================
# ENUMS
# ============================================================================

class ZeroKind(str, Enum):
    """How C crosses (or touches) zero."""
    KINK = "kink"              # H changes sign with H' != 0, C' is infinite
    SMOOTH = "smooth"          # triple zero of H, C' finite
    TANGENTIAL = "tangential"  # H touches zero without changing sign


class RepairMode(str, Enum):
    SIGN_CHANGE = "sign-change"
    SAME_SIGN = "same-sign"


# ============================================================================
# PARAMETERS
# ============================================================================

class StationaryParams(StationarySection):
    """Frozen copy of the stationary section, passed to every builder."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    @classmethod
    def from_section(cls, section: StationarySection) -> "StationaryParams":
        return cls(**section.model_dump())


# ============================================================================
# ZEROS AND REPAIRS
# ============================================================================

class CZero(BaseModel):
    """A zero rho of C on (0, 1)."""
    rho: float = Field(..., gt=0.0, lt=1.0)
    kind: ZeroKind
    derivative: Optional[float] = Field(None, description="C'(rho); None when infinite")
    needs_repair: bool = False
    repaired: bool = False

    @property
    def simple(self) -> bool:
        return self.derivative is not None and self.derivative != 0.0


class RepairRecord(BaseModel):
    """Outcome of one local repair on [zeta - eta, zeta + eta]."""
    zeta: float
    eta: float
    epsilon: float
    mode: RepairMode
    sign: float = Field(..., description="Sign of the original source right of zeta")
    xi: List[float] = Field(..., description="Coefficients of the four bumps")
    residual: float = Field(..., description="Final endpoint mismatch")
    iterations: int
    history: List[float] = Field(default_factory=list)
    c_slope: float = Field(..., description="C'(zeta) of the repaired profile (0 in same-sign mode)")


# ============================================================================
# PROFILES
# ============================================================================

class StationaryProfiles(BaseModel):
    """The triple (A, B, C) with the data that produced it."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    params: StationaryParams
    G: PiecewiseAnalytic
    A: PiecewiseAnalytic
    B: PiecewiseAnalytic
    C: PiecewiseAnalytic
    kappa_star: float
    c0: float = Field(..., description="A(0)")
    z_R: float = Field(..., description="Zero of the near-one closed form of G")
    rho_list: List[CZero] = Field(default_factory=list)
    repairs: List[RepairRecord] = Field(default_factory=list)

    @property
    def N(self) -> int:
        return self.params.N

    @property
    def delta(self) -> float:
        return self.params.delta

    def rhos(self) -> List[float]:
        return [z.rho for z in self.rho_list]

    def summary(self) -> Dict:
        """JSON export document."""
        return {
            "N": self.N,
            "delta": self.delta,
            "delta_A": self.params.delta_A,
            "kappa_star": self.kappa_star,
            "c0": self.c0,
            "z_R": self.z_R,
            "rho_list": [z.model_dump(mode="json") for z in self.rho_list],
            "repairs": [r.model_dump(mode="json") for r in self.repairs],
        }


# ============================================================================
# REPORTS
# ============================================================================

class ResidualRow(BaseModel):
    h: float
    residual_A: float = Field(..., description="max |A'' + (N-1)/z A' + B^3| (finite differences)")
    residual_B: float = Field(..., description="max |B'' + (N-1)/z B' + C^3| (finite differences)")


class StationaryReport(BaseModel):
    config_hash: Optional[str] = None
    checks: Dict[str, bool] = Field(default_factory=dict)
    values: Dict[str, float] = Field(default_factory=dict)
    residuals: List[ResidualRow] = Field(default_factory=list)
    slopes: Dict[str, float] = Field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    def failed_checks(self) -> List[str]:
        return [k for k, ok in self.checks.items() if not ok]
