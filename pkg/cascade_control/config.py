"""
Experiment configuration: YAML file -> validated pydantic model.
"""
from __future__ import annotations

import hashlib
import json
import os
from enum import Enum
from pathlib import Path
from typing import List, Optional, Tuple

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .errors import ConfigError

DEFAULT_CONFIG_PATH = Path(__file__).with_name("experiment.yml")


class RuntimeSettings:
    """Environment overrides (loaded from .env by the entry point)."""

    OUTPUT_DIR = os.getenv("CASCADE_OUTPUT_DIR", "")
    LOG_LEVEL = os.getenv("CASCADE_LOG_LEVEL", "INFO")

    @classmethod
    def output_dir_override(cls) -> Optional[Path]:
        value = os.getenv("CASCADE_OUTPUT_DIR", cls.OUTPUT_DIR)
        return Path(value) if value else None


class DomainKind(str, Enum):
    BALL = "ball"
    INTERVAL = "interval"


class ControlMode(str, Enum):
    THREE = "three"
    ONE = "one"


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


# ============================================================================
# SECTIONS
# ============================================================================

class StationarySection(_Section):
    N: int = Field(3, ge=1, description="Spatial dimension")
    delta: float = Field(0.02, gt=0.0, lt=0.25, description="Half-width of the frozen windows of G")
    delta_A: float = Field(0.02, gt=0.0, lt=0.5, description="Width of the closed-form piece of A next to z = 1")
    quadrature_tol: float = Field(1e-10, gt=0.0, description="Absolute tolerance for integrals of G")
    kappa_bracket: Tuple[float, float] = Field((-1e3, 1e3), description="Initial search interval for kappa")
    blend_steepness: float = Field(1.0, gt=0.0, description="Constant c of the cutoff e^(-c/x)")
    repair_threshold: float = Field(1e-4, gt=0.0, description="|C'| below which a zero is repaired")
    zero_scan_points: int = Field(20000, ge=100, description="Samples per blend when scanning zeros of C")

    @field_validator("kappa_bracket")
    @classmethod
    def _ordered_bracket(cls, v):
        if not v[0] < v[1]:
            raise ValueError("kappa_bracket must be increasing")
        return v

    @model_validator(mode="after")
    def _outer_window(self):
        if self.delta_A > self.delta:
            raise ValueError("delta_A must not exceed delta")
        return self


class SpacetimeSection(_Section):
    epsilon_candidates: List[float] = Field(
        default_factory=lambda: [0.1, 0.05, 0.02, 0.01, 5e-3, 2e-3, 1e-3, 5e-4, 2e-4, 1e-4,
                                 5e-5, 2e-5, 1e-5, 5e-6, 2e-6, 1e-6],
        description="Descending candidates for the lens scale",
    )
    time_jet_order: int = Field(8, ge=7, description="Order of the t-jets of the weights")
    window_fraction: float = Field(0.45, gt=0.0, lt=0.5, description="Window half-width as a fraction of the centre gaps")
    check_t_points: int = Field(50, ge=5, description="t-samples for window checks")
    quadrature_nodes: int = Field(16, ge=4, description="Gauss nodes of the integral remainders")

    @field_validator("epsilon_candidates")
    @classmethod
    def _descending(cls, v):
        if not v or any(e <= 0 or e > 1 for e in v):
            raise ValueError("epsilon candidates must lie in (0, 1]")
        if any(a <= b for a, b in zip(v[:-1], v[1:])):
            raise ValueError("epsilon candidates must be strictly descending")
        return v


class ReferenceSection(_Section):
    kind: DomainKind = Field(DomainKind.BALL, description="ball (radial) or interval")
    x_lo: float = 0.0
    x_hi: float = 1.0
    radius: float = Field(1.0, gt=0.0)
    x0: float = Field(0.0, description="Centre of the reference lens")
    rbar: float = Field(0.2, gt=0.0, description="Spatial scale of the reference trajectory")
    T: float = Field(1.0, gt=0.0, description="Control horizon")
    omega_lo: float = 0.2
    omega_hi: float = 0.8
    omega_radius: float = Field(0.5, gt=0.0)

    @model_validator(mode="after")
    def _geometry(self):
        if self.kind == DomainKind.INTERVAL:
            if not (self.x_lo < self.omega_lo < self.omega_hi < self.x_hi):
                raise ValueError("omega must be strictly inside the interval")
        else:
            if self.x0 != 0.0:
                raise ValueError("radial ball domains are centred at x0 = 0")
            if self.omega_radius >= self.radius:
                raise ValueError("omega_radius must be smaller than the ball radius")
        return self


class SimulationSection(_Section):
    n_nodes: int = Field(129, ge=5)
    dt: float = Field(1e-3, gt=0.0)
    blowup_bound: float = Field(1e6, gt=0.0)
    snapshot_stride: int = Field(10, ge=1)


class ControlSection(_Section):
    mode: ControlMode = ControlMode.THREE
    eps_pen: float = Field(1e-6, gt=0.0)
    eps_pen_sweep: List[float] = Field(default_factory=lambda: [1e-2, 1e-4, 1e-6])
    cg_tol: float = Field(1e-10, gt=0.0)
    cg_maxiter: int = Field(500, ge=1)
    outer_tol: float = Field(1e-3, gt=0.0)
    outer_maxiter: int = Field(20, ge=1)
    s_initial: float = Field(1.0, gt=0.0)
    s_shrink: float = Field(0.5, gt=0.0, lt=1.0)
    s_min: float = Field(1e-4, gt=0.0)
    smallness_radius: float = Field(0.05, gt=0.0, description="Target sup-norm of the scaled data")
    cutoff_k: float = Field(0.05, gt=0.0, description="Rate k of the cutoff e^(-k/(t2 - t))")
    mollifier_nodes: int = Field(2, ge=0)

    @field_validator("eps_pen_sweep")
    @classmethod
    def _positive_sweep(cls, v):
        if not v or any(e <= 0.0 for e in v):
            raise ValueError("eps_pen_sweep must be a nonempty list of positive penalties")
        return v


class OutputSection(_Section):
    directory: str = "results"
    plots: bool = True


class ExperimentConfig(BaseModel):
    """Full experiment description; every section must be present in the file."""
    model_config = ConfigDict(extra="forbid")

    stationary: StationarySection
    spacetime: SpacetimeSection
    reference: ReferenceSection
    simulation: SimulationSection
    control: ControlSection
    output: OutputSection

    @model_validator(mode="after")
    def _interval_is_one_dimensional(self):
        if self.reference.kind == DomainKind.INTERVAL and self.stationary.N != 1:
            raise ValueError("interval domains require N = 1")
        return self

    @classmethod
    def defaults(cls) -> "ExperimentConfig":
        return cls(
            stationary=StationarySection(),
            spacetime=SpacetimeSection(),
            reference=ReferenceSection(),
            simulation=SimulationSection(),
            control=ControlSection(),
            output=OutputSection(),
        )

    def output_dir(self) -> Path:
        return RuntimeSettings.output_dir_override() or Path(self.output.directory)


# ============================================================================
# LOADING
# ============================================================================

def config_from_dict(data: dict) -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as e:
        keys = [".".join(str(p) for p in err["loc"]) for err in e.errors()]
        raise ConfigError(f"invalid configuration at: {', '.join(keys)}", {"keys": keys}) from e


def load_config(path: Optional[Path] = None) -> ExperimentConfig:
    """
    Read a YAML experiment file.

    Args:
        path: YAML file; the packaged ``experiment.yml`` when omitted

    Returns:
        Validated ExperimentConfig

    Raises:
        ConfigError: unreadable file, missing section or invalid value
    """
    path = Path(path) if path else DEFAULT_CONFIG_PATH
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = yaml.safe_load(f)
    except (IOError, yaml.YAMLError) as e:
        raise ConfigError(f"could not read configuration {path}: {e}") from e
    if not isinstance(data, dict):
        raise ConfigError(f"configuration {path} is not a mapping")
    return config_from_dict(data)


def dump_config(config: ExperimentConfig) -> str:
    return yaml.safe_dump(config.model_dump(mode="json"), sort_keys=True)


def config_hash(config: ExperimentConfig) -> str:
    canonical = json.dumps(config.model_dump(mode="json"), sort_keys=True)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()
