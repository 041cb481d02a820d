"""
Pydantic schemas for grids, states, controls and trajectories of the radial solvers.
"""
from __future__ import annotations

from enum import Enum
from typing import List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from ..config import ControlMode


class GridKind(str, Enum):
    RADIAL = "radial"      # ball of radius hi, nodes 0 = r_0 < ... < r_{n-1} = hi
    INTERVAL = "interval"  # (lo, hi), Dirichlet at both ends


class Grid1D(BaseModel):
    """Uniform grid; Dirichlet nodes carry exact zeros."""
    model_config = ConfigDict(frozen=True)

    kind: GridKind
    lo: float = 0.0
    hi: float = Field(..., description="Outer radius or right end")
    n_nodes: int = Field(..., ge=3)
    N: int = Field(1, ge=1, description="Dimension of the ball (1 on intervals)")

    @model_validator(mode="after")
    def _check(self):
        if self.hi <= self.lo:
            raise ValueError("empty grid")
        if self.kind == GridKind.RADIAL and self.lo != 0.0:
            raise ValueError("radial grids start at r = 0")
        if self.kind == GridKind.INTERVAL and self.N != 1:
            raise ValueError("interval grids are one-dimensional")
        return self

    @classmethod
    def radial(cls, radius: float, n_nodes: int, N: int) -> "Grid1D":
        return cls(kind=GridKind.RADIAL, lo=0.0, hi=radius, n_nodes=n_nodes, N=N)

    @classmethod
    def interval(cls, lo: float, hi: float, n_nodes: int) -> "Grid1D":
        return cls(kind=GridKind.INTERVAL, lo=lo, hi=hi, n_nodes=n_nodes, N=1)

    @property
    def h(self) -> float:
        return (self.hi - self.lo) / (self.n_nodes - 1)

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, self.n_nodes)

    @property
    def interior(self) -> np.ndarray:
        mask = np.ones(self.n_nodes, dtype=bool)
        mask[-1] = False
        if self.kind == GridKind.INTERVAL:
            mask[0] = False
        return mask

    @property
    def weights(self) -> np.ndarray:
        """
        Quadrature weights of the inner product.

        Radial grids use the cell volumes int r^(N-1) dr over
        [r_j - h/2, r_j + h/2] (clipped at 0 and at the rim), so every weight is
        positive; intervals use the trapezoidal rule.
        """
        h, N = self.h, self.N
        x = self.nodes
        if self.kind == GridKind.INTERVAL:
            w = np.full(self.n_nodes, h)
            w[[0, -1]] = 0.5 * h
            return w
        left = np.clip(x - 0.5 * h, 0.0, self.hi)
        right = np.clip(x + 0.5 * h, 0.0, self.hi)
        return (right ** N - left ** N) / N

    def inner(self, u: np.ndarray, v: np.ndarray) -> float:
        """Weighted inner product; the last axis is the node axis."""
        return float(np.sum(np.asarray(u) * np.asarray(v) * self.weights))

    def norm(self, u: np.ndarray) -> float:
        return float(np.sqrt(max(self.inner(u, u), 0.0)))


# ============================================================================
# STATES
# ============================================================================

class FieldState(BaseModel):
    """Nodal values of (alpha, beta, gamma) at time t."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    t: float
    alpha: np.ndarray
    beta: np.ndarray
    gamma: np.ndarray

    @model_validator(mode="after")
    def _same_length(self):
        self.alpha = np.asarray(self.alpha, dtype=float)
        self.beta = np.asarray(self.beta, dtype=float)
        self.gamma = np.asarray(self.gamma, dtype=float)
        if not (self.alpha.shape == self.beta.shape == self.gamma.shape) or self.alpha.ndim != 1:
            raise ValueError("alpha, beta and gamma must be 1-d arrays of equal length")
        return self

    @classmethod
    def zeros(cls, grid: Grid1D, t: float = 0.0) -> "FieldState":
        z = np.zeros(grid.n_nodes)
        return cls(t=t, alpha=z, beta=z.copy(), gamma=z.copy())

    @classmethod
    def from_stack(cls, t: float, y: np.ndarray) -> "FieldState":
        return cls(t=t, alpha=y[0], beta=y[1], gamma=y[2])

    def stack(self) -> np.ndarray:
        return np.stack([self.alpha, self.beta, self.gamma])

    def on_grid(self, grid: Grid1D) -> "FieldState":
        """Copy with the Dirichlet nodes set to zero."""
        if self.alpha.size != grid.n_nodes:
            raise ValueError(f"state has {self.alpha.size} nodes, grid has {grid.n_nodes}")
        y = self.stack() * grid.interior
        return FieldState.from_stack(self.t, y)

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.stack())))

    def component_norms(self) -> Tuple[float, float, float]:
        return tuple(float(np.max(np.abs(c))) for c in (self.alpha, self.beta, self.gamma))


# ============================================================================
# CONTROLS
# ============================================================================

class ControlBundle(BaseModel):
    """
    Controls on a time grid: values[n] acts on (t_n, t_{n+1}).

    The applied forcing is ramp(t_n) * masks[i] * values[n, i]; in one-control
    mode the single component acts on gamma, in three-control mode component
    i acts on equation i.
    """
    model_config = ConfigDict(arbitrary_types_allowed=True)

    times: np.ndarray
    values: np.ndarray = Field(..., description="(n_times, k, n_nodes), k = 1 or 3")
    masks: np.ndarray = Field(..., description="(k, n_nodes) spatial actuator profiles")
    ramp: np.ndarray = Field(..., description="(n_times,) time profile")
    window: Tuple[float, float]

    @model_validator(mode="after")
    def _clean(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        self.masks = np.asarray(self.masks, dtype=float)
        self.ramp = np.asarray(self.ramp, dtype=float)
        k = self.masks.shape[0]
        if k not in (1, 3) or self.values.shape != (self.times.size, k, self.masks.shape[1]):
            raise ValueError("values must have shape (n_times, k, n_nodes) with k in (1, 3)")
        if self.ramp.shape != self.times.shape:
            raise ValueError("ramp must match the time grid")
        t1, t2 = self.window
        active = (self.times >= t1) & (self.times <= t2) & (self.ramp != 0.0)
        support = self.masks != 0.0
        self.values = np.where(active[:, None, None] & support[None, :, :], self.values, 0.0)
        return self

    @property
    def mode(self) -> ControlMode:
        return ControlMode.ONE if self.masks.shape[0] == 1 else ControlMode.THREE

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    @classmethod
    def zeros(cls, times: np.ndarray, masks: np.ndarray, ramp: Optional[np.ndarray] = None,
              window: Optional[Tuple[float, float]] = None) -> "ControlBundle":
        times = np.asarray(times, dtype=float)
        masks = np.atleast_2d(np.asarray(masks, dtype=float))
        ramp = np.ones(times.size) if ramp is None else ramp
        window = (float(times[0]), float(times[-1])) if window is None else window
        return cls(times=times, values=np.zeros((times.size,) + masks.shape), masks=masks,
                   ramp=ramp, window=window)

    def with_values(self, values: np.ndarray) -> "ControlBundle":
        return ControlBundle(times=self.times, values=values, masks=self.masks, ramp=self.ramp,
                             window=self.window)

    def forcing(self, n: int) -> np.ndarray:
        """(3, n_nodes) forcing at step n."""
        applied = self.ramp[n] * self.masks * self.values[n]
        out = np.zeros((3, self.masks.shape[1]))
        if self.mode == ControlMode.ONE:
            out[2] = applied[0]
        else:
            out[:] = applied
        return out

    def energy(self, grid: Grid1D) -> float:
        """sum_n dt |values[n]|^2 over the steps that act."""
        return float(sum(self.dt * grid.inner(v, v) for v in self.values[:-1]))

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values))) if self.values.size else 0.0


class LinearCoefficients(BaseModel):
    """3 betabar^2 and 3 gammabar^2 sampled on the solver's time grid."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    times: np.ndarray
    beta2: np.ndarray = Field(..., description="(n_times, n_nodes) coefficient of beta in the alpha equation")
    gamma2: np.ndarray = Field(..., description="(n_times, n_nodes) coefficient of gamma in the beta equation")

    @classmethod
    def zeros(cls, times: np.ndarray, n_nodes: int) -> "LinearCoefficients":
        times = np.asarray(times, dtype=float)
        z = np.zeros((times.size, n_nodes))
        return cls(times=times, beta2=z, gamma2=z.copy())

    @classmethod
    def from_reference(cls, times: np.ndarray, betabar: np.ndarray, gammabar: np.ndarray) -> "LinearCoefficients":
        return cls(times=times, beta2=3.0 * betabar ** 2, gamma2=3.0 * gammabar ** 2)


# ============================================================================
# TRAJECTORIES
# ============================================================================

class Trajectory(BaseModel):
    """Snapshots of a forward or adjoint run; states[k] is (3, n_nodes) at times[k]."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    times: np.ndarray
    states: np.ndarray
    steps: int
    dt: float

    @property
    def final(self) -> FieldState:
        return FieldState.from_stack(float(self.times[-1]), self.states[-1])

    @property
    def initial(self) -> FieldState:
        return FieldState.from_stack(float(self.times[0]), self.states[0])

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.states)))

    def snapshot_rows(self, grid: Grid1D) -> List[tuple]:
        """(t, node, alpha, beta, gamma) rows."""
        x = grid.nodes
        return [
            (float(t), float(x[j]), float(s[0, j]), float(s[1, j]), float(s[2, j]))
            for t, s in zip(self.times, self.states) for j in range(x.size)
        ]


class AdjointResult(BaseModel):
    """
    Discrete adjoint of the linearized map (y0, controls) -> y(t_end).

    ``initial`` is the adjoint state at the first time and ``controls`` the
    control-space adjoint, both in the weighted inner products of the grid.
    """
    model_config = ConfigDict(arbitrary_types_allowed=True)

    initial: np.ndarray
    controls: np.ndarray
    states: Optional[np.ndarray] = None


# ============================================================================
# REPORTS
# ============================================================================

class ReferenceRunRow(BaseModel):
    n_nodes: int
    h: float
    dt: float
    max_error: float = Field(..., description="max over steps and nodes of |y - ybar|")
    nodes_per_lens: float


class SimulationReport(BaseModel):
    """Forward solve of the full system from 0 with u = ubar, against the reference."""
    rows: List[ReferenceRunRow] = Field(default_factory=list)
    slope: Optional[float] = None
    support_ok: bool = True

    @property
    def passed(self) -> bool:
        return self.support_ok and (self.slope is None or self.slope >= 1.8)
