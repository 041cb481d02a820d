"""
Local repair of degenerate zeros of C.

Around a zero zeta the source H = B'' + (N-1)/z B' is replaced by

    sign-change:  s eps^2 (z - zeta)^3 phi + (1 - phi)(H + xi)
    same-sign:    s eps^2 phi               + (1 - phi)(H + xi)

with phi a flat cutoff equal to 1 on |z - zeta| <= eps/2, and xi a
combination of four bumps placed off the core. The coefficients of xi are
found by damped Newton so that B, B', A, A' at zeta + eta match the
original profiles, the ODE being integrated from zeta - eta with
B'' + (N-1)/z B' = H_new and A'' + (N-1)/z A' = -B^3.
"""
from __future__ import annotations

import logging
from typing import List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict
from scipy.integrate import solve_ivp

from ..audit.audit_utils import log_stationary_event
from ..audit.models import AuditAction
from ..core.jet import Jet, signed_cbrt
from ..core.piecewise import Piece, PiecewiseAnalytic
from ..core.quadrature import ChebyshevTable
from ..errors import ConstructionError, ConvergenceError
from .profiles_utils import radial_operator
from .schemas import CZero, RepairMode, RepairRecord, StationaryParams
from .source_utils import flat_exp, flat_exp_values, plateau, plateau_values

logger = logging.getLogger(__name__)

BUMP_OFFSETS = (-0.7, -0.4, 0.4, 0.7)
BUMP_WIDTH = 0.15
WINDOW_FRACTION = 0.45
NEWTON_TARGET = 1e-13
NEWTON_ACCEPT = 1e-10


# ============================================================================
# BUMPS
# ============================================================================

class BumpBasis:
    """Four bumps exp(-1/(1 - ((z - c)/w)^2)) at zeta + eta * offsets."""

    def __init__(self, zeta: float, eta: float):
        self.centers = zeta + eta * np.array(BUMP_OFFSETS)
        self.width = BUMP_WIDTH * eta

    def values(self, z) -> np.ndarray:
        """Array (4, *z.shape)."""
        z = np.asarray(z, dtype=float)
        x = (z[None, ...] - self.centers.reshape((4,) + (1,) * z.ndim)) / self.width
        return flat_exp_values(1.0 - x * x, 1.0)

    def jets(self, z: Jet) -> List[Jet]:
        return [flat_exp(1.0 - ((z - c) / self.width) ** 2, 1.0) for c in self.centers]


# ============================================================================
# SERIES SOLUTION OF THE RADIAL ODE
# ============================================================================

def radial_series(source: Jet, z: np.ndarray, value, slope, N: int, order: int) -> Jet:
    """
    Taylor jet of f with f'' + (N-1)/z f' = source, f(z) = value, f'(z) = slope.

    p = f' satisfies p' = source - (N-1) q p with q = 1/z, solved coefficient
    by coefficient.
    """
    z = np.asarray(z, dtype=float)
    src = source.coeffs[0]
    q = [(-1.0) ** k / z ** (k + 1) for k in range(order)]
    p = np.zeros((order,) + z.shape)
    p[0] = slope
    for k in range(order - 1):
        conv = sum(q[i] * p[k - i] for i in range(k + 1))
        p[k + 1] = (src[k] - (N - 1) * conv) / (k + 1)
    f = np.zeros((1, order + 1) + z.shape)
    f[0, 0] = value
    f[0, 1:] = p / np.arange(1, order + 1, dtype=float).reshape((-1,) + (1,) * z.ndim)
    return Jet(f)


# ============================================================================
# ENDPOINT PROBLEM
# ============================================================================

class LocalRepairProblem:
    """
    The endpoint map F(eps, xi) on [zeta - eta, zeta + eta].

    F(xi) = (B, B', A, A')(zeta + eta) of the modified ODE minus the same
    data of the original profiles. The Jacobian comes from the variational
    equations integrated alongside.
    """

    def __init__(self, A: PiecewiseAnalytic, B: PiecewiseAnalytic, zeta: float, eta: float,
                 N: int, mode: RepairMode = RepairMode.SIGN_CHANGE, epsilon: Optional[float] = None):
        if zeta - eta <= 0.0:
            raise ConstructionError("repair window reaches the axis", {"zeta": zeta, "eta": eta})
        self.A, self.B = A, B
        self.zeta, self.eta, self.N = float(zeta), float(eta), N
        self.mode = RepairMode(mode)
        self.epsilon = eta / 5.0 if epsilon is None else float(epsilon)
        self.z_lo, self.z_hi = self.zeta - self.eta, self.zeta + self.eta
        self.basis = BumpBasis(self.zeta, self.eta)
        self.H_B = ChebyshevTable(lambda z: radial_operator(B, z, 0, N).value,
                                  [self.z_lo, self.zeta, self.z_hi])
        self.sign = float(np.sign(self.H_B(np.array([self.zeta + 0.5 * self.eta]))[0]))
        if self.sign == 0.0:
            raise ConstructionError("source vanishes next to the zero", {"zeta": zeta})

        b = B.jet(np.array([self.z_lo, self.z_hi]), 1).z_derivatives()
        a = A.jet(np.array([self.z_lo, self.z_hi]), 1).z_derivatives()
        self.start = np.array([b[0, 0], b[1, 0], a[0, 0], a[1, 0]])
        self.target = np.array([b[0, 1], b[1, 1], a[0, 1], a[1, 1]])
        self.scale = max(1.0, float(np.max(np.abs(self.target))))
        self.calls = 0

    # --- source ---

    def cutoff(self, z) -> np.ndarray:
        if self.epsilon == 0.0:
            return np.zeros_like(np.asarray(z, dtype=float))
        return plateau_values((np.asarray(z, dtype=float) - self.zeta) / self.epsilon)

    def core(self, z, phi) -> np.ndarray:
        lead = self.sign * self.epsilon ** 2 * phi
        if self.mode == RepairMode.SIGN_CHANGE:
            return lead * (np.asarray(z) - self.zeta) ** 3
        return lead

    def source(self, z, xi: np.ndarray) -> np.ndarray:
        phi = self.cutoff(z)
        outer = self.H_B(z) + np.tensordot(xi, self.basis.values(z), axes=1)
        return self.core(z, phi) + (1.0 - phi) * outer

    def source_jet(self, z: np.ndarray, order: int, xi: np.ndarray) -> Jet:
        Z = Jet.z_variable(z, order)
        if self.epsilon == 0.0:
            phi = Jet.constant(np.zeros(z.shape), 0, order)
        else:
            phi = plateau(Z, self.zeta, self.epsilon)
        outer = radial_operator(self.B, z, order, self.N)
        for coef, psi in zip(xi, self.basis.jets(Z)):
            outer = outer + coef * psi
        lead = self.sign * self.epsilon ** 2 * phi
        if self.mode == RepairMode.SIGN_CHANGE:
            lead = lead * (Z - self.zeta) ** 3
        return lead + (1.0 - phi) * outer

    # --- integration ---

    def _rhs(self, z, y, xi):
        self.calls += 1
        N = self.N
        phi = self.cutoff(z)
        psi = self.basis.values(z)
        b, bp, a, ap = y[0], y[1], y[2], y[3]
        H = self.core(z, phi) + (1.0 - phi) * (self.H_B(np.array([z]))[0] + xi @ psi)
        out = np.empty_like(y)
        out[0] = bp
        out[1] = H - (N - 1) / z * bp
        out[2] = ap
        out[3] = -b ** 3 - (N - 1) / z * ap
        var = y[4:].reshape(4, 4)
        dvar = np.empty_like(var)
        dvar[:, 0] = var[:, 1]
        dvar[:, 1] = (1.0 - phi) * psi - (N - 1) / z * var[:, 1]
        dvar[:, 2] = var[:, 3]
        dvar[:, 3] = -3.0 * b * b * var[:, 0] - (N - 1) / z * var[:, 3]
        out[4:] = dvar.ravel()
        return out

    def integrate(self, xi: np.ndarray, dense: bool = False):
        y0 = np.concatenate([self.start, np.zeros(16)])
        sol = solve_ivp(self._rhs, (self.z_lo, self.z_hi), y0, method="DOP853", args=(np.asarray(xi),),
                        rtol=1e-13, atol=1e-15, dense_output=dense)
        if not sol.success:
            raise ConvergenceError(f"repair ODE failed: {sol.message}", context={"zeta": self.zeta})
        return sol

    def residual_and_jacobian(self, xi: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        end = self.integrate(xi).y[:, -1]
        F = end[:4] - self.target
        J = end[4:].reshape(4, 4).T
        return F, J

    def residual(self, xi: np.ndarray) -> np.ndarray:
        return self.residual_and_jacobian(xi)[0]


def endpoint_map(A: PiecewiseAnalytic, B: PiecewiseAnalytic, zeta: float, eta: float, N: int,
                 epsilon: float, xi: Sequence[float], mode: RepairMode = RepairMode.SIGN_CHANGE) -> np.ndarray:
    """F(eps, xi) for a single evaluation."""
    problem = LocalRepairProblem(A, B, zeta, eta, N, mode, epsilon)
    return problem.residual(np.asarray(xi, dtype=float))


def endpoint_jacobian(A: PiecewiseAnalytic, B: PiecewiseAnalytic, zeta: float, eta: float, N: int,
                      epsilon: float = 0.0) -> np.ndarray:
    """4x4 derivative of F in xi at xi = 0."""
    problem = LocalRepairProblem(A, B, zeta, eta, N, RepairMode.SIGN_CHANGE, epsilon)
    return problem.residual_and_jacobian(np.zeros(4))[1]


def solve_endpoint(problem: LocalRepairProblem, maxiter: int = 30) -> Tuple[np.ndarray, List[float]]:
    """
    Damped Newton on F(xi) = 0 with backtracking.

    Iterates down to NEWTON_TARGET * scale; a stagnating run is accepted once
    it is below NEWTON_ACCEPT * scale. The mismatch of A' at the window end
    is what the weighted integral of the repaired source is off by.
    """
    xi = np.zeros(4)
    F, J = problem.residual_and_jacobian(xi)
    history = [float(np.linalg.norm(F))]
    tol = NEWTON_TARGET * problem.scale
    accept = NEWTON_ACCEPT * problem.scale
    for _ in range(maxiter):
        if history[-1] <= tol:
            return xi, history
        try:
            step = np.linalg.solve(J, -F)
        except np.linalg.LinAlgError as e:
            raise ConvergenceError("singular endpoint Jacobian", history,
                                   {"zeta": problem.zeta}) from e
        lam = 1.0
        while lam > 1e-4:
            trial = xi + lam * step
            F_trial, J_trial = problem.residual_and_jacobian(trial)
            if np.linalg.norm(F_trial) < (1.0 - 1e-4 * lam) * history[-1]:
                break
            lam *= 0.5
        else:
            if history[-1] <= accept:
                return xi, history
            raise ConvergenceError("Newton stagnated in the zero repair", history,
                                   {"zeta": problem.zeta, "residual": history[-1]})
        xi, F, J = trial, F_trial, J_trial
        history.append(float(np.linalg.norm(F)))
    if history[-1] > accept:
        raise ConvergenceError("Newton did not converge in the zero repair", history,
                               {"zeta": problem.zeta, "residual": history[-1]})
    return xi, history


# ============================================================================
# REPAIRED WINDOW
# ============================================================================

class RepairedWindow(BaseModel):
    """Profiles after one repair, the spliced pieces mirrored to -zeta by parity."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    A: PiecewiseAnalytic
    B: PiecewiseAnalytic
    C: PiecewiseAnalytic
    G: PiecewiseAnalytic
    record: RepairRecord


class _WindowJets:
    def __init__(self, problem: LocalRepairProblem, xi: np.ndarray, sol):
        self.problem = problem
        self.xi = xi
        self.sol = sol

    def jets(self, z: np.ndarray, order: int) -> Tuple[Jet, Jet, Jet]:
        """(B, A, H) of the repaired window at the points z."""
        z = np.asarray(z, dtype=float)
        order = max(order, 1)
        y = self.sol.sol(z)
        H = self.problem.source_jet(z, order, self.xi)
        B = radial_series(H, z, y[0], y[1], self.problem.N, order)
        A = radial_series(-(B ** 3), z, y[2], y[3], self.problem.N, order)
        return B, A, H


def repair_window_width(zeros: Sequence[CZero], index: int, blends: Sequence[tuple]) -> float:
    """0.45 of the distance to the nearest other zero or blend end."""
    rho = zeros[index].rho
    gaps = [abs(rho - z.rho) for k, z in enumerate(zeros) if k != index]
    for lo, hi in blends:
        if lo < rho < hi:
            gaps += [rho - lo, hi - rho]
    return WINDOW_FRACTION * min(gaps)


def repair_zero(B: PiecewiseAnalytic, zeta: float, eta: float, mode: RepairMode, *,
                A: PiecewiseAnalytic, G: PiecewiseAnalytic, C: PiecewiseAnalytic, N: int,
                epsilon: Optional[float] = None) -> RepairedWindow:
    """
    Replace (A, B, C, G) on [zeta - eta, zeta + eta].

    The core source is s eps^2 (z - zeta)^3 with s the sign of H just right of
    zeta, so C'(zeta) = -cbrt(s eps^2) = -s |eps|^(2/3). For an increasing H
    (s = +1) this is the slope -|eps|^(2/3); a decreasing H gets the mirrored
    core, whose sign agrees with H + xi on both sides of the core.

    Returns:
        RepairedWindow; in sign-change mode C'(zeta) = -cbrt(s eps^2),
        in same-sign mode C has no zero on the window

    Raises:
        ConvergenceError: Newton stagnation (the record carries the history)
        ConstructionError: the modified source changes sign off the core
    """
    mode = RepairMode(mode)
    problem = LocalRepairProblem(A, B, zeta, eta, N, mode, epsilon)
    try:
        xi, history = solve_endpoint(problem)
    except ConvergenceError as e:
        log_stationary_event(AuditAction.REPAIR, f"zeta={zeta:.6g}", {"history": e.history},
                             success=False, error_message=str(e))
        raise
    sol = problem.integrate(xi, dense=True)

    # H + xi keeps the sign of H off the core
    z = np.linspace(problem.z_lo, problem.z_hi, 4001)
    off_core = np.abs(z - zeta) >= 0.5 * problem.epsilon
    H_B = problem.H_B(z)
    outer = H_B + xi @ problem.basis.values(z)
    flipped = off_core & (np.sign(outer) != np.sign(H_B))
    if np.any(flipped):
        z_bad = float(z[np.argmax(flipped)])
        raise ConstructionError("repaired source changes sign off the core",
                                {"zeta": zeta, "z": z_bad, "xi": xi.tolist()})

    window = _WindowJets(problem, xi, sol)
    eps = problem.epsilon
    lo, hi = problem.z_lo, problem.z_hi
    root = float(signed_cbrt(problem.sign * eps ** 2))

    def b_fn(z, order):
        return window.jets(z, order)[0]

    def a_fn(z, order):
        return window.jets(z, order)[1]

    def g_fn(z, order):
        return -(window.jets(z, order)[0] ** 3)

    def c_outer(z, order):
        return -(window.jets(z, order)[2].cbrt())

    def c_core(z, order):
        Z = Jet.z_variable(z, order)
        if mode == RepairMode.SIGN_CHANGE:
            return -root * (Z - zeta)
        return Jet.constant(np.full(np.shape(z), -root), 0, order)

    label = f"repair@{zeta:.6g}"
    C_new = C.splice(Piece(lo, zeta - 0.5 * eps, c_outer, label))
    C_new = C_new.splice(Piece(zeta - 0.5 * eps, zeta + 0.5 * eps, c_core, label + ":core"))
    C_new = C_new.splice(Piece(zeta + 0.5 * eps, hi, c_outer, label))

    record = RepairRecord(
        zeta=zeta, eta=eta, epsilon=eps, mode=mode, sign=problem.sign,
        xi=[float(v) for v in xi], residual=history[-1], iterations=len(history) - 1,
        history=history, c_slope=-root if mode == RepairMode.SIGN_CHANGE else 0.0,
    )
    log_stationary_event(AuditAction.REPAIR, label, record.model_dump(mode="json"))
    return RepairedWindow(
        A=A.splice(Piece(lo, hi, a_fn, label)),
        B=B.splice(Piece(lo, hi, b_fn, label)),
        C=C_new,
        G=G.splice(Piece(lo, hi, g_fn, label)),
        record=record,
    )


# ============================================================================
# CONTROLLABILITY
# ============================================================================

def controllability_vectors(B: PiecewiseAnalytic, z, N: int) -> np.ndarray:
    """
    Vectors e0..e3 of the linearized system in (dB, dB', dA, dA').

    The linearization is x' = K x + e0 u with theta = -(N-1)/z and
    e_i = e_{i-1}' - K e_{i-1}. Returns shape (4, 4, *z.shape) with e_i in
    column i; det = 9 B^4.
    """
    z = np.asarray(z, dtype=float)
    d = B.derivatives(z, 1)
    b, bp = d[0], d[1]
    th = -(N - 1) / z
    th1 = (N - 1) / z ** 2
    th2 = -2.0 * (N - 1) / z ** 3
    zero, one = np.zeros_like(z), np.ones_like(z)
    e0 = [zero, one, zero, zero]
    e1 = [-one, -th, zero, zero]
    e2 = [th, -th1 + th * th, zero, -3.0 * b * b]
    e3 = [2.0 * th1 - th * th, -th2 + 3.0 * th * th1 - th ** 3, 3.0 * b * b, 6.0 * b * b * th - 6.0 * b * bp]
    return np.stack([np.stack(e) for e in (e0, e1, e2, e3)], axis=1)


def controllability_determinant(B: PiecewiseAnalytic, z, N: int) -> np.ndarray:
    vectors = controllability_vectors(B, z, N)
    moved = np.moveaxis(vectors, (0, 1), (-2, -1))
    return np.linalg.det(moved)
