"""
The reference trajectory (alphabar, betabar, gammabar, ubar) around x0.

    alphabar(t, x) = rbar^8 a(tau, zeta)
    betabar(t, x)  = rbar^2 b(tau, zeta)
    gammabar(t, x) = c(tau, zeta)
    ubar           = gammabar_t - Delta gammabar

with tau = (t - T/2) / rbar^2 and zeta = |x - x0| / rbar, so the supports sit
in |t - T/2| < rbar^2 and |x - x0| < rbar eps.
"""
from __future__ import annotations

import logging
from typing import List, Optional, Tuple

import numpy as np

from ..config import DomainKind
from ..core.quadrature import central_weights
from ..errors import AdmissibilityError, ConstructionError
from ..simulation.operators_utils import radial_laplacian
from ..simulation.schemas import Grid1D
from ..spacetime.fields_utils import ABCFields
from ..spacetime.schemas import WindowCase
from ..spacetime.verify_utils import MIN_SLOPE, clear_of_windows, pair_slope
from ..spacetime.weights_utils import TimeWeights
from .schemas import CouplingWindow, ReferenceParams, ReferenceReport, ReferenceResidualRow

logger = logging.getLogger(__name__)

UBAR_HALF_WIDTH = 4
UBAR_STEP = 0.01
LOCAL_PADDING = 1.25


def check_admissible(params: ReferenceParams) -> None:
    """
    rbar^2 < T/2 and the ball of radius rbar around x0 lies in omega.

    Raises:
        AdmissibilityError: naming the violated inclusion
    """
    if params.rbar ** 2 >= 0.5 * params.T:
        raise AdmissibilityError(
            f"(T/2 - rbar^2, T/2 + rbar^2) is not inside (0, {params.T:g})",
            {"rbar": params.rbar, "T": params.T},
        )
    if params.kind == DomainKind.BALL:
        if params.rbar >= params.omega_radius:
            raise AdmissibilityError(
                f"ball of radius {params.rbar:g} around x0 is not inside omega (radius {params.omega_radius:g})",
                {"rbar": params.rbar, "omega_radius": params.omega_radius},
            )
    elif not (params.omega_lo < params.x0 - params.rbar and params.x0 + params.rbar < params.omega_hi):
        raise AdmissibilityError(
            f"({params.x0 - params.rbar:g}, {params.x0 + params.rbar:g}) is not inside omega "
            f"({params.omega_lo:g}, {params.omega_hi:g})",
            {"x0": params.x0, "rbar": params.rbar, "omega": [params.omega_lo, params.omega_hi]},
        )


class ReferenceTrajectory:
    """Scaled evaluators of the fields; immutable after construction."""

    def __init__(self, fields: ABCFields, params: ReferenceParams):
        check_admissible(params)
        self.fields = fields
        self.params = params
        self.x0 = params.x0
        self.rbar = params.rbar
        self.T = params.T
        self.N = fields.N

    # --- geometry ---

    @property
    def epsilon(self) -> float:
        return self.fields.epsilon

    @property
    def lens_radius(self) -> float:
        return self.rbar * self.epsilon

    @property
    def active_interval(self) -> Tuple[float, float]:
        return 0.5 * self.T - self.rbar ** 2, 0.5 * self.T + self.rbar ** 2

    def distance(self, x) -> np.ndarray:
        """|x - x0| on balls (x is a radius), x - x0 on intervals (fields are even)."""
        x = np.asarray(x, dtype=float)
        if self.params.kind == DomainKind.BALL:
            return np.abs(x)
        return x - self.x0

    def scaled(self, t, x) -> Tuple[np.ndarray, np.ndarray]:
        t, x = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(x, dtype=float))
        return (t - 0.5 * self.T) / self.rbar ** 2, self.distance(x) / self.rbar

    # --- evaluators ---

    def abc(self, t, x) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(alphabar, betabar, gammabar) at (t, x)."""
        tau, zeta = self.scaled(t, x)
        a, b, c = self.fields.eval_abc(tau, zeta)
        return self.rbar ** 8 * a, self.rbar ** 2 * b, c

    def alpha(self, t, x) -> np.ndarray:
        return self.abc(t, x)[0]

    def beta(self, t, x) -> np.ndarray:
        return self.abc(t, x)[1]

    def gamma(self, t, x) -> np.ndarray:
        return self.abc(t, x)[2]

    def ubar(self, t, x) -> np.ndarray:
        """
        rbar^(-2) (c_tau - c_zz - (N-1)/zeta c_z) by central differences of c.

        Steps follow the lens: UBAR_STEP * eps lambda(tau) in zeta and
        UBAR_STEP * (1 - tau^2)^2 in tau. Exact zeros outside the lens.
        """
        tau, zeta = self.scaled(t, x)
        shape = tau.shape
        tau, zeta = tau.ravel(), np.abs(zeta.ravel())
        out = np.zeros(tau.size)
        inside, _ = self.fields.lens(tau, zeta)
        if not np.any(inside):
            return out.reshape(shape)

        ts, zs = tau[inside], zeta[inside]
        offsets = np.arange(-UBAR_HALF_WIDTH, UBAR_HALF_WIDTH + 1, dtype=float)
        d1 = central_weights(UBAR_HALF_WIDTH, 1)
        d2 = central_weights(UBAR_HALF_WIDTH, 2)
        ht = UBAR_STEP * (1.0 - ts * ts) ** 2
        hz = UBAR_STEP * self.epsilon * TimeWeights.lam(ts)
        m = offsets.size

        t_st = (ts[:, None] + offsets[None, :] * ht[:, None]).ravel()
        z_st = (zs[:, None] + offsets[None, :] * hz[:, None]).ravel()
        c_t = self.fields.eval_abc(t_st, np.repeat(zs, m))[2].reshape(-1, m)
        c_z = self.fields.eval_abc(np.repeat(ts, m), z_st)[2].reshape(-1, m)

        dc_t = c_t @ d1 / ht
        dc_z = c_z @ d1 / hz
        dc_zz = c_z @ d2 / hz ** 2
        if self.N == 1:
            lap = dc_zz
        else:
            axis = zs < 1e-12
            lap = np.where(axis, self.N * dc_zz, dc_zz + (self.N - 1) * dc_z / np.where(axis, 1.0, zs))
        out[inside] = (dc_t - lap) / self.rbar ** 2
        return out.reshape(shape)

    def on_grid(self, grid: Grid1D, times: np.ndarray, with_control: bool = True
                ) -> Tuple[np.ndarray, Optional[np.ndarray]]:
        """
        Reference states (n_times, 3, n_nodes) on a grid, and ubar (n_times, n_nodes).

        Dirichlet nodes are zeroed; they lie outside the lens by admissibility.
        """
        times = np.asarray(times, dtype=float)
        T, X = np.meshgrid(times, grid.nodes, indexing="ij")
        a, b, c = self.abc(T, X)
        states = np.stack([a, b, c], axis=1) * grid.interior
        u = None
        if with_control:
            u = self.ubar(T, X) * grid.interior
        return states, u

    def __repr__(self) -> str:
        return (f"ReferenceTrajectory(x0={self.x0:g}, rbar={self.rbar:g}, T={self.T:g}, "
                f"lens_radius={self.lens_radius:.3g})")


# ============================================================================
# VERIFICATION
# ============================================================================

def local_grid(traj: ReferenceTrajectory, n_nodes: int) -> Grid1D:
    """A grid hugging the lens, Dirichlet just outside it."""
    R = LOCAL_PADDING * traj.lens_radius
    if traj.params.kind == DomainKind.BALL:
        return Grid1D.radial(R, n_nodes, traj.N)
    return Grid1D.interval(traj.x0 - R, traj.x0 + R, n_nodes)


def _residual_row(traj: ReferenceTrajectory, n_nodes: int, taus: np.ndarray) -> ReferenceResidualRow:
    grid = local_grid(traj, n_nodes)
    x = grid.nodes
    # the same relative step in tau and in zeta / eps
    k = traj.rbar ** 2 * 0.5 * grid.h / traj.lens_radius
    interior = grid.interior
    res_a, res_b, scale_a, scale_b = 0.0, 0.0, 0.0, 0.0
    for tau in taus:
        t = 0.5 * traj.T + traj.rbar ** 2 * tau
        inside, z = traj.fields.lens(np.full(x.shape, tau), traj.distance(x) / traj.rbar)
        dz = grid.h / (traj.lens_radius * TimeWeights.lam(tau))
        smooth = interior & inside & clear_of_windows(traj.fields, z, 3.0 * dz)
        a_p, b_p, _ = traj.abc(t + k, x)
        a_m, b_m, _ = traj.abc(t - k, x)
        a0, b0, c0 = traj.abc(t, x)
        ra = (a_p - a_m) / (2.0 * k) - radial_laplacian(a0, grid) - b0 ** 3
        rb = (b_p - b_m) / (2.0 * k) - radial_laplacian(b0, grid) - c0 ** 3
        if np.any(smooth):
            res_a = max(res_a, float(np.max(np.abs(ra[smooth]))))
            res_b = max(res_b, float(np.max(np.abs(rb[smooth]))))
        scale_a = max(scale_a, float(np.max(np.abs(b0 ** 3))))
        scale_b = max(scale_b, float(np.max(np.abs(c0 ** 3))))
    return ReferenceResidualRow(
        n_nodes=n_nodes, h=grid.h,
        residual_alpha=res_a / max(scale_a, 1e-300),
        residual_beta=res_b / max(scale_b, 1e-300),
    )


def verify_reference(traj: ReferenceTrajectory, n_list=(129, 257, 513), taus: Optional[np.ndarray] = None,
                     support_samples: int = 41) -> ReferenceReport:
    """
    Residuals of the first two equations on a refinement family of lens grids,
    their convergence order, support and sign checks.

    The Laplacian is the simulator's second-order stencil; the time derivative
    a central difference with the matching step. Residuals are taken at the
    nodes whose stencils stay clear of the windows. The third equation holds
    by construction of ubar.
    """
    taus = np.linspace(-0.6, 0.6, 7) if taus is None else np.asarray(taus, dtype=float)
    report = ReferenceReport(lens_radius=traj.lens_radius)
    for n in n_list:
        report.rows.append(_residual_row(traj, n, taus))
    for key in ("residual_alpha", "residual_beta"):
        pairs = zip(report.rows, report.rows[1:])
        slopes = [pair_slope(coarse.h, getattr(coarse, key), fine.h, getattr(fine, key)) for coarse, fine in pairs]
        if slopes:
            report.slopes[key] = min(slopes)
    if report.slopes:
        report.checks["residual_slope"] = min(report.slopes.values()) >= MIN_SLOPE

    # supports: zero for |t - T/2| >= rbar^2 or |x - x0| >= rbar
    t = np.linspace(0.0, traj.T, support_samples)
    if traj.params.kind == DomainKind.BALL:
        x = np.linspace(0.0, traj.params.radius, support_samples)
    else:
        x = np.linspace(traj.params.x_lo, traj.params.x_hi, support_samples)
    Tg, Xg = np.meshgrid(t, x, indexing="ij")
    t1, t2 = traj.active_interval
    outside = (Tg <= t1) | (Tg >= t2) | (np.abs(traj.distance(Xg)) >= traj.rbar)
    a, b, c = traj.abc(Tg[outside], Xg[outside])
    u = traj.ubar(Tg[outside], Xg[outside])
    report.checks["support"] = bool(not np.any(a) and not np.any(b) and not np.any(c) and not np.any(u))
    report.checks["vanishes_at_0_and_T"] = bool(
        not np.any(np.stack(traj.abc(np.zeros_like(x), x))) and not np.any(np.stack(traj.abc(np.full_like(x, traj.T), x)))
    )

    early = t1 - 0.5 * traj.rbar ** 2
    if early > 0.0:
        xs = traj.x0 + traj.lens_radius * np.linspace(-0.9, 0.9, 9) if traj.params.kind == DomainKind.INTERVAL \
            else traj.lens_radius * np.linspace(0.0, 0.9, 9)
        values = np.stack(traj.abc(np.full_like(xs, early), xs) + (traj.ubar(np.full_like(xs, early), xs),))
        report.early_max = float(np.max(np.abs(values)))
        report.checks["zero_before_lens"] = report.early_max == 0.0

    # b < 0 where M > 0 in the generic windows (b = -(eps lambda)^(-2/3) M^(1/3))
    signs = []
    for w in traj.fields.windows:
        if w.case != WindowCase.GENERIC:
            continue
        xs = traj.x0 + w.center * traj.lens_radius
        beta = traj.beta(0.5 * traj.T, np.array([xs]))[0]
        signs.append(np.sign(beta ** 3) == -w.m_sign)
    report.checks["beta_sign"] = bool(all(signs))
    return report


# ============================================================================
# COUPLING WINDOW
# ============================================================================

def _candidate_bands(traj: ReferenceTrajectory) -> List[Tuple[float, float, float]]:
    """(zA, zB, rho) bands on both sides of each generic zero, inside the plateau of its bumps."""
    bands = []
    for w in traj.fields.windows:
        if w.case != WindowCase.GENERIC:
            continue
        for side in (1.0, -1.0):
            ends = sorted((w.center + side * 0.15 * w.half_width, w.center + side * 0.45 * w.half_width))
            if ends[0] > 0.0 and ends[1] < 1.0:
                bands.append((ends[0], ends[1], w.center))
    return bands


def locate_coupling_window(traj: ReferenceTrajectory, scan_points: int = 101) -> CouplingWindow:
    """
    A time interval and nested regions where betabar and gammabar stay away from 0.

    A band zA < z < zB of the lens variable is kept for lambda(tau) in
    [lambda0, 1] by the fixed radii zA rbar eps < |x - x0| < zB rbar eps lambda0;
    lambda0 = (1 + zA/zB)/2 fixes tau0 and [t1, t2] = T/2 -+ rbar^2 tau0.
    The margins are the minima of |betabar| and |gammabar| on a dense scan of
    the closed set.

    Raises:
        ConstructionError: no band of any generic window has positive margins
    """
    tried = []
    for zA, zB, rho in _candidate_bands(traj):
        lam0 = 0.5 * (1.0 + zA / zB)
        tau0 = float(np.sqrt(1.0 - np.sqrt(lam0)))
        r_lo, r_hi = zA * traj.lens_radius, zB * traj.lens_radius * lam0
        t1, t2 = 0.5 * traj.T - traj.rbar ** 2 * tau0, 0.5 * traj.T + traj.rbar ** 2 * tau0
        if traj.params.kind == DomainKind.BALL:
            omega1 = (r_lo, r_hi)
        else:
            omega1 = (traj.x0 + r_lo, traj.x0 + r_hi)
        q = 0.25 * (omega1[1] - omega1[0])
        omega2 = (omega1[0] + q, omega1[1] - q)

        Tg, Xg = np.meshgrid(np.linspace(t1, t2, scan_points), np.linspace(*omega1, scan_points), indexing="ij")
        _, beta, gamma = traj.abc(Tg, Xg)
        mu_beta, mu_gamma = float(np.min(np.abs(beta))), float(np.min(np.abs(gamma)))
        tried.append({"rho": rho, "z_band": [zA, zB], "mu_beta": mu_beta, "mu_gamma": mu_gamma})
        if mu_beta > 0.0 and mu_gamma > 0.0:
            window = CouplingWindow(t1=t1, t2=t2, omega1=omega1, omega2=omega2, mu_beta=mu_beta,
                                    mu_gamma=mu_gamma, window_center=rho, z_band=(zA, zB))
            logger.info("coupling window t in [%.6g, %.6g], omega1 = (%.4g, %.4g), mu = (%.3e, %.3e)",
                        t1, t2, omega1[0], omega1[1], mu_beta, mu_gamma)
            return window
    raise ConstructionError("no coupling window with betabar and gammabar bounded away from 0",
                            {"tried": tried})
