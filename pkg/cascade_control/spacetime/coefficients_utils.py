"""
The M / K / nu calculus and the coefficient functions f_1, f_2, f_3.

With a(t, r) = f0 A(z) + sum_k f_k g_k(z), z = r/(eps lambda), the heat
operator gives a_t - Delta a = -M / (eps lambda)^2 with

    M = sum_i [ f_i L0[g_i] + eps^2 lambda lambda' f_i z g_i' - eps^2 lambda^2 f_i' g_i ],

L0[g] = g'' + (N-1)/z g' and g_0 = A, f_0 = f0. Everything here is divided
by f0: Mhat = M / f0, fhat_k = f_k / f0, and f_i'/f0 = fhat_i' + ell fhat_i.
"""
from __future__ import annotations

import logging
from math import factorial
from typing import List, Optional, Tuple

import numpy as np

from ..core.jet import Jet
from ..stationary.profiles_utils import radial_laplacian
from ..stationary.schemas import StationaryProfiles
from .schemas import SpacetimeParams, Window, WindowCase
from .weights_utils import JetBumps, TimeJets, TimeWeights, build_jet_bumps

logger = logging.getLogger(__name__)

# z-order of Mhat at the centre needed to fix f_1, f_2, f_3
CASCADE_Z_ORDER = {WindowCase.GENERIC: 4, WindowCase.HALF: 2, WindowCase.AXIS: 4}


# ============================================================================
# M
# ============================================================================

def z_terms(g: Jet, z: np.ndarray, N: int) -> Tuple[Jet, Jet, Jet]:
    """(L0[g], z g', g) as z-jets two orders below g."""
    order = g.z_order - 2
    L0 = radial_laplacian(g, z, N)
    zg = Jet.z_variable(z, order) * g.dz().truncate(0, order)
    return L0, zg, g.truncate(0, order)


def m_term(fhat: Jet, fhat_dot: Jet, terms: Tuple[Jet, Jet, Jet], tj: TimeJets, eps2: float) -> Jet:
    """Contribution of one (f_i, g_i) pair to Mhat, as a bivariate jet."""
    L0, zg, g = terms
    out = fhat.outer(L0)
    out = out + eps2 * (tj.ll * fhat).outer(zg)
    return out - eps2 * (tj.l2 * (fhat_dot + tj.ell * fhat)).outer(g)


def base_m(terms: Tuple[Jet, Jet, Jet], tj: TimeJets, eps2: float) -> Jet:
    """The A-part of Mhat (f0 / f0 = 1, no loss of t-order)."""
    ones = Jet.constant(np.ones(tj.lam.batch_shape), tj.lam.t_order)
    zeros = Jet.constant(np.zeros(tj.lam.batch_shape), tj.lam.t_order)
    return m_term(ones, zeros, terms, tj, eps2)


def p_hat(M: Jet, Z: Jet, tj: TimeJets, eps2: float, N: int) -> Jet:
    """
    Phat = 3 Mhat_zz + Khat with

        K = -2 M_z^2 / M + 3(N-1)/z M_z + 6 eps^2 lambda lambda' M
            - 3 eps^2 lambda^2 M_t + 3 eps^2 lambda lambda' z M_z

    so that nu = M^(-2/3) (3 M_zz + K) = f0^(1/3) Mhat^(-2/3) Phat. Needs z > 0.
    """
    Mz = M.dz()
    Mzz = Mz.dz()
    Mt = M.dt()
    zo = Mzz.z_order
    LL = tj.ll.pad(z_order=zo)
    L2 = tj.l2.pad(z_order=zo)
    ELL = tj.ell.pad(z_order=zo)
    K = -2.0 * Mz * Mz / M
    K = K + 3.0 * (N - 1) * Mz / Z
    K = K + 6.0 * eps2 * (LL * M)
    K = K - 3.0 * eps2 * (L2 * (Mt + ELL * M))
    K = K + 3.0 * eps2 * (LL * (Z * Mz))
    return 3.0 * Mzz + K


def nu_from(M: Jet, P: Jet) -> Jet:
    """nuhat = Mhat^(-2/3) Phat."""
    return M.truncate(P.t_order, P.z_order).cbrt_power(-2) * P


# ============================================================================
# COEFFICIENT FUNCTIONS
# ============================================================================

class CoefficientFunctions:
    """
    fhat_1, fhat_2, fhat_3 of one window as t-jets.

    Built one after the other: each is read off a coefficient of Mhat (half
    and axis windows) or of Phat (generic windows) at the centre, computed
    with the previous ones in place and the current one set to 0.
    """

    def __init__(self, window: Window, bumps: JetBumps, profiles: StationaryProfiles,
                 epsilon: float, time_jet_order: int = 8):
        self.window = window
        self.bumps = bumps
        self.profiles = profiles
        self.epsilon = float(epsilon)
        self.eps2 = self.epsilon ** 2
        self.J = time_jet_order
        self.N = profiles.N
        zc = np.array([window.center])
        order = CASCADE_Z_ORDER[window.case]
        self._A_terms = z_terms(profiles.A.jet(zc, order + 2), zc, self.N)
        self._g_terms = [z_terms(g, zc, self.N) for g in bumps.jets(zc, order + 2)]
        self._Z = Jet.z_variable(zc, order, self.J)

    @property
    def output_order(self) -> int:
        """t-order of the returned fhat jets (generic windows lose the most)."""
        return self.J - 5

    def _coefficient(self, M: Jet, tj: TimeJets, k: int) -> Jet:
        case = self.window.case
        if case == WindowCase.GENERIC:
            P = p_hat(M, self._Z, tj, self.eps2, self.N)
            return P.z_coefficient(k - 1) * (-factorial(k - 1) / 3.0)
        if case == WindowCase.HALF:
            return M.z_coefficient(k - 1) * (-float(factorial(k - 1)))
        return M.z_coefficient(2 * k - 2) * -1.0

    def hat_jets(self, t, order: Optional[int] = None) -> List[Jet]:
        """
        fhat_k(t) = f_k(t) / f0(t), k = 1, 2, 3, as t-jets.

        Args:
            t: 1-d array of times; entries on the flat rim get zero jets
            order: t-order of the result (at most output_order)

        Returns:
            Three Jets with coefficients (order + 1, 1, len(t))
        """
        t = np.atleast_1d(np.asarray(t, dtype=float))
        order = self.output_order if order is None else order
        if order > self.output_order:
            raise ValueError(f"t-order {order} beyond stored order {self.output_order}")
        out = [np.zeros((order + 1, 1, t.size)) for _ in range(3)]
        safe = TimeWeights.safe(t)
        if np.any(safe):
            tj = TimeWeights.jets(t[safe], self.J)
            M = base_m(self._A_terms, tj, self.eps2)
            for k in (1, 2, 3):
                fk = self._coefficient(M, tj, k)
                M = M + m_term(fk, fk.dt(), self._g_terms[k - 1], tj, self.eps2)
                out[k - 1][:, :, safe] = fk.coeffs[: order + 1]
        return [Jet(c) for c in out]

    def values(self, t) -> np.ndarray:
        """f_1, f_2, f_3 at t, shape (3, len(t))."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        return np.stack([f.value for f in self.hat_jets(t, 0)]) * TimeWeights.f0(t)

    def derivatives(self, t) -> np.ndarray:
        """f_1', f_2', f_3' at t, shape (3, len(t))."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        f0 = TimeWeights.f0(t)
        ell = TimeWeights.ell(t)
        rows = []
        for f in self.hat_jets(t, 1):
            rows.append(f0 * (f.partial(1, 0) + ell * f.value))
        return np.stack(rows)


def build_coefficients(window: Window, epsilon: float, profiles: StationaryProfiles,
                       params: SpacetimeParams) -> CoefficientFunctions:
    bumps = build_jet_bumps(window.center, window.half_width, window.case, profiles.N)
    return CoefficientFunctions(window, bumps, profiles, epsilon, params.time_jet_order)


# ============================================================================
# MHAT AT ARBITRARY POINTS
# ============================================================================

def m_hat_jet(profiles: StationaryProfiles, t: np.ndarray, z: np.ndarray, z_order: int, t_order: int,
              epsilon: float, coefficients: Optional[CoefficientFunctions] = None) -> Jet:
    """
    Mhat at the pairs (t[k], z[k]) as a bivariate jet.

    Without coefficients only the A-part is present (the region off every
    window). z must be >= 0 and t on the safe part of (-1, 1).
    """
    t = np.atleast_1d(np.asarray(t, dtype=float))
    z = np.atleast_1d(np.asarray(z, dtype=float))
    eps2 = float(epsilon) ** 2
    tj = TimeWeights.jets(t, t_order + 1)
    M = base_m(z_terms(profiles.A.jet(z, z_order + 2), z, profiles.N), tj, eps2)
    if coefficients is not None:
        fhats = coefficients.hat_jets(t, t_order + 1)
        bumps = coefficients.bumps.jets(z, z_order + 2)
        for fk, g in zip(fhats, bumps):
            M = M + m_term(fk, fk.dt(), z_terms(g, z, profiles.N), tj, eps2)
    return M.truncate(t_order, z_order)


def nu_hat_jet(profiles: StationaryProfiles, t: np.ndarray, z: np.ndarray, z_order: int,
               epsilon: float, coefficients: Optional[CoefficientFunctions] = None) -> Jet:
    """nuhat = Mhat^(-2/3) Phat at (t, z), z > 0, t-order 0."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    z = np.atleast_1d(np.asarray(z, dtype=float))
    M = m_hat_jet(profiles, t, z, z_order + 2, 1, epsilon, coefficients)
    tj = TimeWeights.jets(t, 1)
    Z = Jet.z_variable(z, z_order + 2, 1)
    P = p_hat(M, Z, tj, float(epsilon) ** 2, profiles.N)
    return nu_from(M, P)
