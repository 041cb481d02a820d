"""
Time weights, window layout and the jet bumps g_1, g_2, g_3 of each window.
"""
from __future__ import annotations

import logging
from math import factorial
from typing import List, NamedTuple, Sequence

import numpy as np

from ..core.jet import Jet
from ..errors import AdmissibilityError
from ..stationary.schemas import StationaryProfiles
from ..stationary.source_utils import flat_exp, flat_exp_values, plateau
from .schemas import Window, WindowCase

logger = logging.getLogger(__name__)

# 1 - t^2 below this is the flat rim of the weights; fields are returned as 0 there
TIME_FLOOR = 2e-3


# ============================================================================
# TIME WEIGHTS
# ============================================================================

class TimeJets(NamedTuple):
    """t-jets of the weights at a batch of times, all of the same order."""
    lam: Jet
    lam_dot: Jet
    ll: Jet      # lambda * lambda'
    l2: Jet      # lambda^2
    ell: Jet     # f0' / f0 = -2t / (1 - t^2)^2


class TimeWeights:
    """
    lambda(t) = (1 - t^2)^2 and f0(t) = e^(-1/(1 - t^2)), both 0 for |t| >= 1.

    Everything downstream is divided by f0; ell = f0'/f0 is rational, so the
    jets never see the flat factor.
    """

    @staticmethod
    def safe(t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return 1.0 - t * t > TIME_FLOOR

    @staticmethod
    def lam(t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        u = 1.0 - t * t
        return np.where(u > 0.0, u * u, 0.0)

    @staticmethod
    def lam_dot(t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        u = 1.0 - t * t
        return np.where(u > 0.0, -4.0 * t * u, 0.0)

    @staticmethod
    def f0(t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return flat_exp_values(1.0 - t * t, 1.0)

    @staticmethod
    def ell(t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        u = 1.0 - t * t
        return np.where(u > 0.0, -2.0 * t / np.where(u > 0.0, u, 1.0) ** 2, 0.0)

    @staticmethod
    def f0_jet(t, order: int) -> Jet:
        T = Jet.t_variable(t, order)
        return flat_exp(1.0 - T * T, 1.0)

    @staticmethod
    def jets(t, order: int) -> TimeJets:
        """Only meaningful where safe(t)."""
        T = Jet.t_variable(t, order)
        u = 1.0 - T * T
        lam = u * u
        lam_dot = -4.0 * T * u
        return TimeJets(lam=lam, lam_dot=lam_dot, ll=lam * lam_dot, l2=lam * lam, ell=-2.0 * T / (u * u))


# ============================================================================
# JET BUMPS
# ============================================================================

class JetBumps:
    """
    g_k = scale_k (z - center)^power_k chi, chi = 1 on |z - center| <= half_width/2.

    generic: (z-rho)^4/4!, (z-rho)^5/5!, (z-rho)^6/6!
    half:    (z-1/2)^2/2!, (z-1/2)^3/3!, (z-1/2)^4/4!
    axis:    z^(2k) / (2k(N + 2k - 2)), so that g'' + (N-1)/z g' = z^(2k-2) near 0
    """

    def __init__(self, center: float, half_width: float, case: WindowCase, N: int):
        self.center = float(center)
        self.half_width = float(half_width)
        self.case = WindowCase(case)
        self.N = N
        if self.case == WindowCase.GENERIC:
            self.powers = [4, 5, 6]
            self.scales = [1.0 / factorial(p) for p in self.powers]
        elif self.case == WindowCase.HALF:
            self.powers = [2, 3, 4]
            self.scales = [1.0 / factorial(p) for p in self.powers]
        else:
            self.powers = [2, 4, 6]
            self.scales = [1.0 / (2 * k * (N + 2 * k - 2)) for k in (1, 2, 3)]

    def jets(self, z, order: int) -> List[Jet]:
        z = np.asarray(z, dtype=float)
        Z = Jet.z_variable(z, order)
        chi = plateau(Z, self.center, self.half_width)
        h = Z - self.center
        return [s * h ** p * chi for s, p in zip(self.scales, self.powers)]

    def values(self, z) -> np.ndarray:
        """Array (3, *z.shape)."""
        return np.stack([g.value for g in self.jets(z, 0)])

    def __repr__(self) -> str:
        return f"JetBumps({self.case.value}, center={self.center:.6g}, half_width={self.half_width:.3g})"


def build_jet_bumps(rho: float, delta: float, case: WindowCase, N: int = 3) -> JetBumps:
    """
    Bumps of one window.

    Raises:
        AdmissibilityError: the window leaves (0, 1) (or is not centred at 0
            in the axis case)
    """
    case = WindowCase(case)
    if delta <= 0.0:
        raise AdmissibilityError("window half-width must be positive", {"delta": delta})
    if case == WindowCase.AXIS:
        if rho != 0.0 or delta >= 1.0:
            raise AdmissibilityError("axis window must be centred at 0 inside (-1, 1)",
                                     {"rho": rho, "delta": delta})
    elif rho - delta <= 0.0 or rho + delta >= 1.0:
        raise AdmissibilityError(f"window ({rho - delta:.6g}, {rho + delta:.6g}) leaves (0, 1)",
                                 {"rho": rho, "delta": delta})
    return JetBumps(rho, delta, case, N)


# ============================================================================
# LAYOUT
# ============================================================================

def window_half_widths(centers: Sequence[float], fraction: float) -> np.ndarray:
    """
    fraction * distance from each centre to its nearest neighbour.

    The neighbours of a centre are the other centres and the rim z = 1; the
    centres always include 0 and 1/2.
    """
    centers = np.asarray(centers, dtype=float)
    points = np.concatenate([centers, [1.0]])
    gaps = np.abs(centers[:, None] - points[None, :])
    gaps[np.arange(centers.size), np.arange(centers.size)] = np.inf
    nearest = np.min(gaps, axis=1)
    if np.any(nearest <= 0.0):
        raise AdmissibilityError("window centres coincide", {"centers": centers.tolist()})
    return fraction * nearest


def check_disjoint(windows: Sequence[Window]) -> None:
    ordered = sorted(windows, key=lambda w: w.center)
    for left, right in zip(ordered[:-1], ordered[1:]):
        if left.hi > right.lo:
            raise AdmissibilityError(
                f"windows at {left.center:.6g} and {right.center:.6g} overlap",
                {"left": left.model_dump(), "right": right.model_dump()},
            )


def layout_windows(profiles: StationaryProfiles, fraction: float) -> List[Window]:
    """The axis window, the window at 1/2 and one generic window per zero of C."""
    G, C = profiles.G, profiles.C
    widths = window_half_widths([0.0, 0.5] + profiles.rhos(), fraction)

    g_axis = G.jet(np.array([0.0]), 6).partial(0, 6)[0]
    g_half = G.jet(np.array([0.5]), 3).partial(0, 3)[0]
    windows = [
        Window(center=0.0, half_width=float(widths[0]), case=WindowCase.AXIS,
               m_sign=float(np.sign(g_axis)), c_sign=float(np.sign(C(0.0)))),
        Window(center=0.5, half_width=float(widths[1]), case=WindowCase.HALF,
               m_sign=float(np.sign(g_half)), c_sign=float(np.sign(C(0.5)))),
    ]
    for zero, width in zip(profiles.rho_list, widths[2:]):
        if zero.derivative is not None:
            slope = zero.derivative
        else:
            slope = C(zero.rho + 1e-6) - C(zero.rho - 1e-6)
        windows.append(Window(center=zero.rho, half_width=float(width), case=WindowCase.GENERIC,
                              m_sign=float(np.sign(G(zero.rho))), c_sign=float(np.sign(slope))))
    check_disjoint(windows)
    for w in windows:
        if w.m_sign == 0.0 or w.c_sign == 0.0:
            raise AdmissibilityError(f"degenerate window at {w.center:.6g}", w.model_dump())
    logger.info("windows %s", [(round(w.center, 6), round(w.half_width, 4)) for w in windows])
    return windows
