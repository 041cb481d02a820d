"""
Evaluation of the fields (a, b, c) on the lens |r| < eps lambda(t).

    a = f0 (A(z) + sum_k fhat_k g_k(z))
    b = -(eps lambda)^(-2/3) f0^(1/3) Mhat^(1/3)
    c = (eps lambda)^(-8/9) f0^(1/9) chat

where chat depends on the region of z:

    off the windows   chat = (nuhat / 9)^(1/3)
    generic window    chat = (z - rho) (phi / 9)^(1/3),  phi = 1/2 int (1-s)^2 nuhat_zzz(rho + s(z - rho)) ds
    window at 1/2     chat = Qhat^(1/3) with What = (z - 1/2) Mtilde^(1/3)
    axis window       chat = Qhat^(1/3) with What = z^2 Mtilde^(1/3)

and Qhat = L0[What] + eps^2 lambda lambda'(z What_z + 2/3 What) - eps^2 lambda^2 (What_t + ell What / 3).
All cube roots are signed.
"""
from __future__ import annotations

import logging
from typing import Callable, List, Optional, Tuple

import numpy as np

from ..core.jet import Jet, signed_cbrt, stack_pieces
from ..core.quadrature import gauss_legendre_unit
from ..stationary.schemas import StationaryProfiles
from ..stationary.source_utils import NEAR_ONE_FLOOR
from .coefficients_utils import CoefficientFunctions, build_coefficients, m_hat_jet, nu_hat_jet
from .schemas import SpacetimeParams, Window, WindowCase
from .weights_utils import TimeWeights

logger = logging.getLogger(__name__)

OFF_WINDOWS = -1


def remainder_jet(jet_fn: Callable[[np.ndarray, np.ndarray, int], Jet], t: np.ndarray, z: np.ndarray,
                  center: float, derivative: int, power: int, norm: float, z_order: int,
                  nodes: int) -> Jet:
    """
    Jet in (t, z) of norm * int_0^1 (1-s)^power F^(derivative)(t, center + s(z - center)) ds.

    ``jet_fn(t, y, order)`` returns the bivariate jet of F at (t, y). The
    z-derivative of the integrand brings a factor s per order.
    """
    s, w = gauss_legendre_unit(nodes)
    h = z - center
    acc: Optional[Jet] = None
    for sq, wq in zip(s, w):
        F = jet_fn(t, center + sq * h, z_order + derivative)
        for _ in range(derivative):
            F = F.dz()
        scale = (sq ** np.arange(F.z_order + 1)).reshape((1, -1) + (1,) * len(F.batch_shape))
        term = Jet(F.coeffs * scale * (wq * (1.0 - sq) ** power))
        acc = term if acc is None else acc + term
    return acc * norm


class ABCFields:
    """The fields of one epsilon; immutable after construction."""

    def __init__(self, profiles: StationaryProfiles, params: SpacetimeParams, epsilon: float,
                 windows: List[Window]):
        self.profiles = profiles
        self.params = params
        self.epsilon = float(epsilon)
        self.eps2 = self.epsilon ** 2
        self.windows = list(windows)
        self.coefficients: List[CoefficientFunctions] = [
            build_coefficients(w, self.epsilon, profiles, params) for w in self.windows
        ]
        self.N = profiles.N

    # --- geometry ---

    def lens(self, t, r) -> Tuple[np.ndarray, np.ndarray]:
        """Mask of the evaluable points of the lens and z = |r| / (eps lambda) there."""
        t, r = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(r, dtype=float))
        scale = self.epsilon * TimeWeights.lam(t)
        inside = TimeWeights.safe(t) & (np.abs(r) < scale)
        z = np.zeros(t.shape)
        z[inside] = np.abs(r[inside]) / scale[inside]
        inside &= 1.0 - z * z > NEAR_ONE_FLOOR
        return inside, z

    def region(self, z) -> np.ndarray:
        z = np.abs(np.asarray(z, dtype=float))
        out = np.full(z.shape, OFF_WINDOWS, dtype=int)
        for index, w in enumerate(self.windows):
            out[np.abs(z - w.center) < w.half_width] = index
        return out

    def _coefficients(self, index: int) -> Optional[CoefficientFunctions]:
        return None if index == OFF_WINDOWS else self.coefficients[index]

    # --- jets ---

    def m_hat(self, t, z, z_order: int = 0, t_order: int = 0) -> Jet:
        """Mhat = M / f0 at the pairs (t, |z|), routed to the right window."""
        t = np.atleast_1d(np.asarray(t, dtype=float)).ravel()
        z = np.abs(np.atleast_1d(np.asarray(z, dtype=float)).ravel())
        regions = self.region(z)
        parts = []
        for index in np.unique(regions):
            mask = regions == index
            parts.append((mask, m_hat_jet(self.profiles, t[mask], z[mask], z_order, t_order,
                                          self.epsilon, self._coefficients(index))))
        return stack_pieces(z_order, z.size, parts, t_order)

    def eval_M_jet(self, t, z, z_order: int = 0, t_order: int = 0) -> Jet:
        """
        M itself (with the f0 factor) as a bivariate jet.

        Raises:
            ValueError: t_order beyond what the coefficient jets carry
        """
        max_t = self.params.time_jet_order - 6
        if t_order > max_t:
            raise ValueError(f"t-order {t_order} beyond stored order {max_t}")
        t = np.atleast_1d(np.asarray(t, dtype=float)).ravel()
        M = self.m_hat(t, z, z_order, t_order)
        F0 = TimeWeights.f0_jet(t, t_order).pad(z_order=z_order)
        return F0 * M

    def nu_hat(self, t, z, z_order: int = 0) -> Jet:
        """nuhat = nu / f0^(1/3), z > 0."""
        t = np.atleast_1d(np.asarray(t, dtype=float)).ravel()
        z = np.abs(np.atleast_1d(np.asarray(z, dtype=float)).ravel())
        regions = self.region(z)
        parts = []
        for index in np.unique(regions):
            mask = regions == index
            parts.append((mask, nu_hat_jet(self.profiles, t[mask], z[mask], z_order,
                                           self.epsilon, self._coefficients(index))))
        return stack_pieces(z_order, z.size, parts)

    def phi_tilde(self, index: int, t: np.ndarray, z: np.ndarray) -> np.ndarray:
        """1/2 int (1-s)^2 nuhat_zzz(t, rho + s(z - rho)) ds in a generic window."""
        coeff = self.coefficients[index]
        w = self.windows[index]

        def nu_fn(ts, y, order):
            return nu_hat_jet(self.profiles, ts, y, order, self.epsilon, coeff)

        return remainder_jet(nu_fn, t, z, w.center, 3, 2, 0.5, 0, self.params.quadrature_nodes).value

    def m_tilde(self, index: int, t: np.ndarray, z: np.ndarray) -> Jet:
        """Remainder factor of Mhat at 1/2 (order 3) or at the axis (order 6), jet to (1, 2)."""
        coeff = self.coefficients[index]
        w = self.windows[index]

        def m_fn(ts, y, order):
            return m_hat_jet(self.profiles, ts, y, order, 1, self.epsilon, coeff)

        if w.case == WindowCase.HALF:
            return remainder_jet(m_fn, t, z, w.center, 3, 2, 0.5, 2, self.params.quadrature_nodes)
        if w.case == WindowCase.AXIS:
            return remainder_jet(m_fn, t, z, 0.0, 6, 5, 1.0 / 120.0, 2, self.params.quadrature_nodes)
        raise ValueError(f"no remainder factor for a {w.case.value} window")

    # --- c ---

    def _q_hat(self, t, z, W0, Wz, Wzz, Wt, Wz_over_z) -> np.ndarray:
        lam = TimeWeights.lam(t)
        ll = lam * TimeWeights.lam_dot(t)
        ell = TimeWeights.ell(t)
        out = Wzz + (self.N - 1) * Wz_over_z
        out = out + self.eps2 * ll * (z * Wz + 2.0 / 3.0 * W0)
        return out - self.eps2 * lam * lam * (Wt + ell * W0 / 3.0)

    def c_hat(self, index: int, t: np.ndarray, z: np.ndarray) -> np.ndarray:
        """c without the weights (eps lambda)^(-8/9) f0^(1/9)."""
        if index == OFF_WINDOWS:
            return signed_cbrt(nu_hat_jet(self.profiles, t, z, 0, self.epsilon).value / 9.0)
        w = self.windows[index]
        if w.case == WindowCase.GENERIC:
            return (z - w.center) * signed_cbrt(self.phi_tilde(index, t, z) / 9.0)
        t, z = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(z, dtype=float))
        core = w.on_plateau(z)
        out = np.empty(z.shape)
        if not np.all(core):
            rim = ~core
            nu = nu_hat_jet(self.profiles, t[rim], z[rim], 0, self.epsilon, self.coefficients[index]).value
            out[rim] = signed_cbrt(nu / 9.0)
        if np.any(core):
            out[core] = self._factored_c(w, t[core], z[core], self.m_tilde(index, t[core], z[core]))
        return out

    def _factored_c(self, w: Window, t: np.ndarray, z: np.ndarray, m_tilde: Jet) -> np.ndarray:
        m = m_tilde.cbrt()
        m0, mz, mzz, mt = m.value, m.partial(0, 1), m.partial(0, 2), m.partial(1, 0)
        if w.case == WindowCase.HALF:
            h = z - w.center
            W0, Wz, Wzz, Wt = h * m0, m0 + h * mz, 2.0 * mz + h * mzz, h * mt
            Wz_over_z = Wz / z
        else:
            W0, Wz, Wzz, Wt = z * z * m0, 2.0 * z * m0 + z * z * mz, 2.0 * m0 + 4.0 * z * mz + z * z * mzz, z * z * mt
            Wz_over_z = 2.0 * m0 + z * mz
        return signed_cbrt(self._q_hat(t, z, W0, Wz, Wzz, Wt, Wz_over_z))

    # --- fields ---

    def eval_abc(self, t, r) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """
        a, b, c at (t, r); exact zeros outside the lens and on the flat rims.

        Args:
            t: times, broadcastable against r
            r: signed radii (fields are even in r)

        Returns:
            Three arrays of the broadcast shape
        """
        t, r = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(r, dtype=float))
        shape = t.shape
        tf, rf = t.ravel(), r.ravel()
        a, b, c = np.zeros(tf.size), np.zeros(tf.size), np.zeros(tf.size)
        inside, z = self.lens(tf, rf)
        regions = self.region(z)
        for index in np.unique(regions[inside]):
            mask = inside & (regions == index)
            ts, zs = tf[mask], z[mask]
            f0 = TimeWeights.f0(ts)
            scale = self.epsilon * TimeWeights.lam(ts)
            a_hat = self.profiles.A(zs)
            coeff = self._coefficients(index)
            if coeff is not None:
                fh = np.stack([f.value for f in coeff.hat_jets(ts, 0)])
                a_hat = a_hat + np.sum(fh * coeff.bumps.values(zs), axis=0)
            m = m_hat_jet(self.profiles, ts, zs, 0, 0, self.epsilon, coeff).value
            a[mask] = f0 * a_hat
            b[mask] = -scale ** (-2.0 / 3.0) * np.cbrt(f0) * signed_cbrt(m)
            c[mask] = scale ** (-8.0 / 9.0) * f0 ** (1.0 / 9.0) * self.c_hat(int(index), ts, zs)
        return a.reshape(shape), b.reshape(shape), c.reshape(shape)

    def cube_identity_error(self, index: int, t, z) -> float:
        """max |(z - rho)^3 phi - nuhat| / max |nuhat| in a generic window."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        z = np.atleast_1d(np.asarray(z, dtype=float))
        w = self.windows[index]
        nu = nu_hat_jet(self.profiles, t, z, 0, self.epsilon, self.coefficients[index]).value
        phi = self.phi_tilde(index, t, z)
        return float(np.max(np.abs((z - w.center) ** 3 * phi - nu)) / max(np.max(np.abs(nu)), 1e-300))

    def __repr__(self) -> str:
        return f"ABCFields(epsilon={self.epsilon:g}, windows={[w.case.value for w in self.windows]})"
