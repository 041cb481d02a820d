"""
Truncated Taylor series in two variables (t, z).

A Jet stores normalized coefficients ``c[i, j] = d^i_t d^j_z f / (i! j!)`` at a
batch of expansion points. Univariate z-jets are the case ``t_order == 0``.
All profile derivatives in the package flow through this class, so closed
forms are differentiated exactly instead of by finite differences.
"""
from __future__ import annotations

from math import factorial
from typing import Callable, Optional, Sequence, Union

import numpy as np

Scalar = Union[float, int, np.ndarray]


# ============================================================================
# SERIES KERNELS
# ============================================================================

def _series_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Truncated product of two coefficient arrays with equal (nt, nz)."""
    nt, nz = a.shape[0], a.shape[1]
    batch = np.broadcast_shapes(a.shape[2:], b.shape[2:])
    out = np.zeros((nt, nz) + batch)
    for i in range(nt):
        for p in range(i + 1):
            ap = a[p]
            bq = b[i - p]
            for j in range(nz):
                out[i, j] += np.sum(ap[: j + 1] * bq[j::-1], axis=0)
    return out


def _binomial_series(p: float, m_max: int) -> list:
    """Generalized binomial coefficients binom(p, m) for m = 0..m_max."""
    out = [1.0]
    for m in range(1, m_max + 1):
        out.append(out[-1] * (p - (m - 1)) / m)
    return out


def signed_cbrt(x: Scalar) -> np.ndarray:
    """cbrt(x) = sign(x)|x|^(1/3)."""
    return np.cbrt(np.asarray(x, dtype=float))


# ============================================================================
# JET
# ============================================================================

class Jet:
    """Bivariate truncated Taylor series with batch dimensions."""

    __slots__ = ("coeffs",)
    __array_priority__ = 1000

    def __init__(self, coeffs: np.ndarray):
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.ndim < 2:
            raise ValueError("Jet coefficients need at least the (t, z) axes")
        self.coeffs = coeffs

    # --- constructors ---

    @classmethod
    def constant(cls, value: Scalar, t_order: int = 0, z_order: int = 0) -> "Jet":
        value = np.asarray(value, dtype=float)
        coeffs = np.zeros((t_order + 1, z_order + 1) + value.shape)
        coeffs[0, 0] = value
        return cls(coeffs)

    @classmethod
    def z_variable(cls, z: Scalar, order: int, t_order: int = 0) -> "Jet":
        z = np.asarray(z, dtype=float)
        coeffs = np.zeros((t_order + 1, order + 1) + z.shape)
        coeffs[0, 0] = z
        if order >= 1:
            coeffs[0, 1] = 1.0
        return cls(coeffs)

    @classmethod
    def t_variable(cls, t: Scalar, order: int, z_order: int = 0) -> "Jet":
        t = np.asarray(t, dtype=float)
        coeffs = np.zeros((order + 1, z_order + 1) + t.shape)
        coeffs[0, 0] = t
        if order >= 1:
            coeffs[1, 0] = 1.0
        return cls(coeffs)

    @classmethod
    def from_z_derivatives(cls, derivatives: Sequence[np.ndarray]) -> "Jet":
        """Build a z-jet from f, f', ..., f^(k)."""
        rows = [np.asarray(d, dtype=float) / factorial(k) for k, d in enumerate(derivatives)]
        batch = np.broadcast_shapes(*[r.shape for r in rows])
        return cls(np.stack([np.broadcast_to(r, batch) for r in rows])[None, ...])

    # --- shape helpers ---

    @property
    def t_order(self) -> int:
        return self.coeffs.shape[0] - 1

    @property
    def z_order(self) -> int:
        return self.coeffs.shape[1] - 1

    @property
    def batch_shape(self) -> tuple:
        return self.coeffs.shape[2:]

    @property
    def value(self) -> np.ndarray:
        return self.coeffs[0, 0]

    def truncate(self, t_order: Optional[int] = None, z_order: Optional[int] = None) -> "Jet":
        t_order = self.t_order if t_order is None else min(t_order, self.t_order)
        z_order = self.z_order if z_order is None else min(z_order, self.z_order)
        return Jet(self.coeffs[: t_order + 1, : z_order + 1])

    def partial(self, t_count: int, z_count: int) -> np.ndarray:
        """The mixed derivative d^a_t d^b_z f at the expansion points."""
        if t_count > self.t_order or z_count > self.z_order:
            raise ValueError(
                f"derivative ({t_count}, {z_count}) beyond stored order "
                f"({self.t_order}, {self.z_order})"
            )
        return self.coeffs[t_count, z_count] * factorial(t_count) * factorial(z_count)

    def z_derivatives(self) -> np.ndarray:
        """Array of f, f', ..., f^(k) in z (t-order 0 part)."""
        scale = np.array([factorial(k) for k in range(self.z_order + 1)], dtype=float)
        return self.coeffs[0] * scale.reshape((-1,) + (1,) * len(self.batch_shape))

    def t_coefficient(self, i: int) -> "Jet":
        """The z-series multiplying t^i, as a t-order 0 jet."""
        return Jet(self.coeffs[i : i + 1])

    def z_coefficient(self, j: int) -> "Jet":
        """The t-series multiplying z^j, as a z-order 0 jet."""
        return Jet(self.coeffs[:, j : j + 1])

    def select(self, mask: np.ndarray) -> "Jet":
        return Jet(self.coeffs[:, :, mask])

    def pad(self, t_order: Optional[int] = None, z_order: Optional[int] = None) -> "Jet":
        """Zero-extend to larger orders, e.g. a t-jet used inside a bivariate product."""
        t_order = self.t_order if t_order is None else max(t_order, self.t_order)
        z_order = self.z_order if z_order is None else max(z_order, self.z_order)
        coeffs = np.zeros((t_order + 1, z_order + 1) + self.batch_shape)
        coeffs[: self.coeffs.shape[0], : self.coeffs.shape[1]] = self.coeffs
        return Jet(coeffs)

    # --- alignment ---

    def _align(self, other: "Jet") -> tuple:
        nt = min(self.coeffs.shape[0], other.coeffs.shape[0])
        nz = min(self.coeffs.shape[1], other.coeffs.shape[1])
        return self.coeffs[:nt, :nz], other.coeffs[:nt, :nz]

    def _with_constant(self, value: Scalar) -> np.ndarray:
        value = np.asarray(value, dtype=float)
        batch = np.broadcast_shapes(self.batch_shape, value.shape)
        coeffs = np.array(np.broadcast_to(self.coeffs, self.coeffs.shape[:2] + batch))
        coeffs[0, 0] = coeffs[0, 0] + value
        return coeffs

    # --- arithmetic ---

    def __neg__(self) -> "Jet":
        return Jet(-self.coeffs)

    def __add__(self, other) -> "Jet":
        if isinstance(other, Jet):
            a, b = self._align(other)
            return Jet(a + b)
        return Jet(self._with_constant(other))

    __radd__ = __add__

    def __sub__(self, other) -> "Jet":
        if isinstance(other, Jet):
            a, b = self._align(other)
            return Jet(a - b)
        return Jet(self._with_constant(-np.asarray(other, dtype=float)))

    def __rsub__(self, other) -> "Jet":
        return (-self) + other

    def __mul__(self, other) -> "Jet":
        if isinstance(other, Jet):
            a, b = self._align(other)
            return Jet(_series_mul(a, b))
        return Jet(self.coeffs * np.asarray(other, dtype=float))

    __rmul__ = __mul__

    def __truediv__(self, other) -> "Jet":
        if isinstance(other, Jet):
            return self * other.reciprocal()
        return Jet(self.coeffs / np.asarray(other, dtype=float))

    def __rtruediv__(self, other) -> "Jet":
        return self.reciprocal() * other

    def __pow__(self, exponent) -> "Jet":
        if isinstance(exponent, (int, np.integer)) and exponent >= 0:
            result = Jet.constant(np.ones(self.batch_shape), self.t_order, self.z_order)
            for _ in range(int(exponent)):
                result = result * self
            return result
        return self.power(float(exponent))

    # --- composition with univariate functions ---

    def compose(self, taylor: Callable[[np.ndarray, int], list]) -> "Jet":
        """
        Apply f to the series given f's normalized Taylor coefficients.

        Args:
            taylor: callable (x0, m_max) -> [f(x0), f'(x0), f''(x0)/2!, ...]

        Returns:
            Jet of f(self)
        """
        m_max = self.t_order + self.z_order
        x0 = self.value
        coefs = taylor(x0, m_max)
        delta = self.coeffs.copy()
        delta[0, 0] = 0.0
        result = np.zeros(self.coeffs.shape)
        result[0, 0] = coefs[m_max]
        for m in range(m_max - 1, -1, -1):
            result = _series_mul(result, delta)
            result[0, 0] = result[0, 0] + coefs[m]
        return Jet(result)

    def reciprocal(self) -> "Jet":
        def taylor(x0, m_max):
            with np.errstate(divide="ignore", invalid="ignore"):
                return [(-1.0) ** m / x0 ** (m + 1) for m in range(m_max + 1)]
        return self.compose(taylor)

    def exp(self) -> "Jet":
        def taylor(x0, m_max):
            e = np.exp(x0)
            return [e / factorial(m) for m in range(m_max + 1)]
        return self.compose(taylor)

    def log(self) -> "Jet":
        def taylor(x0, m_max):
            with np.errstate(divide="ignore", invalid="ignore"):
                return [np.log(x0)] + [
                    (-1.0) ** (m + 1) / (m * x0 ** m) for m in range(1, m_max + 1)
                ]
        return self.compose(taylor)

    def power(self, p: float) -> "Jet":
        """x^p for a positive base."""
        def taylor(x0, m_max):
            binom = _binomial_series(p, m_max)
            with np.errstate(divide="ignore", invalid="ignore"):
                base = x0 ** p
                return [base * binom[m] / x0 ** m for m in range(m_max + 1)]
        return self.compose(taylor)

    def cbrt_power(self, k: int = 1) -> "Jet":
        """cbrt(x)^k with the signed cube root, valid for either sign of x."""
        def taylor(x0, m_max):
            binom = _binomial_series(k / 3.0, m_max)
            with np.errstate(divide="ignore", invalid="ignore"):
                base = signed_cbrt(x0) ** k
                return [base * binom[m] / x0 ** m for m in range(m_max + 1)]
        return self.compose(taylor)

    def cbrt(self) -> "Jet":
        return self.cbrt_power(1)

    # --- calculus ---

    def dz(self) -> "Jet":
        if self.z_order == 0:
            raise ValueError("z-derivative of an order-0 jet")
        k = np.arange(1, self.z_order + 1, dtype=float)
        k = k.reshape((1, -1) + (1,) * len(self.batch_shape))
        return Jet(self.coeffs[:, 1:] * k)

    def dt(self) -> "Jet":
        if self.t_order == 0:
            raise ValueError("t-derivative of an order-0 jet")
        k = np.arange(1, self.t_order + 1, dtype=float)
        k = k.reshape((-1, 1) + (1,) * len(self.batch_shape))
        return Jet(self.coeffs[1:] * k)

    def integrate_z(self, constant: Scalar = 0.0) -> "Jet":
        """Antiderivative in z with the given value at the expansion point."""
        nt, nz = self.coeffs.shape[:2]
        constant = np.asarray(constant, dtype=float)
        batch = np.broadcast_shapes(self.batch_shape, constant.shape)
        out = np.zeros((nt, nz + 1) + batch)
        k = np.arange(1, nz + 1, dtype=float).reshape((1, -1) + (1,) * len(batch))
        out[:, 1:] = self.coeffs / k
        out[0, 0] = constant
        return Jet(out)

    def shift_down_z(self) -> "Jet":
        """f(z)/z at an expansion point z = 0 where f vanishes."""
        return Jet(self.coeffs[:, 1:])

    def outer(self, other: "Jet") -> "Jet":
        """Product of a pure t-series (self) with a pure z-series (other)."""
        a = self.coeffs[:, :1]
        b = other.coeffs[:1, :]
        return Jet(a * b)

    def __repr__(self) -> str:
        return f"Jet(t_order={self.t_order}, z_order={self.z_order}, batch={self.batch_shape})"


def stack_pieces(order: int, size: int, assignments: Sequence[tuple], t_order: int = 0) -> Jet:
    """Assemble a jet over ``size`` points from (mask, Jet) pairs."""
    coeffs = np.zeros((t_order + 1, order + 1, size))
    for mask, jet in assignments:
        if np.any(mask):
            coeffs[:, :, mask] = jet.coeffs[: t_order + 1, : order + 1]
    return Jet(coeffs)
