"""Boundary-lift functions for the linearized KdV operator.

The modulated function h_mu solves h''' + h' = mu h on (0, L) with
h(0) = h(L) = 0 and h'(L) - h'(0) = 1.  For mu = 0 this is the zero-mode lift

    h(x) = (cos(L/2) - cos(x - L/2)) / (2 sin(L/2)),

which is the real form of the complex exponential expression and is
symmetric under x -> L - x.  For mu > 0 the characteristic roots are omega
and -omega/2 +- i g with omega^3 + omega = mu and g = sqrt(4 + 3 omega^2) / 2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

SINGULAR_TOL = 1e-8
DENOM_TOL = 1e-12


class NonGenericError(ValueError):
    pass


def omega_of_mu(mu: float) -> float:
    """The real root of w^3 + w = mu, via the hyperbolic form of Cardano."""
    w = 2.0 / math.sqrt(3.0) * math.sinh(math.asinh(1.5 * math.sqrt(3.0) * mu) / 3.0)
    # one Newton step removes the last ulps of the asinh/sinh round trip
    return w - (w**3 + w - mu) / (3.0 * w * w + 1.0)


@dataclass(frozen=True)
class ModulatedFunction:
    """h_mu (or h for mu = 0) as a sum of safely scaled exponentials.

    Each term is coef * exp(rate * x + shift) with a nonpositive real exponent
    on [0, L], so evaluation never overflows.
    """

    mu: float
    L: float
    omega: float
    coef: np.ndarray
    rate: np.ndarray
    shift: np.ndarray

    def __call__(self, x, deriv: int = 0):
        x = np.asarray(x, dtype=float)
        xv = np.atleast_1d(x)
        if self.mu == 0.0:
            s = math.sin(self.L / 2.0)
            y = xv - self.L / 2.0
            if deriv == 0:
                val = (math.cos(self.L / 2.0) - np.cos(y)) / (2.0 * s)
            else:
                val = -np.cos(y + deriv * math.pi / 2.0) / (2.0 * s)
        else:
            e = np.exp(self.rate[:, None] * xv[None, :] + self.shift[:, None])
            val = ((self.coef * self.rate**deriv) @ e).real
        return val[0] if x.ndim == 0 else val

    def boundary(self) -> tuple[float, float]:
        d = self(np.array([0.0, self.L]), 1)
        return float(d[0]), float(d[1])


def solve_h(L: float) -> ModulatedFunction:
    """Zero-mode lift; undefined when L is a multiple of 2 pi."""
    if not L > 0:
        raise ValueError("L must be positive")
    s = math.sin(L / 2.0)
    if abs(s) < SINGULAR_TOL:
        raise NonGenericError(f"L={L!r} is within {SINGULAR_TOL:g} of a multiple of 2 pi; h is singular")
    empty = np.zeros(0)
    return ModulatedFunction(0.0, float(L), 0.0, empty.astype(complex), empty.astype(complex), empty)


def _denominator_scaled(omega: float, L: float) -> tuple[float, float]:
    """2 e^{-omega L} times the denominator of the explicit quotient, and its scale."""
    r = math.sqrt(4.0 + 3.0 * omega * omega)
    g = r / 2.0
    e1, e3 = math.exp(-omega * L / 2.0), math.exp(-1.5 * omega * L)
    den = (
        r * (1.0 + math.exp(-2.0 * omega * L))
        + 3.0 * omega * (e1 - e3) * math.sin(g * L)
        - r * (e1 + e3) * math.cos(g * L)
    )
    return den, r


def solve_h_mu(mu: float, L: float) -> ModulatedFunction:
    if mu == 0.0:
        return solve_h(L)
    if not mu > 0:
        raise ValueError("mu must be positive")
    if not L > 0:
        raise ValueError("L must be positive")
    w = omega_of_mu(mu)
    den, scale = _denominator_scaled(w, L)
    if abs(den) < DENOM_TOL * scale:
        raise NonGenericError(f"denominator vanishes for mu={mu!r}, L={L!r}")
    g = math.sqrt(4.0 + 3.0 * w * w) / 2.0
    k = 2.0 / den
    rp, rm = complex(-w / 2.0, g), complex(-w / 2.0, -g)
    # numerator e^{w(2x-L)/2} sin(gL) - e^{-w(L+x)/2} sin(g(L-x)) - e^{w(2L-x)/2} sin(gx),
    # multiplied by 2 e^{-wL}; sines expanded into exponentials
    coef = np.array(
        [
            k * math.sin(g * L),
            -k / 2j * np.exp(1j * g * L),
            k / 2j * np.exp(-1j * g * L),
            -k / 2j,
            k / 2j,
        ],
        dtype=complex,
    )
    rate = np.array([w, rm, rp, rp, rm], dtype=complex)
    shift = np.array([-1.5 * w * L, -1.5 * w * L, -1.5 * w * L, 0.0, 0.0])
    return ModulatedFunction(float(mu), float(L), w, coef, rate, shift)


def h_mu_boundary(mu: float, L: float) -> tuple[float, float]:
    """(h'_mu(0), h'_mu(L))."""
    return solve_h_mu(mu, L).boundary()


__all__ = [
    "ModulatedFunction",
    "NonGenericError",
    "h_mu_boundary",
    "omega_of_mu",
    "solve_h",
    "solve_h_mu",
]
