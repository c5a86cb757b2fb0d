"""Spectrum of the skew-adjoint operator B = -d^3 - d.

Boundary conditions are E(0) = E(L) = 0 and E'(0) = E'(L).  Eigenpairs solve
E''' + E' + i lam E = 0.  Writing lam = 2 tau (4 tau^2 - 1), the
characteristic roots are 2 tau and -tau +- sqrt(1 - 3 tau^2), so every
eigenfunction is a combination of three exponentials.  The regime is elliptic
when 3 tau^2 < 1 (finitely many modes) and hyperbolic otherwise.

Each eigenvalue is represented by the unique tau in the fundamental domain
(sqrt(3)/6, infinity) for which 2 tau is the largest real characteristic root.
Negative indices are complex conjugates of positive ones.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy.optimize import brentq

from .critical_lengths import (
    LAMBDA_BOUND,
    CriticalPair,
    classify_length,
    critical_length,
    lambda_c,
    solve_pairs,
)

SQ3 = math.sqrt(3.0)
TAU_TRIVIAL = SQ3 / 6.0
TAU_EDGE = 1.0 / SQ3
EXCLUSION = 1e-9
DEGENERACY = 1e-12

Regime = Literal["elliptic", "hyperbolic"]


class SpectrumError(RuntimeError):
    """Root bracketing failed or the length is effectively critical."""


def lam_of_tau(tau):
    return 2.0 * tau * (4.0 * tau * tau - 1.0)


def tau_of_lam(lam: float) -> float:
    """Fundamental-domain tau for an eigenvalue lam (largest root / 2)."""
    if abs(lam) <= LAMBDA_BOUND:
        arg = max(-1.0, min(1.0, 1.5 * SQ3 * lam))
        return math.cos(math.acos(arg) / 3.0) / SQ3
    # single real root of xi^3 - xi = lam (Cardano)
    q = lam / 2.0
    d = math.sqrt(q * q - 1.0 / 27.0)
    xi = math.copysign(abs(q + d) ** (1 / 3), q + d) + math.copysign(abs(q - d) ** (1 / 3), q - d)
    return xi / 2.0


def char_elliptic(t, L):
    """F(t, L); its zeros in the elliptic range give the eigenvalues."""
    t = np.asarray(t, dtype=float)
    if np.any(1.0 - 3.0 * t * t <= 0.0):
        raise ValueError("char_elliptic needs 3 t^2 < 1")
    s = np.sqrt(1.0 - 3.0 * t * t)
    return (
        2.0 * s * np.cos(2.0 * t * L)
        - (s + 3.0 * t) * np.cos((s - t) * L)
        + (3.0 * t - s) * np.cos((s + t) * L)
    )


def char_hyperbolic(t, L):
    """Hyperbolic characteristic function, evaluated as written (may overflow)."""
    t = np.asarray(t, dtype=float)
    if np.any(3.0 * t * t - 1.0 <= 0.0):
        raise ValueError("char_hyperbolic needs 3 t^2 > 1")
    sg = np.sqrt(3.0 * t * t - 1.0)
    return (
        sg * np.cos(2.0 * t * L)
        - 3.0 * t * np.sin(t * L) * np.sinh(sg * L)
        - sg * np.cos(t * L) * np.cosh(sg * L)
    )


def char_hyperbolic_scaled(t, L):
    """char_hyperbolic divided by cosh(sigma L); same sign, no overflow."""
    t = np.asarray(t, dtype=float)
    sg = np.sqrt(3.0 * t * t - 1.0)
    x = sg * L
    sech = 2.0 * np.exp(-x) / (1.0 + np.exp(-2.0 * x))
    return sg * np.cos(2.0 * t * L) * sech - 3.0 * t * np.sin(t * L) * np.tanh(x) - sg * np.cos(t * L)


def wavenumbers(tau: float) -> np.ndarray:
    """kappa with E = sum_m c_m exp(i kappa_m x), principal square root."""
    s = np.sqrt(complex(1.0 - 3.0 * tau * tau))
    return np.array([-tau - s, s - tau, 2.0 * tau], dtype=complex)


def _anchors(kappa: np.ndarray, L: float) -> np.ndarray:
    # exp(i kappa x) grows in x when Im kappa < 0: anchor such terms at x = L
    return np.where(kappa.imag < 0.0, L, 0.0)


def _basis(kappa, anchor, x, deriv=0):
    x = np.asarray(x, dtype=float)
    e = np.exp(1j * kappa[:, None] * (x[None, :] - anchor[:, None]))
    return ((1j * kappa) ** deriv)[:, None] * e


def _bc_matrix(kappa, anchor, L):
    ends = _basis(kappa, anchor, np.array([0.0, L]))
    d = _basis(kappa, anchor, np.array([0.0, L]), 1)
    return np.array([ends[:, 0], ends[:, 1], d[:, 0] - d[:, 1]])


def exp_gram(k1, a1, k2, a2, L: float) -> complex:
    """int_0^L exp(i k1 (x - a1)) conj(exp(i k2 (x - a2))) dx, overflow safe."""
    q = 1j * (k1 - np.conj(k2))
    c = -1j * k1 * a1 + 1j * np.conj(k2) * a2
    qL = q * L
    if abs(qL) < 1e-12:
        return complex(np.exp(c) * L * (1.0 + qL / 2.0))
    if qL.real <= 0.0:
        return complex(np.exp(c) * np.expm1(qL) / q)
    return complex(np.exp(c + qL) * (-np.expm1(-qL)) / q)


@dataclass(frozen=True)
class EigenmodeB:
    index: int
    tau: float
    lam: float
    regime: Regime
    L: float
    kappa: np.ndarray
    anchor: np.ndarray
    coef: np.ndarray
    dE_at_L: complex

    def __call__(self, x, deriv: int = 0):
        x = np.asarray(x, dtype=float)
        scalar = x.ndim == 0
        xv = np.atleast_1d(x)
        eps = 1e-12 * max(1.0, self.L)
        if np.any(xv < -eps) or np.any(xv > self.L + eps):
            raise ValueError("x must lie in [0, L]")
        val = self.coef @ _basis(self.kappa, self.anchor, xv, deriv)
        return val[0] if scalar else val

    def conjugate(self) -> "EigenmodeB":
        return EigenmodeB(
            index=-self.index,
            tau=-self.tau,
            lam=-self.lam,
            regime=self.regime,
            L=self.L,
            kappa=-np.conj(self.kappa),
            anchor=self.anchor,
            coef=np.conj(self.coef),
            dE_at_L=complex(np.conj(self.dE_at_L)),
        )

    def bc_residual(self) -> float:
        e0, eL = self(np.array([0.0, self.L]))
        d0, dL = self(np.array([0.0, self.L]), 1)
        return float(max(abs(e0), abs(eL), abs(d0 - dL)))


def eval_eigenfunction(mode: EigenmodeB, x, deriv: int = 0):
    return mode(x, deriv)


def boundary_derivative(mode: EigenmodeB) -> complex:
    return mode.dE_at_L


def build_mode(tau: float, L: float, index: int = 1) -> EigenmodeB:
    """Normalized eigenfunction for a root tau of the characteristic equation."""
    kappa = wavenumbers(tau)
    anchor = _anchors(kappa, L)
    m = _bc_matrix(kappa, anchor, L)
    _, sv, vh = np.linalg.svd(m)
    coef = np.conj(vh[-1])
    gram = sum(
        coef[p] * np.conj(coef[q]) * exp_gram(kappa[p], anchor[p], kappa[q], anchor[q], L)
        for p in range(3)
        for q in range(3)
    )
    coef = coef / math.sqrt(abs(gram))
    d_l = complex(coef @ _basis(kappa, anchor, np.array([L]), 1)[:, 0])
    if abs(d_l) > 1e-14:
        ph = np.angle(d_l)
        # rotate so that arg E'(L) lies in (-pi/2, pi/2]
        rot = -ph if -math.pi / 2 < ph <= math.pi / 2 else math.pi - ph
    else:
        # first nonzero Taylor coefficient at 0 made positive real
        rot = 0.0
        for d in range(2, 6):
            v = complex(coef @ _basis(kappa, anchor, np.array([0.0]), d)[:, 0])
            if abs(v) > 1e-12:
                rot = -np.angle(v)
                break
    coef = coef * np.exp(1j * rot)
    d_l *= np.exp(1j * rot)
    regime: Regime = "elliptic" if 3.0 * tau * tau < 1.0 else "hyperbolic"
    return EigenmodeB(index, float(tau), float(lam_of_tau(tau)), regime, L, kappa, anchor, coef, d_l)


def _singular_ratio(tau: float, L: float) -> float:
    kappa = wavenumbers(tau)
    sv = np.linalg.svd(_bc_matrix(kappa, _anchors(kappa, L), L), compute_uv=False)
    return float(sv[-1] / sv[0])


def _distinct(kappa: np.ndarray) -> float:
    return float(min(abs(kappa[0] - kappa[1]), abs(kappa[0] - kappa[2]), abs(kappa[1] - kappa[2])))


def _roots_on_grid(f, grid: np.ndarray) -> list[float]:
    vals = f(grid)
    roots = []
    for i in range(len(grid) - 1):
        a, b = vals[i], vals[i + 1]
        if a == 0.0:
            roots.append(float(grid[i]))
        elif a * b < 0.0:
            roots.append(brentq(f, grid[i], grid[i + 1], xtol=1e-15, rtol=1e-15, maxiter=200))
    return roots


def nearby_pairs(L: float) -> list[tuple[CriticalPair, float]]:
    """Pairs of the critical lengths whose index I_C is within 1 of that of L."""
    ic = 3.0 * (L / (2.0 * math.pi)) ** 2
    out = []
    for n in {math.floor(ic), math.ceil(ic)}:
        if n >= 1:
            out.extend((p, critical_length(n)) for p in solve_pairs(n))
    return out


def elliptic_taus(L: float, n_scan: int | None = None) -> list[float]:
    """Elliptic roots of F in the fundamental domain, trivial root excluded."""
    ic = 3.0 * (L / (2.0 * math.pi)) ** 2
    if n_scan is None:
        n_scan = max(2000, 4 * int(3 + ic) * 50)
    lo, hi = TAU_TRIVIAL + EXCLUSION, TAU_EDGE - EXCLUSION
    grids = [np.linspace(lo, hi, n_scan)]
    # refine around predicted near-degenerate eigenvalues
    for pair, L0 in nearby_pairs(L):
        d = abs(L - L0)
        pred = perturbation_prediction(pair, L0, L)
        for sign in (1.0, -1.0):
            taus = [tau_of_lam(sign * x) for x in pred if abs(x) < LAMBDA_BOUND]
            if not taus:
                continue
            sep = max(taus) - min(taus)
            for w, n in ((20.0 * d + 1e-6, 801), (3.0 * sep + 10.0 * d * d + 1e-9, 2001)):
                a, b = max(lo, min(taus) - w), min(hi, max(taus) + w)
                if a < b:
                    grids.append(np.linspace(a, b, n))
    grid = np.unique(np.concatenate(grids))
    f = lambda t: char_elliptic(t, L)
    roots = []
    for r in _roots_on_grid(f, grid):
        if _distinct(wavenumbers(r)) < 1e-6 or _singular_ratio(r, L) > 1e-7:
            continue
        if not roots or abs(r - roots[-1]) > 1e-14:
            roots.append(r)
    return roots


def hyperbolic_taus(L: float, count: int, per_cell: int = 24) -> list[float]:
    """First ``count`` hyperbolic roots, scanning cells of width pi / L."""
    f = lambda t: char_hyperbolic_scaled(t, L)
    roots: list[float] = []
    start = TAU_EDGE + EXCLUSION
    cell = math.pi / L
    empty = 0
    while len(roots) < count:
        grid = np.linspace(start, start + cell, per_cell + 1)
        found = [
            r
            for r in _roots_on_grid(f, grid)
            if _distinct(wavenumbers(r)) > 1e-6 and _singular_ratio(r, L) < 1e-7
        ]
        for r in found:
            if not roots or r - roots[-1] > 1e-14:
                roots.append(r)
        empty = 0 if found else empty + 1
        if empty > 4:
            raise SpectrumError(f"no hyperbolic root in cell [{start:.6g}, {start + cell:.6g}] at L={L}")
        start += cell
    return roots[:count]


@dataclass(frozen=True)
class SpectrumB:
    L: float
    modes: tuple[EigenmodeB, ...]
    N_L: int

    @property
    def lambdas(self) -> np.ndarray:
        return np.array([m.lam for m in self.modes])

    @property
    def indices(self) -> np.ndarray:
        return np.array([m.index for m in self.modes])

    @property
    def Lambda_E(self) -> list[int]:
        return [m.index for m in self.modes if m.regime == "elliptic"]

    def mode(self, j: int) -> EigenmodeB:
        for m in self.modes:
            if m.index == j:
                return m
        raise KeyError(j)

    def subset(self, jmax: int) -> "SpectrumB":
        return SpectrumB(self.L, tuple(m for m in self.modes if abs(m.index) <= jmax), self.N_L)


def full_spectrum(L: float, jmax: int) -> SpectrumB:
    """Modes with 1 <= |j| <= jmax, sorted by eigenvalue."""
    if not L > 0:
        raise ValueError("L must be positive")
    if jmax < 1:
        raise ValueError("jmax must be >= 1")
    if classify_length(L) is not None:
        raise SpectrumError(f"L={L!r} is a critical length; the spectrum degenerates there")
    ell = elliptic_taus(L)
    ell_pos = sorted(t for t in ell if lam_of_tau(t) > 0)
    n_l = len(ell_pos)
    if 2 * n_l != len(ell):
        raise SpectrumError(f"elliptic eigenvalues at L={L!r} are not sign symmetric ({len(ell)} roots)")
    hyp = hyperbolic_taus(L, max(0, jmax - n_l))
    taus = (ell_pos + hyp)[:jmax]
    lams = [lam_of_tau(t) for t in taus]
    gaps = np.diff(sorted([-x for x in lams] + lams))
    if len(gaps) and np.min(np.abs(gaps)) < DEGENERACY:
        raise SpectrumError(f"eigenvalues closer than {DEGENERACY}: L={L!r} is effectively critical")
    pos = [build_mode(t, L, j + 1) for j, t in enumerate(taus)]
    neg = [m.conjugate() for m in pos]
    modes = sorted(pos + neg, key=lambda m: m.lam)
    return SpectrumB(L, tuple(modes), n_l)


def explicit_profile(tau: float, L: float, x) -> np.ndarray:
    """Unnormalized eigenfunction in the explicit sine (elliptic) or
    sinh-ratio (hyperbolic) form; serves as an independent check on the
    null-vector construction of :func:`build_mode`."""
    x = np.asarray(x, dtype=float)
    if 3.0 * tau * tau < 1.0:
        s = math.sqrt(1.0 - 3.0 * tau * tau)
        return (
            np.exp(1j * tau * (2 * L - x)) * np.sin(x * s)
            + np.exp(-1j * tau * (L + x)) * np.sin(s * (L - x))
            - np.exp(1j * tau * (2 * x - L)) * math.sin(L * s)
        )
    sg = math.sqrt(3.0 * tau * tau - 1.0)
    den = -math.expm1(-2.0 * sg * L)
    r_left = np.exp(-sg * x) * (-np.expm1(-2.0 * sg * (L - x))) / den  # sinh(sg(L-x))/sinh(sg L)
    r_right = np.exp(-sg * (L - x)) * (-np.expm1(-2.0 * sg * x)) / den  # sinh(sg x)/sinh(sg L)
    return np.exp(-1j * tau * x) * (r_left + np.exp(3j * tau * L) * r_right) - np.exp(2j * tau * x)


def perturbation_prediction(pair: CriticalPair, L0: float, L: float) -> list[float]:
    """Leading-order elliptic eigenvalues near L0 for one pair.

    S1/S2 pairs split linearly into two eigenvalues; an S3 pair moves
    quadratically and gives a single prediction.
    """
    k, l = pair.k, pair.l
    n = pair.norm
    d = L - L0
    lc = lambda_c(pair)
    if pair.kind in ("S1", "S2"):
        drift = -(k - l) * (k + 2 * l) * (2 * k + l) / (2.0 * math.pi * n * n)
        split = abs(d) / (math.pi * math.sqrt(n))
        return [lc + drift * d + split, lc + drift * d - split]
    return [lc - l * (k + l) * (2 * k + l) ** 2 / (27.0 * k * L0**5) * d * d]


def rotation_matrix(pair: CriticalPair) -> tuple[np.ndarray, float]:
    """C_Rot and theta from cos(theta) = pi (k - l) / (sqrt(3) L0)."""
    if pair.kind == "S3":
        raise ValueError("rotation structure needs k = l (mod 3)")
    L0 = critical_length(pair.norm)
    theta = math.acos(math.pi * (pair.k - pair.l) / (SQ3 * L0))
    h = 1.5 * theta
    c, s = math.cos(h), math.sin(h)
    return np.array([[-c, -s], [s, -c]]), theta


def rotation_explicit(pair: CriticalPair) -> np.ndarray:
    """The same matrix from the explicit C1+-, C2+- expressions."""
    if pair.kind == "S3":
        raise ValueError("rotation structure needs k = l (mod 3)")
    k, l = pair.k, pair.l
    L0 = critical_length(pair.norm)
    pi = math.pi
    rows = []
    for sgn in (1.0, -1.0):
        root = math.sqrt(6 * L0**2 + sgn * 2 * SQ3 * pi * L0 * (k - l))
        c1 = -(-2 * pi**2 * (k * k + 4 * k * l + l * l) + sgn * SQ3 * pi * L0 * (k - l)) / (SQ3 * L0 * root)
        c2 = -pi * (k + l) * (2 * pi * (k - l) + sgn * SQ3 * L0) / (L0 * root)
        rows.append([c1, c2])
    return np.array(rows)
