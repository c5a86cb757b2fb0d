"""Eigenmodes of the non-self-adjoint operator A = -d^3 - d.

Boundary conditions are F(0) = F(L) = F'(L) = 0 and A F = zeta F.  With
i zeta = 2 tau (4 tau^2 - 1) the characteristic roots are -2 tau and
tau +- sqrt(1 - 3 tau^2).  Near a critical length the eigenvalue that
continues i lam_c (up to conjugation) is found by Newton's method on the
characteristic function G, seeded at the critical tau.

Multiplying the equation by conj(F) and integrating gives
Re zeta = -|F'(0)|^2 / 2 for a normalized eigenfunction, so every eigenvalue
lies in the closed left half plane.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .critical_lengths import (
    CriticalPair,
    classify_length,
    critical_length,
    lambda_c,
    solve_pairs,
    type1_eigenfunction,
)
from .spectrum_b import EigenmodeB, SpectrumB, exp_gram, nearby_pairs


class NewtonError(RuntimeError):
    pass


def _sqrt_branch(tau):
    return np.sqrt(1.0 - 3.0 * np.asarray(tau, dtype=complex) ** 2)


def char_A_complex(tau, L):
    tau = np.asarray(tau, dtype=complex)
    s = _sqrt_branch(tau)
    return (
        -s * np.cos(3 * L * tau)
        + s * np.cos(L * s)
        - 1j * s * np.sin(3 * L * tau)
        + 3j * tau * np.sin(L * s)
    )


def char_A(t_r: float, t_i: float, L: float) -> tuple[float, float]:
    """Real and imaginary parts of G at tau = t_r + i t_i."""
    g = complex(char_A_complex(complex(t_r, t_i), L))
    return g.real, g.imag


def _char_A_deriv(tau: complex, L: float) -> complex:
    s = complex(_sqrt_branch(tau))
    ds = -3.0 * tau / s
    c3, s3 = np.cos(3 * L * tau), np.sin(3 * L * tau)
    cs, ss = np.cos(L * s), np.sin(L * s)
    return complex(
        -ds * c3
        + 3 * L * s * s3
        + ds * cs
        - L * s * ss * ds
        - 1j * ds * s3
        - 3j * L * s * c3
        + 3j * ss
        + 3j * tau * L * cs * ds
    )


def zeta_of_tau(tau: complex) -> complex:
    return -1j * 2.0 * tau * (4.0 * tau * tau - 1.0)


def wavenumbers_A(tau: complex) -> np.ndarray:
    s = complex(_sqrt_branch(tau))
    return np.array([-2.0 * tau, tau + s, tau - s], dtype=complex)


def _anchors(kappa, L):
    return np.where(kappa.imag < 0.0, L, 0.0)


def _basis(kappa, anchor, x, deriv=0):
    x = np.atleast_1d(np.asarray(x, dtype=float))
    e = np.exp(1j * kappa[:, None] * (x[None, :] - anchor[:, None]))
    return ((1j * kappa) ** deriv)[:, None] * e


def _bc_matrix_A(kappa, anchor, L):
    v = _basis(kappa, anchor, [0.0, L])
    d = _basis(kappa, anchor, [L], 1)
    return np.array([v[:, 0], v[:, 1], d[:, 0]])


@dataclass(frozen=True)
class EigenmodeA:
    zeta: complex
    tau: complex
    L: float
    kappa: np.ndarray
    anchor: np.ndarray
    coef: np.ndarray
    dF_at_0: complex
    residual: float = 0.0

    @property
    def r1(self) -> complex:
        return complex(self.coef[0])

    def __call__(self, x, deriv: int = 0):
        x = np.asarray(x, dtype=float)
        val = self.coef @ _basis(self.kappa, self.anchor, x, deriv)
        return val[0] if x.ndim == 0 else val

    def conjugate(self) -> "EigenmodeA":
        return EigenmodeA(
            zeta=complex(np.conj(self.zeta)),
            tau=complex(-np.conj(self.tau)),
            L=self.L,
            kappa=-np.conj(self.kappa),
            anchor=self.anchor,
            coef=np.conj(self.coef),
            dF_at_0=complex(np.conj(self.dF_at_0)),
            residual=self.residual,
        )


def build_mode_A(tau: complex, L: float, residual: float = 0.0) -> EigenmodeA:
    """Normalized eigenfunction with F'(0) real and nonnegative."""
    kappa = wavenumbers_A(tau)
    anchor = _anchors(kappa, L)
    _, _, vh = np.linalg.svd(_bc_matrix_A(kappa, anchor, L))
    coef = np.conj(vh[-1])
    gram = sum(
        coef[p] * np.conj(coef[q]) * exp_gram(kappa[p], anchor[p], kappa[q], anchor[q], L)
        for p in range(3)
        for q in range(3)
    )
    coef = coef / math.sqrt(abs(gram))
    d0 = complex(coef @ _basis(kappa, anchor, [0.0], 1)[:, 0])
    if abs(d0) > 0.0:
        coef = coef * np.exp(-1j * np.angle(d0))
        d0 = abs(d0)
    return EigenmodeA(complex(zeta_of_tau(tau)), complex(tau), L, kappa, anchor, coef, complex(d0), residual)


def newton_tau(seed: complex, L: float, tol: float = 1e-13, maxiter: int = 50) -> tuple[complex, float]:
    """Damped Newton on G from ``seed``; the step is halved until |G| drops."""
    tau = complex(seed)
    g = complex(char_A_complex(tau, L))
    for _ in range(maxiter):
        if abs(g) < tol:
            return tau, abs(g)
        step = g / _char_A_deriv(tau, L)
        for _ in range(40):
            cand = tau - step
            gc = complex(char_A_complex(cand, L))
            if abs(gc) < abs(g):
                break
            step /= 2.0
        else:
            break
        tau, g = cand, gc
    if abs(g) < 1e3 * tol:
        return tau, abs(g)
    raise NewtonError(f"Newton did not converge from seed {seed} at L={L}: |G|={abs(g):.3e}")


def eigen_near(lambda_target: float, L: float, L0: float | None = None) -> EigenmodeA:
    """Perturbed eigenmode of A continuing the critical eigenvalue lambda_target.

    Newton starts at the critical tau pi (2k + l) / (3 L0) of the pair whose
    lambda_c equals ``lambda_target``.
    """
    pair, L0 = _pair_for(lambda_target, L, L0)
    tau, res = newton_tau(critical_tau_c1(pair, L0), L)
    return build_mode_A(tau, L, res)


def _pair_for(lam: float, L: float, L0: float | None) -> tuple[CriticalPair, float]:
    if L0 is None:
        cands = nearby_pairs(L)
    else:
        cl = classify_length(L0)
        if cl is None:
            raise ValueError(f"L0={L0} is not critical")
        cands = [(p, cl.L0) for p in cl.pairs]
    best = min(cands, key=lambda c: (abs(lambda_c(c[0]) - lam), abs(c[1] - L)), default=None)
    if best is None or abs(lambda_c(best[0]) - lam) > 1e-9:
        raise ValueError(f"{lam} is not a critical eigenvalue near L={L}")
    return best


def critical_tau_c1(pair: CriticalPair, L0: float) -> float:
    """pi (2k + l) / (3 L0); G vanishes there at L = L0."""
    return math.pi * (2 * pair.k + pair.l) / (3.0 * L0)


def real_spectrum_A(L: float, count: int, tau_max: float | None = None) -> list[EigenmodeA]:
    """The first ``count`` real negative eigenvalues, zeta = -2 tau (4 tau^2 + 1).

    They solve cos(L sqrt(1 + 3 tau^2) + theta(tau)) = e^{-3 L tau}
    sqrt(1 + 3 tau^2) / sqrt(1 + 12 tau^2) with tan(theta) = 3 tau / sqrt(1 + 3 tau^2).
    """
    if classify_length(L) is not None:
        raise ValueError("real_spectrum_A needs a noncritical L")
    if count < 1:
        raise ValueError("count must be positive")
    if tau_max is None:
        tau_max = (count + 2) * math.pi / (math.sqrt(3.0) * L) + 1.0
    f = real_branch_equation
    grid = np.linspace(1e-9, tau_max, 4000 * (count + 2))
    vals = f(grid, L)
    out: list[EigenmodeA] = []
    for i in range(len(grid) - 1):
        if vals[i] * vals[i + 1] < 0.0:
            t = brentq(f, grid[i], grid[i + 1], args=(L,), xtol=1e-15, rtol=1e-15)
            mode = build_mode_A(1j * t, L, abs(f(t, L)))
            out.append(mode)
            if len(out) == count:
                return out
    raise ValueError(f"found only {len(out)} real eigenvalues below tau={tau_max}")


def real_branch_equation(t, L):
    t = np.asarray(t, dtype=float)
    r = np.sqrt(1.0 + 3.0 * t * t)
    theta = np.arctan2(3.0 * t, r)
    return np.cos(L * r + theta) - np.exp(-3.0 * L * t) * r / np.sqrt(1.0 + 12.0 * t * t)


def duality_pairing(u, v, x, w) -> complex:
    """<u, v> = int u(x) conj(v(L - x)) dx on a symmetric quadrature rule.

    ``u`` and ``v`` are samples on nodes ``x`` with weights ``w``; the node set
    must be symmetric under x -> L - x.
    """
    return complex(np.sum(w * u * np.conj(v[::-1])))


@dataclass(frozen=True)
class QuasiInvariantBasis:
    L: float
    L0: float
    basis_A: tuple[EigenmodeA, ...]
    basis_B: tuple[tuple[tuple[int, complex], ...], ...]
    kinds: tuple[str, ...] = field(default=())

    def eval_B(self, spectrum: SpectrumB, i: int, x) -> np.ndarray:
        return sum(c * spectrum.mode(j)(x) for j, c in self.basis_B[i])


def _modes_near(spectrum: SpectrumB, lam: float, count: int) -> list[EigenmodeB]:
    pos = [m for m in spectrum.modes if m.regime == "elliptic" and m.lam >= 0.0]
    return sorted(pos, key=lambda m: abs(m.lam - lam))[:count]


def _atom_modes(spectrum: SpectrumB, pair: CriticalPair) -> tuple[EigenmodeB, EigenmodeB]:
    if pair.kind == "S1":
        (m,) = _modes_near(spectrum, 0.0, 1)
        return m, spectrum.mode(-m.index)
    ep, eq = sorted(_modes_near(spectrum, lambda_c(pair), 2), key=lambda m: m.lam)
    return ep, eq


def atom_coefficients(spectrum: SpectrumB, pair: CriticalPair, L0: float, n_grid: int = 2049) -> tuple[complex, complex, float]:
    """Least-squares a, b with a E_p + b E_q closest to the Type 1 function.

    For an S2 pair E_p, E_q are the two modes near lambda_c; for the S1 pair
    they are the modes near 0 and the fit makes the combination independent
    of the phase convention.  The Type 1 function is rescaled from [0, L0]
    to [0, L] and kept unit norm.  Returns (a, b, residual norm).
    """
    if pair.kind == "S3":
        raise ValueError("S3 atoms are single modes")
    L = spectrum.L
    ep, eq = _atom_modes(spectrum, pair)
    x = np.linspace(0.0, L, n_grid)
    w = np.full(n_grid, L / (n_grid - 1))
    w[0] = w[-1] = w[0] / 2
    g = type1_eigenfunction(pair, L0, np.clip(x * L0 / L, 0.0, L0)) * math.sqrt(L0 / L)
    a_mat = np.stack([ep(x), eq(x)], axis=1) * np.sqrt(w)[:, None]
    coef, *_ = np.linalg.lstsq(a_mat, g * np.sqrt(w), rcond=None)
    resid = float(np.linalg.norm(a_mat @ coef - g * np.sqrt(w)))
    return complex(coef[0]), complex(coef[1]), resid


s2_coefficients = atom_coefficients


def quasi_invariant_basis(L: float, L0: float, spectrum: SpectrumB | None = None) -> QuasiInvariantBasis:
    """Perturbed eigenmodes spanning M_A(L) and B-mode combinations spanning M_B(L)."""
    from .spectrum_b import full_spectrum

    cl = classify_length(L0)
    if cl is None:
        raise ValueError(f"L0={L0} is not critical")
    if spectrum is None:
        spectrum = full_spectrum(L, max(4, 2 * cl.N0 + 2))
    basis_a = []
    basis_b = []
    kinds = []
    for pair in cl.pairs:
        lc = lambda_c(pair)
        mode = eigen_near(lc, L, L0)
        basis_a.append(mode)
        if pair.kind != "S1":
            basis_a.append(mode.conjugate())
        if pair.kind == "S3":
            (m,) = _modes_near(spectrum, lc, 1)
            basis_b.append(((m.index, 1.0 + 0j),))
            basis_b.append(((-m.index, 1.0 + 0j),))
        else:
            ep, eq = _atom_modes(spectrum, pair)
            a, b, _ = atom_coefficients(spectrum, pair, L0)
            basis_b.append(((ep.index, a), (eq.index, b)))
            if pair.kind == "S2":
                basis_b.append(((-ep.index, complex(np.conj(a))), (-eq.index, complex(np.conj(b)))))
        kinds.append(pair.kind)
    return QuasiInvariantBasis(L, cl.L0, tuple(basis_a), tuple(basis_b), tuple(kinds))


def critical_pairs_near(L: float) -> list[tuple[CriticalPair, float]]:
    return nearby_pairs(L)


__all__ = [
    "EigenmodeA",
    "NewtonError",
    "QuasiInvariantBasis",
    "build_mode_A",
    "char_A",
    "char_A_complex",
    "critical_tau_c1",
    "duality_pairing",
    "eigen_near",
    "newton_tau",
    "quasi_invariant_basis",
    "real_branch_equation",
    "real_spectrum_A",
    "atom_coefficients",
    "s2_coefficients",
    "zeta_of_tau",
    "critical_length",
    "solve_pairs",
]
