"""Critical lengths of the linearized KdV equation.

A length L0 is critical when I_C = 3 (L0 / 2 pi)^2 is an integer n admitting
positive integers k >= l with k^2 + k l + l^2 = n.  At such lengths the
operator -d^3 - d with four boundary conditions has nontrivial eigenfunctions
(Type 1), and when k = l mod 3 a second family with equal nonzero boundary
derivatives exists (Type 2).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np

Kind = Literal["S1", "S2", "S3"]
LengthClass = Literal["N1", "N2", "N3"]

LAMBDA_BOUND = 2.0 * math.sqrt(3.0) / 9.0


@dataclass(frozen=True)
class CriticalPair:
    k: int
    l: int
    kind: Kind

    @property
    def norm(self) -> int:
        """The quadratic form k^2 + k l + l^2."""
        return self.k * self.k + self.k * self.l + self.l * self.l


@dataclass(frozen=True)
class CriticalLength:
    L0: float
    index_IC: int
    pairs: tuple[CriticalPair, ...]
    length_class: LengthClass
    N0: int
    critical_eigenvalues: tuple[float, ...]


def pair_kind(k: int, l: int) -> Kind:
    if k == l:
        return "S1"
    if (k - l) % 3 == 0:
        return "S2"
    return "S3"


def solve_pairs(n: int) -> list[CriticalPair]:
    """All (k, l) with k >= l >= 1 and k^2 + k l + l^2 = n.

    For fixed l the equation is a quadratic in k with discriminant
    4 n - 3 l^2, so everything stays in integer arithmetic.
    """
    if n < 1:
        raise ValueError("n must be a positive integer")
    out = []
    l = 1
    while 3 * l * l <= n:
        disc = 4 * n - 3 * l * l
        r = math.isqrt(disc)
        if r * r == disc and (r - l) % 2 == 0:
            k = (r - l) // 2
            if k >= l:
                out.append(CriticalPair(k, l, pair_kind(k, l)))
        l += 1
    out.sort(key=lambda p: (p.k - p.l, p.k))
    return out


def critical_length(n: int) -> float:
    """L0 = 2 pi sqrt(n / 3)."""
    return 2.0 * math.pi * math.sqrt(n / 3.0)


def lambda_c(pair: CriticalPair) -> float:
    k, l = pair.k, pair.l
    s = pair.norm
    return (2 * k + l) * (k - l) * (2 * l + k) / (3.0 * math.sqrt(3.0) * s**1.5)


def _classify_pairs(pairs: list[CriticalPair]) -> LengthClass:
    kinds = {p.kind for p in pairs}
    if kinds == {"S1"}:
        return "N1"
    if kinds == {"S3"}:
        return "N2"
    return "N3"


def classify_length(L0: float, tol: float = 1e-9) -> CriticalLength | None:
    """Classify L0, or return None when it is not a critical length.

    ``tol`` is relative to I_C.  N0 counts two real directions for every pair
    with k != l and one for the k = l pair, whose eigenvalue is zero.
    """
    if not L0 > 0:
        raise ValueError("L0 must be positive")
    if not tol > 0:
        raise ValueError("tol must be positive")
    ic = 3.0 * (L0 / (2.0 * math.pi)) ** 2
    n = round(ic)
    if n < 1 or abs(ic - n) > tol * max(1.0, ic):
        return None
    pairs = solve_pairs(n)
    if not pairs:
        return None
    n0 = sum(2 for p in pairs if p.k != p.l) + (1 if any(p.k == p.l for p in pairs) else 0)
    eigs = []
    for p in pairs:
        lc = lambda_c(p)
        eigs.extend([lc] if p.k == p.l else [lc, -lc])
    return CriticalLength(
        L0=critical_length(n),
        index_IC=n,
        pairs=tuple(pairs),
        length_class=_classify_pairs(pairs),
        N0=n0,
        critical_eigenvalues=tuple(eigs),
    )


def critical_lengths_up_to(n_max: int) -> list[CriticalLength]:
    """Every critical length with I_C <= n_max, in increasing order."""
    out = []
    for n in range(1, n_max + 1):
        if solve_pairs(n):
            cl = classify_length(critical_length(n))
            assert cl is not None
            out.append(cl)
    return out


def frequencies(pair: CriticalPair) -> tuple[float, float, float]:
    """The three wave numbers (a, b, c) of the Type 1 eigenfunction.

    The exponentials are e^{i a x}, e^{-i b x}, e^{i c x}.  The numbers a, -b
    and c are the roots of xi^3 - xi = lambda_c, so they sum to zero.
    """
    k, l = pair.k, pair.l
    s = math.sqrt(pair.norm)
    r3 = math.sqrt(3.0)
    return r3 * (2 * k + l) / (3 * s), r3 * (k + 2 * l) / (3 * s), r3 * (l - k) / (3 * s)


def _check_x(x, L0: float) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    eps = 1e-12 * max(1.0, L0)
    if np.any(x < -eps) or np.any(x > L0 + eps):
        raise ValueError("x must lie in [0, L0]")
    return x


def type1_eigenfunction(pair: CriticalPair, L0: float, x, deriv: int = 0):
    """Normalized Type 1 eigenfunction G and its derivatives.

    G vanishes with its first derivative at both ends and has unit L2 norm.
    """
    x = _check_x(x, L0)
    a, b, c = frequencies(pair)
    k, l = pair.k, pair.l
    amp = math.pi * math.sqrt(2.0 / (3.0 * L0**3))
    return amp * (
        -l * (1j * a) ** deriv * np.exp(1j * a * x)
        - k * (-1j * b) ** deriv * np.exp(-1j * b * x)
        + (k + l) * (1j * c) ** deriv * np.exp(1j * c * x)
    )


def _require_type2(pair: CriticalPair) -> None:
    if pair.kind == "S3":
        raise ValueError(f"pair ({pair.k},{pair.l}) has no Type 2 eigenfunction: k - l is not divisible by 3")


def type2_eigenfunction(pair: CriticalPair, L0: float, x, deriv: int = 0):
    """Type 2 eigenfunction (e^{i a x} - e^{-i b x}) / sqrt(2 L0).

    Only exists when k = l (mod 3).  Its boundary derivatives coincide and are
    nonzero, so it satisfies the periodic-derivative boundary conditions but
    not the 4-condition problem.
    """
    _require_type2(pair)
    x = _check_x(x, L0)
    a, b, _ = frequencies(pair)
    return ((1j * a) ** deriv * np.exp(1j * a * x) - (-1j * b) ** deriv * np.exp(-1j * b * x)) / math.sqrt(2.0 * L0)


def type2_orthonormal(pair: CriticalPair, L0: float, x, deriv: int = 0):
    """Gram-Schmidt combination of G and the Type 2 function, orthogonal to G."""
    _require_type2(pair)
    k, l = pair.k, pair.l
    g = type1_eigenfunction(pair, L0, x, deriv)
    gt = type2_eigenfunction(pair, L0, x, deriv)
    return -(k - l) / (math.sqrt(3.0) * (k + l)) * g + L0 / (math.pi * (k + l)) * gt


def type1_type2_overlap(pair: CriticalPair, L0: float) -> float:
    """Closed form of the inner product of the Type 1 and Type 2 functions."""
    _require_type2(pair)
    return math.pi * (pair.k - pair.l) / (math.sqrt(3.0) * L0)


def type2_boundary_derivative(pair: CriticalPair, L0: float) -> complex:
    _require_type2(pair)
    return 1j * math.sqrt(2.0) * math.pi * (pair.k + pair.l) / L0**1.5
