"""Families bi-orthogonal to {exp(-i lam_k s)} on [-T/2, T/2].

phi_j is the inverse Fourier transform of

    psi_j(z) = Psi_j(z - lam_j) Sigma_beta(lam_j - z),
    Psi_j(z) = prod_{k != j} (1 - z / (lam_k - lam_j)),

where Sigma_beta is the normalized Fourier transform of the bump
exp(-beta / (1 - x^2)) squeezed to [-nu, nu].  With the product truncated
to |k| <= K_trunc, Psi_j is a polynomial, so phi_j is a finite combination
of derivatives of the bump and is supported in [-nu, nu] exactly.  The
pairing int phi_j(s) exp(-i lam_k s) ds equals psi_j(lam_k), which is 1 for
k = j and 0 otherwise.

Near a critical length two eigenvalues merge and the plain phi_j blow up.
A compensated function theta for the index pair (p, q) uses

    psi(z) = C1 P_p(z) Sigma_beta(lam_p - z) + C2 P_q(z) Sigma_beta(lam_q - z),

with products over k outside {p, q}, C1 = 1 / (1 + Sigma_beta(lam_p - lam_q))
and C2 = a C1, a = prod_{k != p, q} (lam_k - lam_q) / (lam_k - lam_p).  Then
psi(lam_p) = 1, psi(lam_q) = a and psi vanishes at every other eigenvalue.
For the symmetric pair q = -p the truncated product a equals 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.integrate import simpson
from scipy.signal import czt

from .spectrum_b import SpectrumB, nearby_pairs

N_GL = 2048
N_NORM = 1024
N_TIME = 4097
TAIL_TOL = 1e-13
X_LIMIT = 1e4


class QuadratureError(RuntimeError):
    pass


@dataclass(frozen=True)
class BumpTransform:
    """Sigma_beta(z) = int sigma(x) exp(-i nu x z) dx / int sigma, sigma = exp(-beta/(1-x^2)).

    sigma is stored as exp(-beta x^2 / (1 - x^2)), which only drops the
    constant factor exp(-beta).  For large |z| the path is pushed into the
    half plane where exp(-i nu x z) decays, x = u - i c (1 - u^2), so that
    the exponentially small values keep full relative accuracy.  The number
    of Gauss-Legendre nodes grows with nu |z| to follow the oscillation.
    """

    beta: float
    nu: float
    norm: float
    max_nodes: int = N_GL

    @classmethod
    def create(cls, beta: float, nu: float, n: int = N_GL) -> "BumpTransform":
        if not beta > 0 or not nu > 0:
            raise ValueError("beta and nu must be positive")
        u, w = _leggauss(N_NORM)
        norm = float(np.sum(w * np.exp(-beta * u * u / (1.0 - u * u))))
        return cls(beta, nu, norm, n)

    def _nodes_for(self, om: np.ndarray) -> np.ndarray:
        need = 128 + 0.5 * om
        bins = 2 ** np.ceil(np.log2(np.maximum(need, 128))).astype(int)
        return np.minimum(bins, max(self.max_nodes, 128))

    def __call__(self, z) -> np.ndarray:
        z = np.asarray(z)
        if np.iscomplexobj(z) and np.any(z.imag != 0):
            return self._straight(z)
        zr = np.abs(np.atleast_1d(z).real.astype(float)).ravel()
        om = self.nu * zr
        val = np.empty(len(zr))
        nodes = self._nodes_for(om)
        for n in np.unique(nodes):
            sel = nodes == n
            u, w = _leggauss(int(n))
            c = np.minimum(om[sel] / (2.0 * self.beta), 0.6)[:, None]
            x = u[None, :] - 1j * c * (1.0 - u * u)[None, :]
            dx = 1.0 + 2j * c * u[None, :]
            f = np.exp(-self.beta * x * x / (1.0 - x * x) - 1j * om[sel][:, None] * x) * dx
            # normalizing with the same rule makes Sigma(0) = 1 to rounding
            val[sel] = (f @ w).real / _bump_norm(self.beta, int(n))
        return val[0] if np.ndim(z) == 0 else val.reshape(np.shape(z))

    def _straight(self, z):
        zz = np.atleast_1d(z).astype(complex)
        u, w = _leggauss(self.max_nodes)
        sig = np.exp(-self.beta * u * u / (1.0 - u * u)) * w
        val = np.exp(-1j * self.nu * np.outer(zz, u)) @ sig / _bump_norm(self.beta, self.max_nodes)
        return val[0] if np.ndim(z) == 0 else val.reshape(np.shape(z))


@lru_cache(maxsize=32)
def _leggauss(n: int):
    return np.polynomial.legendre.leggauss(n)


@lru_cache(maxsize=64)
def _bump_norm(beta: float, n: int) -> float:
    u, w = _leggauss(n)
    return float(np.sum(w * np.exp(-beta * u * u / (1.0 - u * u))))


def Sigma_beta(z, beta: float, nu: float):
    return BumpTransform.create(beta, nu)(z)


def Psi_trunc(j: int, z, indices, lambdas, K_trunc: int):
    """prod over k != j, |k| <= K_trunc of (1 - z / (lam_k - lam_j))."""
    indices = np.asarray(indices)
    lambdas = np.asarray(lambdas, dtype=float)
    if j not in indices:
        raise KeyError(j)
    lj = lambdas[indices == j][0]
    sel = (indices != j) & (np.abs(indices) <= K_trunc)
    gaps = lambdas[sel] - lj
    if np.any(gaps == 0.0):
        raise ZeroDivisionError(f"degenerate spectrum: lambda_{j} repeats")
    z = np.asarray(z)
    out = np.prod(1.0 - np.atleast_1d(z)[:, None] / gaps[None, :], axis=1)
    return out[0] if z.ndim == 0 else out.reshape(z.shape)


def default_parameters(L0: float, T: float, delta: float = 0.1) -> tuple[float, float]:
    """(beta, nu) with nu = T (1 - delta) / 2 and K2 = 2^{5/2} L0^{3/2} / sqrt(6 pi)."""
    if not T > 0:
        raise ValueError("T must be positive")
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    k2 = 2.0**2.5 * L0**1.5 / math.sqrt(6.0 * math.pi)
    beta = 8.0 * math.sqrt(2.0) * k2**1.5 * (1 + delta) ** 1.5 / (9.0 * math.sqrt(T) * math.sqrt(1 - delta))
    return beta, T * (1.0 - delta) / 2.0


@dataclass(frozen=True)
class Compensation:
    name: str
    kind: str
    indices: tuple[int, int]
    C1: float
    C2: float
    a: float


@dataclass(frozen=True)
class Transform:
    """psi on a uniform frequency grid; phi(t) is its trapezoid inverse transform."""

    x: np.ndarray
    psi: np.ndarray

    def phi(self, t) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        dx = self.x[1] - self.x[0]
        out = np.empty(t.shape, dtype=complex)
        for s in range(0, len(t), 1024):
            blk = t[s : s + 1024]
            out[s : s + 1024] = np.exp(1j * np.outer(blk, self.x)) @ self.psi * dx / (2.0 * math.pi)
        return out

    def phi_uniform(self, t0: float, dt: float, count: int) -> np.ndarray:
        """phi at t0 + k dt, k < count, by a chirp z-transform."""
        dx = self.x[1] - self.x[0]
        n = np.arange(len(self.x))
        pre = self.psi * np.exp(1j * n * dx * t0)
        s = czt(pre, count, np.exp(1j * dx * dt), 1.0)
        tk = t0 + dt * np.arange(count)
        return s * np.exp(1j * self.x[0] * tk) * dx / (2.0 * math.pi)


@dataclass(frozen=True)
class BiorthogonalFamily:
    T: float
    beta: float
    nu: float
    delta: float
    K_trunc: int
    indices: np.ndarray
    lambdas: np.ndarray
    t: np.ndarray
    samples: dict
    transforms: dict = field(repr=False)
    compensation: tuple[Compensation, ...]
    X_max: float
    tolerance: float
    corrections: dict = field(default_factory=dict, repr=False)

    def lam(self, k: int) -> float:
        return float(self.lambdas[self.indices == k][0])

    def keys(self) -> list:
        return list(self.samples)

    def phi(self, key, t=None) -> np.ndarray:
        if t is None:
            return self.samples[key]
        return self.transforms[key].phi(t)

    def pairing(self, key, lam_k: float) -> complex:
        return pairing(self.samples[key], lam_k, self.t)

    def pairing_matrix(self, keys, ks) -> np.ndarray:
        return np.array([[self.pairing(a, self.lam(k)) for k in ks] for a in keys])


def pairing(phi_samples, lambda_k: float, t) -> complex:
    """int phi(s) exp(-i lambda_k s) ds by composite Simpson on the grid t."""
    t = np.asarray(t, dtype=float)
    return complex(simpson(np.asarray(phi_samples) * np.exp(-1j * lambda_k * t), x=t))


def _branch(z, lam_p, others, sigma: BumpTransform):
    gaps = others - lam_p
    return np.prod(1.0 - (z[:, None] - lam_p) / gaps[None, :], axis=1) * sigma(lam_p - z)


def _adaptive_transform(psi_fn, center: float, dx: float, x0: float) -> tuple[Transform, float]:
    """psi on center + dx * m, widening the window until its edge is below TAIL_TOL of the peak."""
    m = int(math.ceil(x0 / dx))
    idx = np.arange(-m, m + 1)
    vals = psi_fn(center + dx * idx)
    while True:
        X = m * dx
        peak = np.max(np.abs(vals))
        tail = np.max(np.abs(vals[np.abs(idx) > 0.8 * m]))
        if tail <= TAIL_TOL * peak:
            return Transform(center + dx * idx, vals), X
        if X > X_LIMIT:
            raise QuadratureError(f"frequency tail above {TAIL_TOL:g} of the peak at X_max={X:.4g}")
        m_new = int(math.ceil(1.5 * m))
        lo = np.arange(-m_new, -m)
        hi = np.arange(m + 1, m_new + 1)
        vals = np.concatenate([psi_fn(center + dx * lo), vals, psi_fn(center + dx * hi)])
        idx = np.arange(-m_new, m_new + 1)
        m = m_new


def _nearest_L0(L: float) -> float:
    cands = nearby_pairs(L)
    if not cands:
        return L
    return min((abs(L0 - L), L0) for _, L0 in cands)[1]


def build_family(
    spectrum: SpectrumB,
    T: float,
    K_trunc: int = 8,
    compensate: tuple[tuple[int, int], ...] = (),
    delta: float = 0.1,
    L0: float | None = None,
    keys: tuple[int, ...] | None = None,
    n_time: int = N_TIME,
    corrections: bool = False,
) -> BiorthogonalFamily:
    """Bi-orthogonal family for modes |k| <= K_trunc of ``spectrum``.

    ``compensate`` lists index pairs (p, q) that are replaced by one
    compensated function each; (p, -p) is the symmetric pair near 2 pi.
    ``keys`` restricts which plain phi_j are built (default: all others).
    With ``corrections`` the plain phi_p, phi_q of every compensated pair are
    also sampled, outside ``samples``, so that a caller can absorb the part of
    a moment problem the compensated member alone cannot match.
    """
    if K_trunc < 1:
        raise ValueError("K_trunc must be >= 1")
    if n_time % 2 == 0:
        raise ValueError("n_time must be odd for Simpson's rule")
    sub = spectrum.subset(K_trunc)
    idx = sub.indices
    lam = sub.lambdas
    if len(idx) < 2 * K_trunc:
        raise ValueError(f"spectrum has fewer than {K_trunc} modes per sign")
    if np.min(np.diff(np.sort(lam))) == 0.0:
        raise ZeroDivisionError("degenerate spectrum")
    beta, nu = default_parameters(_nearest_L0(spectrum.L) if L0 is None else L0, T, delta)
    sigma = BumpTransform.create(beta, nu)
    dx = min(0.5, math.pi / (2.0 * T))
    x0 = 8.0 * math.sqrt(beta) / nu + 20.0
    lam_of = dict(zip(idx.tolist(), lam.tolist()))
    t = np.linspace(-T / 2.0, T / 2.0, n_time)

    comp_set = {k for pq in compensate for k in pq}
    samples: dict = {}
    transforms: dict = {}
    x_max = 0.0
    plain = [k for k in idx.tolist() if k not in comp_set] if keys is None else list(keys)
    for j in plain:
        if j in comp_set:
            raise ValueError(f"index {j} is compensated")
    extra = {}
    for j in plain + (sorted(comp_set) if corrections else []):
        lj = lam_of[j]
        others = lam[idx != j]
        tr, X = _adaptive_transform(lambda z, lj=lj, o=others: _branch(z, lj, o, sigma), lj, dx, x0)
        target = extra if j in comp_set else samples
        if j not in comp_set:
            transforms[j] = tr
        target[j] = tr.phi_uniform(t[0], t[1] - t[0], len(t))
        x_max = max(x_max, X)

    comps = []
    for p, q in compensate:
        lp, lq = lam_of[p], lam_of[q]
        others = lam[(idx != p) & (idx != q)]
        a = float(np.prod((others - lq) / (others - lp)))
        s = float(sigma(lp - lq))
        c1 = 1.0 / (1.0 + s)
        c2 = a * c1
        kind = "S1" if q == -p else "S2"
        name = "theta0" if kind == "S1" else ("theta+" if lp > 0 else "theta-")
        if name in samples:
            name = f"{name}[{p},{q}]"

        def fn(z, lp=lp, lq=lq, o=others, c1=c1, c2=c2):
            return c1 * _branch(z, lp, o, sigma) + c2 * _branch(z, lq, o, sigma)

        tr, X = _adaptive_transform(fn, (lp + lq) / 2.0, dx, x0 + abs(lp - lq))
        transforms[name] = tr
        samples[name] = tr.phi_uniform(t[0], t[1] - t[0], len(t))
        x_max = max(x_max, X)
        comps.append(Compensation(name, kind, (p, q), c1, c2, a))

    fam = BiorthogonalFamily(
        T=T,
        beta=beta,
        nu=nu,
        delta=delta,
        K_trunc=K_trunc,
        indices=idx,
        lambdas=lam,
        t=t,
        samples=samples,
        transforms=transforms,
        compensation=tuple(comps),
        X_max=x_max,
        tolerance=0.0,
        corrections=extra,
    )
    return _with_tolerance(fam, comp_set)


def expected_pairing(fam: BiorthogonalFamily, key, k: int) -> float:
    """The value psi_key(lam_k) is designed to take."""
    for c in fam.compensation:
        if c.name == key:
            if k == c.indices[0]:
                return 1.0
            if k == c.indices[1]:
                return c.a
            return 0.0
    return 1.0 if k == key else 0.0


def _with_tolerance(fam: BiorthogonalFamily, comp_set) -> BiorthogonalFamily:
    m = min(fam.K_trunc // 2, 6)
    ks = [k for k in fam.indices.tolist() if abs(k) <= m]
    worst = 0.0
    members = [(key, v) for key, v in fam.samples.items()] + [(j, v) for j, v in fam.corrections.items()]
    for key, v in members:
        if isinstance(key, int) and abs(key) > m:
            continue
        for k in ks:
            worst = max(worst, abs(pairing(v, fam.lam(k), fam.t) - expected_pairing(fam, key, k)))
    return BiorthogonalFamily(**{**fam.__dict__, "tolerance": worst})


__all__ = [
    "BiorthogonalFamily",
    "BumpTransform",
    "Compensation",
    "QuadratureError",
    "Psi_trunc",
    "Sigma_beta",
    "build_family",
    "default_parameters",
    "expected_pairing",
    "pairing",
]
