import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kdvcrit.critical_lengths import CriticalPair, critical_length, lambda_c, type1_eigenfunction
from kdvcrit.spectrum_a import (
    NewtonError,
    build_mode_A,
    char_A,
    critical_tau_c1,
    eigen_near,
    newton_tau,
    quasi_invariant_basis,
    real_branch_equation,
    real_spectrum_A,
    s2_coefficients,
    zeta_of_tau,
)
from kdvcrit.spectrum_b import full_spectrum

from .oracles import chebyshev_A_eigenvalues, gauss

TWO_PI = 2 * math.pi
MODELS = [
    (CriticalPair(1, 1, "S1"), critical_length(3)),
    (CriticalPair(2, 1, "S3"), critical_length(7)),
    (CriticalPair(4, 1, "S2"), critical_length(21)),
]
OFFSETS = (1e-1, 1e-2, 1e-3)


def mp_char_A(tr, ti, L):
    mp.mp.dps = 50
    t = mp.mpc(tr, ti)
    s = mp.sqrt(1 - 3 * t * t)
    g = -s * mp.cos(3 * L * t) + s * mp.cos(L * s) - 1j * s * mp.sin(3 * L * t) + 3j * t * mp.sin(L * s)
    return complex(g)


def slope(xs, ys):
    return np.polyfit(np.log(xs), np.log(ys), 1)[0]


@pytest.mark.parametrize("pair, L0", MODELS)
def test_char_A_vanishes_at_critical_seed(pair, L0):
    gr, gi = char_A(critical_tau_c1(pair, L0), 0.0, L0)
    assert abs(gr) < 1e-12 and abs(gi) < 1e-12


@settings(max_examples=50, deadline=None)
@given(
    st.floats(min_value=-1.5, max_value=1.5),
    st.floats(min_value=-0.3, max_value=0.3),
    st.floats(min_value=0.5, max_value=20.0),
)
def test_char_A_against_mpmath(tr, ti, L):
    ref = mp_char_A(tr, ti, L)
    gr, gi = char_A(tr, ti, L)
    assert abs(complex(gr, gi) - ref) < 1e-10 * max(1.0, abs(ref))


@settings(max_examples=50, deadline=None)
@given(
    st.floats(min_value=-1.5, max_value=1.5),
    st.floats(min_value=-0.3, max_value=0.3),
    st.floats(min_value=0.5, max_value=20.0),
)
def test_char_A_reflection_symmetry(tr, ti, L):
    # G(-conj tau) = +-conj G(tau); the sign flips only across the branch cut of the root
    g = complex(*char_A(tr, ti, L))
    h = complex(*char_A(-tr, ti, L))
    tol = 1e-9 * max(1.0, abs(g))
    assert min(abs(h - np.conj(g)), abs(h + np.conj(g))) < tol
    if ti != 0.0:
        assert abs(h - np.conj(g)) < tol


@pytest.mark.parametrize("pair, L0", MODELS)
def test_eigen_near_laws(pair, L0):
    re, dF = [], []
    for d in OFFSETS:
        m = eigen_near(lambda_c(pair), L0 + d, L0)
        assert m.zeta.real < 0
        assert abs(m.zeta.imag + lambda_c(pair)) < 2 * d * d
        re.append(-m.zeta.real)
        dF.append(abs(m.dF_at_0))
    assert abs(slope(OFFSETS, re) - 2.0) < 0.1
    assert abs(slope(OFFSETS, dF) - 1.0) < 0.1
    ratios = np.array(dF) / np.array(OFFSETS)
    assert np.ptp(ratios) / ratios.mean() < 0.01


@pytest.mark.parametrize("pair, L0", MODELS)
def test_re_zeta_constant(pair, L0):
    # fitted constant agrees with -9 sqrt3 k^2 l^2 (k+l)^2 / (8 pi n^{7/2})
    k, l, n = pair.k, pair.l, pair.norm
    c = -9 * math.sqrt(3) * k * k * l * l * (k + l) ** 2 / (8 * math.pi * n**3.5)
    d = 1e-3
    assert eigen_near(lambda_c(pair), L0 + d, L0).zeta.real / d**2 == pytest.approx(c, rel=2e-3)


def test_two_pi_real_negative():
    d = 0.01
    m = eigen_near(0.0, TWO_PI + d)
    assert abs(m.zeta.imag) < 1e-12
    assert m.zeta.real / d**2 == pytest.approx(-1 / (6 * math.pi), rel=1e-2)


def test_s3_quadratic_closeness():
    p, L0 = MODELS[1]
    m = eigen_near(lambda_c(p), L0 + 0.01, L0)
    assert abs(m.zeta - (-1j) * 20 / (21 * math.sqrt(21))) < 1e-4


@pytest.mark.parametrize("pair, L0", MODELS)
@pytest.mark.parametrize("d", [0.05, -0.02])
def test_mode_properties(pair, L0, d):
    L = L0 + d
    m = eigen_near(lambda_c(pair), L, L0)
    ends = m(np.array([0.0, L]))
    assert np.max(np.abs(ends)) < 1e-12
    assert abs(m(L, 1)) < 1e-12
    assert abs(m(0.0, 1) - m.dF_at_0) < 1e-12
    x, w = gauss(L, 300)
    assert abs(np.sum(w * np.abs(m(x)) ** 2) - 1) < 1e-10
    rng = np.random.default_rng(1)
    xs = rng.uniform(0, L, 50)
    res = m(xs, 3) + m(xs, 1) + m.zeta * m(xs)
    assert np.max(np.abs(res)) < 1e-8
    assert abs(m.zeta.real + abs(m.dF_at_0) ** 2 / 2) < 1e-6


@pytest.mark.parametrize("pair, L0", MODELS[1:])
def test_conjugate_seed(pair, L0):
    L = L0 + 0.01
    m = eigen_near(lambda_c(pair), L, L0)
    tau, _ = newton_tau(-critical_tau_c1(pair, L0), L)
    assert abs(zeta_of_tau(tau) - np.conj(m.zeta)) < 1e-12
    c = m.conjugate()
    assert c.zeta == np.conj(m.zeta)
    x = np.linspace(0, L, 7)
    assert np.max(np.abs(c(x) - np.conj(m(x)))) < 1e-12


@pytest.mark.parametrize("pair, L0", MODELS[1:])
def test_against_collocation(pair, L0):
    L = L0 + 0.01
    ref = chebyshev_A_eigenvalues(L, 100)
    m = eigen_near(lambda_c(pair), L, L0)
    assert np.min(np.abs(ref - m.zeta)) < 1e-9


def test_newton_failure_reported():
    with pytest.raises(NewtonError):
        newton_tau(0.5, TWO_PI + 0.01, maxiter=0)
    with pytest.raises(ValueError):
        eigen_near(0.123, TWO_PI + 0.01)


def test_real_spectrum():
    L = TWO_PI + 0.3
    modes = real_spectrum_A(L, 5)
    zetas = [m.zeta for m in modes]
    assert len(set(np.round(np.real(zetas), 12))) == 5
    ref = chebyshev_A_eigenvalues(L, 120)
    for m in modes:
        t = m.tau.imag
        assert m.zeta.real < 0 and abs(m.zeta.imag) < 1e-12
        assert m.zeta.real == pytest.approx(-2 * t * (4 * t * t + 1), rel=1e-14)
        assert abs(real_branch_equation(t, L)) < 1e-11
        assert abs(m.zeta.real + abs(m.dF_at_0) ** 2 / 2) < 1e-6
        assert np.min(np.abs(ref - m.zeta)) < 1e-7 * (1 + abs(m.zeta))


def test_real_spectrum_contains_zeta0():
    L = TWO_PI + 0.01
    first = real_spectrum_A(L, 1)[0]
    assert abs(first.zeta - eigen_near(0.0, L).zeta) < 1e-10


def test_real_spectrum_errors():
    with pytest.raises(ValueError):
        real_spectrum_A(TWO_PI, 2)
    with pytest.raises(ValueError):
        real_spectrum_A(7.0, 0)


def test_build_mode_phase():
    m = build_mode_A(0.37 + 0.01j, 7.0)
    assert m.dF_at_0.imag == 0.0 and m.dF_at_0.real >= 0.0


def test_quasi_basis_two_pi():
    l2 = []
    for d in (1e-2, 1e-3):
        L = TWO_PI + d
        s = full_spectrum(L, 4)
        q = quasi_invariant_basis(L, TWO_PI, s)
        assert q.kinds == ("S1",) and len(q.basis_A) == 1
        ((j1, a), (j2, b)), = q.basis_B
        assert (j1, j2) == (1, -1)
        assert abs(b - np.conj(a)) < 1e-10  # a real combination
        x, w = gauss(L, 300)
        e = q.eval_B(s, 0, x)
        e = e / math.sqrt(np.sum(w * np.abs(e) ** 2))
        g = (1 - np.cos(x)) * 2 / math.sqrt(6 * math.pi)
        g = g / math.sqrt(np.sum(w * g * g))
        c = np.vdot(g * w, e) / abs(np.vdot(g * w, e))
        l2.append(math.sqrt(np.sum(w * np.abs(e - c * g) ** 2)))
    assert l2[0] < 2 * 1e-2 and l2[1] < 2 * 1e-3


def test_quasi_basis_s3():
    p, L0 = MODELS[1]
    errs = []
    for d in (1e-2, 1e-3):
        L = L0 + d
        s = full_spectrum(L, 3)
        q = quasi_invariant_basis(L, L0, s)
        assert q.basis_B == (((1, 1.0 + 0j),), ((-1, 1.0 + 0j),))
        assert len(q.basis_A) == 2
        x, w = gauss(L, 300)
        e = s.mode(1)(x)
        g = type1_eigenfunction(p, L0, np.clip(x * L0 / L, 0, L0)) * math.sqrt(L0 / L)
        c = np.vdot(g * w, e) / abs(np.vdot(g * w, e))
        errs.append(math.sqrt(np.sum(w * np.abs(e - c * g) ** 2)))
    assert errs[1] < errs[0] / 5


def test_quasi_basis_s2():
    p, L0 = MODELS[2]
    res = []
    for d in (1e-2, 1e-3):
        s = full_spectrum(L0 + d, 4)
        a, b, r = s2_coefficients(s, p, L0)
        res.append(r)
        mags = sorted([abs(a), abs(b)])
        assert mags[1] == pytest.approx(math.sqrt(98 + 18 * math.sqrt(21)) / 14, abs=5 * d)
        assert mags[0] == pytest.approx(math.sqrt(98 - 18 * math.sqrt(21)) / 14, abs=5 * d)
    assert res[1] < res[0] / 5


def test_quasi_basis_fourteen_pi():
    L0 = 14 * math.pi
    q = quasi_invariant_basis(L0 + 0.02, L0)
    assert len(q.basis_A) == 3  # N0 complex directions
    assert sorted(q.kinds) == ["S1", "S2"]
    assert len(q.basis_B) == 3
    assert all(m.zeta.real < 0 for m in q.basis_A)


def test_quasi_basis_rejects_noncritical():
    with pytest.raises(ValueError):
        quasi_invariant_basis(7.0, 7.1)
