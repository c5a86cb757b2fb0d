import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kdvcrit.control import SpectralState, h_a_defect, project_H_A
from kdvcrit.critical_lengths import classify_length, lambda_c
from kdvcrit.kdv_simulator import (
    GridFunction,
    SimulationError,
    decay_sweep,
    dx_left,
    energy,
    filon_cumulative,
    filon_simpson,
    fit_rate,
    loglog_slope,
    modal_duhamel,
    observability_ratio,
    real_part_datum,
    simulate,
    simulate_nonlinear,
    step_linear,
)
from kdvcrit.spectrum_a import eigen_near, quasi_invariant_basis, real_spectrum_A
from kdvcrit.spectrum_b import full_spectrum

L_FAR = 2 * math.pi + 0.3


@pytest.fixture(scope="module")
def modes_far():
    return real_spectrum_A(L_FAR, 3)


def rosier(n):
    return GridFunction.from_function(lambda x: (1 - np.cos(x)) / math.sqrt(3 * math.pi), 2 * math.pi, n)


def test_grid_function_basics():
    g = GridFunction.from_function(np.sin, math.pi, 256)
    assert g.n == 256 and g.x[-1] == math.pi
    assert g.norm() ** 2 == pytest.approx(math.pi / 2, rel=1e-4)
    assert g.scaled(2.0).norm() == pytest.approx(2 * g.norm())
    assert energy(np.ones(11), 1.0) == pytest.approx(1.0)
    x = np.linspace(0, 1, 257)
    assert dx_left(np.sin(3 * x), x[1]) == pytest.approx(3.0, abs=1e-7)


def test_zero_state_stays_zero():
    z = GridFunction(L_FAR, np.zeros(513))
    assert not np.any(step_linear(z, 1e-2).values)
    tr = simulate(z, None, 0.5, dt=1e-2)
    assert not np.any(tr.final().values) and not np.any(tr.energy)


def test_step_matches_simulate(modes_far):
    y = real_part_datum(modes_far[1], L_FAR, 512)
    one = step_linear(y, 1e-2)
    assert np.max(np.abs(one.values - simulate(y, None, 1e-2, dt=1e-2).final().values)) < 1e-14
    with pytest.raises(ValueError):
        step_linear(y, 1e-2, boundary="periodic")


def test_controlled_step_uses_boundary_value():
    z = GridFunction(L_FAR, np.zeros(513))
    out = step_linear(z, 1e-3, "dirichlet_neumannL", 1.0, 1.0)
    assert np.max(np.abs(out.values)) > 0
    out_h = step_linear(z, 1e-3, "adjoint_homogeneous", 1.0, 1.0)
    assert not np.any(out_h.values)


def test_eigenmode_decay(modes_far):
    # the slowest real mode and a faster one, against exp(2 Re zeta t)
    for m in modes_far[:2]:
        y = real_part_datum(m, L_FAR, 2048)
        tr = simulate(y, None, 1.0, dt=1 / 4096)
        assert tr.energy[-1] / tr.energy[0] == pytest.approx(math.exp(2 * m.zeta.real), rel=0.03)
        assert tr.energy[-1] / tr.energy[0] == pytest.approx(math.exp(2 * m.zeta.real), rel=1e-5)


def test_critical_mode_is_conserved():
    tr = simulate(rosier(2048), None, 5.0, dt=5 / 4096)
    assert np.max(np.abs(tr.boundary_trace_dx0)) < 1e-4
    assert abs(tr.energy[-1] / tr.energy[0] - 1) < 0.01
    assert math.isinf(observability_ratio(2 * math.pi, 5.0, rosier(2048), dt=5 / 4096))


def test_energy_identity_and_monotone(modes_far):
    rng = np.random.default_rng(4)
    c = rng.normal(size=3)
    y = GridFunction(L_FAR, sum(ci * real_part_datum(m, L_FAR, 2048).values for ci, m in zip(c, modes_far)))
    tr = simulate(y, None, 1.0, dt=1 / 4096)
    # E(0) - E(T) = int |y_x(t,0)|^2 dt
    assert tr.energy_identity_defect < 0.01
    assert tr.energy_identity_defect < 1e-4
    assert np.all(np.diff(tr.energy) <= 1e-10 * tr.energy[:-1])


def test_richardson_refinement(modes_far):
    y = lambda n: real_part_datum(modes_far[1], L_FAR, n)
    coarse = simulate(y(512), None, 1.0, dt=1 / 512).energy[-1]
    fine = simulate(y(1024), None, 1.0, dt=1 / 1024).energy[-1]
    assert abs(coarse - fine) < 0.005 * fine


def test_store_every_and_state_access(modes_far):
    y = real_part_datum(modes_far[1], L_FAR, 512)
    tr = simulate(y, None, 0.1, dt=0.01, store_every=5)
    assert list(tr.times) == pytest.approx([0.0, 0.05, 0.1])
    assert tr.state(0).norm() == pytest.approx(1.0, rel=1e-12)
    assert len(tr.boundary_trace_dx0) == 11


def test_simulate_errors(modes_far):
    y = real_part_datum(modes_far[1], L_FAR, 512)
    with pytest.raises(ValueError):
        simulate(y, np.zeros(3), 0.1, dt=0.01)
    with pytest.raises(ValueError):
        simulate(y, None, 0.1, n=1024, dt=0.01)
    with pytest.raises(ValueError):
        simulate(real_part_datum(modes_far[1], L_FAR, 128), None, 0.1, dt=0.01)
    with pytest.raises(ValueError):
        simulate_nonlinear(GridFunction(L_FAR, np.zeros(513, dtype=complex)), 0.1)


def test_nonlinear_small_amplitude_limit(modes_far):
    # the first-order nonlinear correction makes the relative gap proportional to the amplitude
    gaps = []
    for a in (1e-5, 1e-4, 1e-3):
        y = real_part_datum(modes_far[1], L_FAR, 1024).scaled(a)
        lin = simulate(y, None, 1.0, dt=1e-3).final().values
        non = simulate_nonlinear(y, 1.0, dt=1e-3).final().values
        gaps.append(np.max(np.abs(lin - non)) / np.max(np.abs(lin)))
    assert gaps[0] < 2e-6
    assert gaps[1] < 2e-5
    assert gaps[1] / gaps[0] == pytest.approx(10, rel=0.01)
    assert gaps[2] / gaps[1] == pytest.approx(10, rel=0.01)


def test_nonlinear_blowup_detected():
    # the explicit nonlinear term far beyond its step limit
    y = GridFunction.from_function(lambda x: 60 * np.sin(x) ** 2, L_FAR, 512)
    with pytest.raises(SimulationError):
        simulate_nonlinear(y, 5.0, dt=0.05)


def test_nonlinear_record_every(modes_far):
    y = real_part_datum(modes_far[1], L_FAR, 512).scaled(0.01)
    tr = simulate_nonlinear(y, 0.1, dt=0.01, record_every=3)
    assert list(tr.times) == pytest.approx([0.0, 0.03, 0.06, 0.09, 0.1])
    assert np.all(np.diff(tr.energy) < 0)


def test_observability_near_critical_length():
    L0 = 2 * math.pi
    target = min(lambda_c(p) for p in classify_length(L0).pairs)
    ratios = []
    for d in (1e-1, 1e-2):
        m = eigen_near(target, L0 + d, L0)
        ratios.append(observability_ratio(L0 + d, 1.0, real_part_datum(m, L0 + d, 1024), dt=1 / 2048))
    assert loglog_slope([1e-1, 1e-2], ratios) == pytest.approx(-2.0, abs=0.2)


def test_h_a_invariant_under_free_flow():
    L = 2 * math.pi + 0.05
    spec = full_spectrum(L, 30)
    basis = quasi_invariant_basis(L, 2 * math.pi, spec)
    rng = np.random.default_rng(7)
    y0 = GridFunction.from_function(lambda x: sum(rng.normal() * np.sin(k * math.pi * x / L) for k in range(1, 5)), L, 2048)
    y0 = project_H_A(y0, basis)
    assert h_a_defect(y0, basis) < 1e-12
    tr = simulate(y0, None, 2.0, dt=1 / 2048)
    assert h_a_defect(tr.final(), basis) * tr.final().norm() < 1e-3 * y0.norm()


def test_projected_coefficient_rate():
    # <y(t), F> evolves with rate conj(zeta) for the free flow
    L = 2 * math.pi + 0.3
    basis = quasi_invariant_basis(L, 2 * math.pi, full_spectrum(L, 30))
    (F,) = basis.basis_A
    y0 = GridFunction.from_function(lambda x: np.sin(x / 2) ** 2 * np.sin(x * math.pi / L), L, 2048)
    tr = simulate(y0, None, 3.0, dt=1 / 1024)

    def p(g):
        x = g.x
        w = np.full(len(x), x[1])
        w[[0, -1]] *= 0.5
        return np.sum(w * g.values * np.conj(F(L - x)))

    assert p(tr.final()) / p(y0) == pytest.approx(np.exp(np.conj(F.zeta) * 3.0), rel=1e-4)


@settings(max_examples=15, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(-3, 3), st.floats(-20, 20))
def test_filon_simpson_exact_on_quadratics(a, b, c, lam):
    t = np.linspace(0.0, 1.7, 41)
    v = a + b * t + c * t * t
    fine = np.linspace(0.0, 1.7, 20001)
    ref = np.trapezoid((a + b * fine + c * fine**2) * np.exp(-1j * lam * fine), fine)
    assert abs(filon_simpson(v, t, lam) - ref) < 1e-7 * (1 + abs(a) + abs(b) + abs(c))


def test_filon_simpson_closed_form():
    t = np.linspace(0.0, 2.0, 9)
    lam = 3.0
    exact = (1 - np.exp(-2j * lam)) / (1j * lam)
    assert filon_simpson(np.ones_like(t), t, lam) == pytest.approx(exact, abs=1e-14)
    assert filon_simpson(np.ones_like(t), t, 1e-9) == pytest.approx(2.0, abs=1e-8)
    with pytest.raises(ValueError):
        filon_simpson(np.ones(4), np.linspace(0, 1, 4), 1.0)


def test_filon_cumulative_exact_on_lines():
    t = np.linspace(0.0, 1.0, 11)
    lam = 5.0
    cum = filon_cumulative(1 + 2 * t, t, lam)
    s = t[-1]
    a = -1j * lam
    exact = (np.exp(a * s) - 1) / a + 2 * (np.exp(a * s) * (a * s - 1) + 1) / a**2
    assert cum[0] == 0 and cum[-1] == pytest.approx(exact, abs=1e-13)
    assert filon_cumulative(np.ones_like(t), t, 1e-8)[-1] == pytest.approx(1.0, abs=1e-8)


def test_modal_duhamel_free_rotation():
    spec = full_spectrum(L_FAR, 10)
    z0 = SpectralState(L_FAR, {1: 0.3 + 0.1j, -1: 0.3 - 0.1j, 4: 1.0}, 8)
    t = np.linspace(0.0, 2.0, 101)
    zT = modal_duhamel(z0, np.zeros_like(t), t, spec)
    for j, c in z0.coeffs.items():
        assert zT.get(j) == pytest.approx(c * np.exp(1j * spec.mode(j).lam * 2.0), abs=1e-15)


def test_fit_rate_and_slope():
    t = np.linspace(0, 10, 201)
    assert fit_rate(t, 3 * np.exp(-0.7 * t)) == pytest.approx(0.7, rel=1e-12)
    assert fit_rate(t, np.exp(-0.7 * t), t_fit=5.0) == pytest.approx(0.7, rel=1e-12)
    with pytest.raises(ValueError):
        fit_rate(t[:3], np.ones(3))
    assert loglog_slope([1, 10, 100], [1, 1e-2, 1e-4]) == pytest.approx(-2.0)


@pytest.mark.parametrize("L0", [2 * math.pi, 2 * math.pi * math.sqrt(7 / 3)])
def test_decay_sweep_spectral_exponent(L0):
    rep = decay_sweep(L0, (1e-1, 1e-2, 1e-3), config={"simulate": False})
    assert rep.exponent_rate == pytest.approx(2.0, abs=0.2)
    assert not rep.failures
    assert all(r > 0 for r in rep.rate_M_spectral)


def test_decay_sweep_rejects_bad_input():
    with pytest.raises(ValueError):
        decay_sweep(2 * math.pi, (0.0, 0.1))
    with pytest.raises(ValueError):
        decay_sweep(7.0, (0.1,))


def test_decay_sweep_simulated():
    rep = decay_sweep(2 * math.pi, (1e-1,), T=1.0, config={"n": 512, "dt": 1e-3, "dt_long": 0.05, "sim_window": 0.2})
    assert not rep.failures
    assert rep.rate_M_simulated[0] == pytest.approx(rep.rate_M_spectral[0], rel=0.02)
    assert rep.observability_H[0] is not None and rep.rate_H_simulated[0] > 0
