"""Finite-difference and modal solvers for the linear and nonlinear KdV systems.

The finite-difference solver integrates

    y_t + y_xxx + y_x (+ y y_x) = 0,   y(t,0) = y(t,L) = 0,   y_x(t,L) = u(t)

with Crank-Nicolson in time and centred second-order stencils in space.  The
right ghost value comes from y_x(L) = u; the left one, where no derivative
condition is imposed, is a quartic extrapolation.  The matrix is banded and
factorized once per (n, L, dt).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
from scipy.integrate import simpson
from scipy.sparse.linalg import splu

MIN_GRID = 256
BLOWUP_FACTOR = 2.0
# observed boundary energy below this fraction of ||y0||^2 counts as no observation;
# at L = 2 pi the Rosier mode leaves a grid-level trace of about 1e-12
UNOBSERVABLE_TOL = 1e-10


class SimulationError(RuntimeError):
    pass


@dataclass(frozen=True)
class GridFunction:
    """Samples at x_i = i L / n, i = 0..n."""

    L: float
    values: np.ndarray

    @property
    def n(self) -> int:
        return len(self.values) - 1

    @property
    def x(self) -> np.ndarray:
        return np.linspace(0.0, self.L, self.n + 1)

    @classmethod
    def from_function(cls, f, L: float, n: int) -> "GridFunction":
        x = np.linspace(0.0, L, n + 1)
        return cls(float(L), np.asarray(f(x)))

    def norm(self) -> float:
        return math.sqrt(energy(self.values, self.L))

    def scaled(self, a) -> "GridFunction":
        return GridFunction(self.L, a * self.values)


def energy(values: np.ndarray, L: float) -> float:
    """int |y|^2 dx by the trapezoid rule (which the scheme's energy balance uses)."""
    dx = L / (len(values) - 1)
    a = np.abs(values) ** 2
    return float(dx * (np.sum(a) - 0.5 * (a[0] + a[-1])))


def dx_left(values: np.ndarray, dx: float) -> np.ndarray:
    """Fourth-order one-sided y_x(0); works along the last axis."""
    v = values
    return (-25 * v[..., 0] + 48 * v[..., 1] - 36 * v[..., 2] + 16 * v[..., 3] - 3 * v[..., 4]) / (12 * dx)


@dataclass(frozen=True)
class Trajectory:
    L: float
    times: np.ndarray
    states: np.ndarray
    boundary_trace_dx0: np.ndarray
    boundary_trace_dxL: np.ndarray
    energy: np.ndarray
    energy_identity_defect: float | None = None

    def state(self, k: int = -1) -> GridFunction:
        return GridFunction(self.L, self.states[k])

    def final(self) -> GridFunction:
        return self.state(-1)


@dataclass
class _Stepper:
    n: int
    L: float
    dt: float
    D: sp.csc_matrix = field(repr=False)
    lhs: object = field(repr=False)
    rhs: sp.csc_matrix = field(repr=False)
    dx: float = 0.0

    def forcing(self, u) -> np.ndarray:
        """Contribution of y_x(L) = u to D y, as a vector over interior nodes."""
        b = np.zeros(self.n - 1, dtype=np.result_type(u, float))
        b[-1] = u / self.dx**2
        return b


def _operator(n: int, L: float) -> sp.csc_matrix:
    """D ~ d^3/dx^3 + d/dx on interior nodes 1..n-1 with y_0 = y_n = 0 and u = 0."""
    dx = L / n
    N = n - 1
    c3 = 1.0 / (2.0 * dx**3)
    c1 = 1.0 / (2.0 * dx)
    D = sp.lil_matrix((N, N))
    for r in range(N):
        i = r + 1
        for off, w in ((2, c3), (1, -2 * c3 + c1), (-1, 2 * c3 - c1), (-2, -c3)):
            j = i + off
            if 1 <= j <= n - 1:
                D[r, j - 1] += w
            elif j == n + 1:
                # ghost y_{n+1} = y_{n-1} + 2 dx u; the u part goes to the forcing
                D[r, n - 2] += w
            elif j == -1:
                # ghost y_{-1} = 5 y_0 - 10 y_1 + 10 y_2 - 5 y_3 + y_4
                for k, a in ((1, -10.0), (2, 10.0), (3, -5.0), (4, 1.0)):
                    D[r, k - 1] += w * a
    return D.tocsc()


@lru_cache(maxsize=16)
def _stepper(n: int, L: float, dt: float) -> _Stepper:
    if n < MIN_GRID:
        raise ValueError(f"grid size n={n} below {MIN_GRID}")
    if not dt > 0:
        raise ValueError("dt must be positive")
    D = _operator(n, L)
    eye = sp.identity(n - 1, format="csc")
    try:
        lhs = splu((eye + 0.5 * dt * D).tocsc())
    except RuntimeError as exc:
        raise SimulationError(f"singular Crank-Nicolson matrix for n={n}, dt={dt}") from exc
    return _Stepper(n, L, dt, D, lhs, (eye - 0.5 * dt * D).tocsc(), L / n)


def step_linear(state: GridFunction, dt: float, boundary: str = "adjoint_homogeneous", u_old=0.0, u_new=0.0) -> GridFunction:
    """One Crank-Nicolson step; boundary is 'adjoint_homogeneous' (u = 0) or 'dirichlet_neumannL'."""
    if boundary == "adjoint_homogeneous":
        u_old = u_new = 0.0
    elif boundary != "dirichlet_neumannL":
        raise ValueError(f"unknown boundary {boundary!r}")
    st = _stepper(state.n, state.L, dt)
    y = state.values[1:-1]
    rhs = st.rhs @ y - 0.5 * dt * (st.forcing(u_old) + st.forcing(u_new))
    out = np.zeros(state.n + 1, dtype=np.result_type(rhs, float))
    out[1:-1] = _solve(st, rhs)
    return GridFunction(state.L, out)


def _solve(st: _Stepper, rhs: np.ndarray) -> np.ndarray:
    if np.iscomplexobj(rhs):
        return st.lhs.solve(rhs.real) + 1j * st.lhs.solve(rhs.imag)
    return st.lhs.solve(rhs)


def _time_grid(T: float, dt: float) -> tuple[np.ndarray, float]:
    steps = max(1, int(round(T / dt)))
    return np.linspace(0.0, T, steps + 1), T / steps


def simulate(y0: GridFunction, u_samples=None, T: float = 1.0, n: int | None = None, dt: float = 1e-3, store_every: int = 0) -> Trajectory:
    """Linear run; u_samples (or None for u = 0) live on the time grid linspace(0, T, steps+1).

    All boundary traces and energies are recorded on the full time grid; states
    are stored every ``store_every`` steps (0 keeps only the first and last).
    """
    if n is not None and n != y0.n:
        raise ValueError("n must match the grid of y0")
    t, dt = _time_grid(T, dt)
    if u_samples is None:
        u = np.zeros(len(t))
    else:
        u = np.asarray(u_samples)
        if len(u) != len(t):
            raise ValueError(f"u has {len(u)} samples, the time grid has {len(t)}")
    st = _stepper(y0.n, y0.L, dt)
    y = np.array(y0.values[1:-1], dtype=np.result_type(y0.values, u, float))
    d0 = np.empty(len(t), dtype=y.dtype)
    en = np.empty(len(t))
    states = [y0.values.copy()]
    full = np.zeros(y0.n + 1, dtype=y.dtype)

    def record(k, y):
        full[1:-1] = y
        d0[k] = dx_left(full, st.dx)
        en[k] = energy(full, y0.L)

    record(0, y)
    for k in range(1, len(t)):
        rhs = st.rhs @ y - 0.5 * dt * (st.forcing(u[k - 1]) + st.forcing(u[k]))
        y = _solve(st, rhs)
        record(k, y)
        if store_every and k % store_every == 0 and k != len(t) - 1:
            states.append(full.copy())
    states.append(full.copy())
    defect = None
    if u_samples is None or not np.any(u):
        defect = abs(en[0] - en[-1] - simpson(np.abs(d0) ** 2, x=t)) / max(en[0], 1e-300)
    times = t if store_every else np.array([0.0, T])
    if store_every:
        times = np.concatenate([t[::store_every][: len(states) - 1], [T]])
    return Trajectory(y0.L, times, np.array(states), d0, u.copy(), en, defect)


def _nonlinear_term(y: np.ndarray, dx: float) -> np.ndarray:
    """Skew-symmetric form ((y^2)_x + y y_x) / 3 on the full grid, interior rows."""
    yx = (y[2:] - y[:-2]) / (2 * dx)
    y2x = (y[2:] ** 2 - y[:-2] ** 2) / (2 * dx)
    return (y2x + y[1:-1] * yx) / 3.0


def simulate_nonlinear(y0: GridFunction, T: float, n: int | None = None, dt: float = 1e-2, record_every: int = 1) -> Trajectory:
    """Crank-Nicolson for the linear part, second-order Adams-Bashforth for y y_x; u = 0."""
    if n is not None and n != y0.n:
        raise ValueError("n must match the grid of y0")
    if np.iscomplexobj(y0.values):
        raise ValueError("the nonlinear system needs real data")
    t, dt = _time_grid(T, dt)
    st = _stepper(y0.n, y0.L, dt)
    full = y0.values.astype(float).copy()
    y = full[1:-1].copy()
    n_prev = _nonlinear_term(full, st.dx)
    # the norm doubling means the energy grows fourfold
    limit = BLOWUP_FACTOR**2 * max(energy(full, y0.L), 1e-300)
    keep = list(range(0, len(t), record_every))
    if keep[-1] != len(t) - 1:
        keep.append(len(t) - 1)
    kept = set(keep)
    times, d0, en, states = [0.0], [dx_left(full, st.dx)], [energy(full, y0.L)], [full.copy()]
    for k in range(1, len(t)):
        n_now = _nonlinear_term(full, st.dx)
        nl = 1.5 * n_now - 0.5 * n_prev if k > 1 else n_now
        y = st.lhs.solve(st.rhs @ y - dt * nl)
        n_prev = n_now
        full[1:-1] = y
        e = energy(full, y0.L)
        if not np.isfinite(e) or e > limit:
            raise SimulationError(f"norm more than doubled at t={t[k]:.6g}")
        if k in kept:
            times.append(t[k])
            d0.append(dx_left(full, st.dx))
            en.append(e)
            states.append(full.copy())
    return Trajectory(y0.L, np.array(times), np.array(states), np.array(d0), np.zeros(len(times)), np.array(en))


def observability_ratio(L: float, T: float, y0: GridFunction, n: int | None = None, dt: float = 1e-3) -> float:
    """||y0||^2 / int_0^T |y_x(t,0)|^2 dt for the free run; inf when the trace vanishes.

    The trace vanishes when its energy is below UNOBSERVABLE_TOL ||y0||^2.
    """
    traj = simulate(y0, None, T, n, dt)
    obs = simpson(np.abs(traj.boundary_trace_dx0) ** 2, x=np.linspace(0.0, T, len(traj.energy)))
    if obs <= 1e-300 or obs < UNOBSERVABLE_TOL * traj.energy[0]:
        return math.inf
    return traj.energy[0] / obs


def filon_cumulative(v: np.ndarray, t: np.ndarray, lam: float) -> np.ndarray:
    """int_0^{t_m} exp(-i lam s) v(s) ds for every m, exact for piecewise-linear v."""
    t = np.asarray(t, dtype=float)
    h = np.diff(t)
    a = -1j * lam
    th = a * h
    e0 = np.exp(a * t[:-1])
    small = np.abs(th) < 1e-3
    # int_0^h exp(a s) ds and int_0^h s exp(a s) ds / h, with series for small a h
    safe = np.where(small, 1.0, th)
    i0 = np.where(small, h * (1 + th / 2 + th**2 / 6 + th**3 / 24), h * (np.exp(th) - 1) / safe)
    i1 = np.where(
        small,
        h * (0.5 + th / 3 + th**2 / 8 + th**3 / 30),
        h * (np.exp(th) * (th - 1) + 1) / safe**2,
    )
    cell = e0 * (v[:-1] * (i0 - i1) + v[1:] * i1)
    return np.concatenate([[0.0], np.cumsum(cell)])


def filon_simpson(v: np.ndarray, t: np.ndarray, lam: float) -> complex:
    """int exp(-i lam s) v(s) ds over the grid, exact for piecewise-quadratic v.

    Needs an odd number of uniformly spaced samples.
    """
    t = np.asarray(t, dtype=float)
    if len(t) % 2 == 0:
        raise ValueError("Filon-Simpson needs an odd number of samples")
    h = (t[-1] - t[0]) / (len(t) - 1)
    w = -lam * h
    if abs(w) < 1e-2:
        w2 = w * w
        m0 = 2 - w2 / 3 + w2 * w2 / 60 - w2**3 / 2520
        m1 = 1j * w * (2 / 3 - w2 / 15 + w2 * w2 / 420)
        m2 = 2 / 3 - w2 / 5 + w2 * w2 / 84 - w2**3 / 3240
    else:
        s, c = math.sin(w), math.cos(w)
        m0 = 2 * s / w
        m1 = 2j * (s - w * c) / w**2
        m2 = 2 * ((w * w - 2) * s + 2 * w * c) / w**3
    vm, v0, vp = v[:-2:2], v[1:-1:2], v[2::2]
    centre = np.exp(-1j * lam * t[1:-1:2])
    return complex(h * np.sum(centre * (vm * (m2 - m1) / 2 + v0 * (m0 - m2) + vp * (m2 + m1) / 2)))


def modal_duhamel(z0, v_samples: np.ndarray, t: np.ndarray, spectrum, ks=None):
    """z_j(T) = exp(i lam_j T) (z_j^0 - i lam_j h_j int_0^T exp(-i lam_j s) v ds) per mode.

    i lam_j h_j = -conj(E_j'(L)).  Uses the Filon-Simpson rule, exact for
    piecewise-quadratic v, a different discretization from the Simpson rule of
    the moment residuals.
    """
    from .control import SpectralState

    ks = sorted(z0.coeffs) if ks is None else list(ks)
    out = {}
    T = float(t[-1] - t[0])
    for j in ks:
        m = spectrum.mode(j)
        w = -np.conj(m.dE_at_L)
        integral = filon_simpson(v_samples, t - t[0], m.lam)
        out[j] = complex(np.exp(1j * m.lam * T) * (z0.coeffs.get(j, 0.0) - w * integral))
    return SpectralState(z0.L, out, z0.K_trunc)


@dataclass(frozen=True)
class DecayReport:
    L0: float
    offsets: tuple[float, ...]
    zeta_M: tuple[complex, ...]
    rate_M_spectral: tuple[float, ...]
    rate_M_simulated: tuple[float | None, ...]
    rate_H_simulated: tuple[float | None, ...]
    observability_M: tuple[float | None, ...]
    observability_H: tuple[float | None, ...]
    exponent_rate: float | None
    exponent_observability: float | None
    failures: tuple[str, ...]


def fit_rate(times: np.ndarray, energies: np.ndarray, t_fit: float | None = None) -> float:
    """Decay rate r of E(t) ~ exp(-r t), least squares on [0.2 t_fit, t_fit]."""
    t_fit = times[-1] if t_fit is None else t_fit
    sel = (times >= 0.2 * t_fit) & (times <= t_fit)
    if sel.sum() < 3:
        raise ValueError("fit window holds fewer than three samples")
    return float(-np.polyfit(times[sel], np.log(energies[sel]), 1)[0])


def loglog_slope(xs, ys) -> float:
    return float(np.polyfit(np.log(np.asarray(xs, float)), np.log(np.asarray(ys, float)), 1)[0])


def real_part_datum(mode, L: float, n: int) -> GridFunction:
    """Re of an eigenfunction sampled on the grid, normalized in L^2."""
    g = GridFunction.from_function(lambda x: np.real(mode(np.clip(x, 0.0, L))), L, n)
    return g.scaled(1.0 / g.norm())


def decay_sweep(L0: float, offsets, T: float = 1.0, config: dict | None = None) -> DecayReport:
    """Per offset: the M-direction eigenvalue, simulated decay rates and observability ratios."""
    from .critical_lengths import classify_length, lambda_c
    from .spectrum_a import eigen_near, real_spectrum_A

    cfg = {"n": 1024, "dt": 1e-3, "simulate": True, "sim_window": 1.0}
    cfg.update(config or {})
    offsets = tuple(float(d) for d in offsets)
    if any(d == 0.0 for d in offsets):
        raise ValueError("offsets must be punctured: 0 is not allowed")
    info = classify_length(L0)
    if info is None:
        raise ValueError(f"L0={L0!r} is not a critical length")
    target = min(lambda_c(p) for p in info.pairs)
    zs, rs, sim_m, sim_h, ob_m, ob_h, fails = [], [], [], [], [], [], []
    for d in offsets:
        L = L0 + d
        try:
            m = eigen_near(target, L, L0)
            zs.append(m.zeta)
            rs.append(-2.0 * m.zeta.real)
        except Exception as exc:  # noqa: BLE001 - recorded, sweep continues
            zs.append(complex("nan"))
            rs.append(math.nan)
            sim_m.append(None), sim_h.append(None), ob_m.append(None), ob_h.append(None)
            fails.append(f"offset {d!r}: {exc}")
            continue
        if not cfg["simulate"]:
            sim_m.append(None), sim_h.append(None), ob_m.append(None), ob_h.append(None)
            continue
        try:
            ym = real_part_datum(m, L, cfg["n"])
            ob_m.append(observability_ratio(L, T, ym, dt=cfg["dt"]))
            window = cfg["sim_window"] / max(rs[-1], 1e-12)
            tr = simulate(ym, None, min(window, cfg.get("max_T", 200.0)), dt=cfg.get("dt_long", 0.05))
            tt = np.linspace(0.0, tr.times[-1], len(tr.energy))
            sim_m.append(fit_rate(tt, tr.energy))
            hmode = real_spectrum_A(L, 2)[1] if abs(zs[-1].imag) < 1e-12 else None
            if hmode is not None:
                yh = real_part_datum(hmode, L, cfg["n"])
                ob_h.append(observability_ratio(L, T, yh, dt=cfg["dt"]))
                th = 3.0 / (-2.0 * hmode.zeta.real)
                trh = simulate(yh, None, th, dt=cfg["dt"])
                sim_h.append(fit_rate(np.linspace(0.0, th, len(trh.energy)), trh.energy))
            else:
                ob_h.append(None), sim_h.append(None)
        except Exception as exc:  # noqa: BLE001 - recorded, sweep continues
            fails.append(f"offset {d!r}: {exc}")
            sim_m.append(None), sim_h.append(None), ob_m.append(None), ob_h.append(None)
    ok = [(abs(d), r) for d, r in zip(offsets, rs) if np.isfinite(r) and r > 0]
    exp_rate = loglog_slope(*zip(*ok)) if len(ok) >= 2 else None
    okb = [(abs(d), o) for d, o in zip(offsets, ob_m) if o is not None and np.isfinite(o)]
    exp_obs = loglog_slope(*zip(*okb)) if len(okb) >= 2 else None
    return DecayReport(
        L0=L0,
        offsets=offsets,
        zeta_M=tuple(zs),
        rate_M_spectral=tuple(rs),
        rate_M_simulated=tuple(sim_m),
        rate_H_simulated=tuple(sim_h),
        observability_M=tuple(ob_m),
        observability_H=tuple(ob_h),
        exponent_rate=exp_rate,
        exponent_observability=exp_obs,
        failures=tuple(fails),
    )


__all__ = [
    "DecayReport",
    "GridFunction",
    "SimulationError",
    "Trajectory",
    "decay_sweep",
    "dx_left",
    "energy",
    "filon_cumulative",
    "fit_rate",
    "loglog_slope",
    "modal_duhamel",
    "observability_ratio",
    "real_part_datum",
    "simulate",
    "simulate_nonlinear",
    "step_linear",
]
