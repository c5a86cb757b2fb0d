"""Three dyadic transition-stabilization intervals, basic and refined variants."""

import math

import numpy as np

from kdvcrit.control import StabilizationParams, random_real_state, run_transition_stabilization
from kdvcrit.kdv_simulator import GridFunction
from kdvcrit.spectrum_b import full_spectrum


def run(L, variant, T=32.0, n=2048):
    sp = full_spectrum(L, 30)
    y0 = GridFunction(L, np.real(random_real_state(sp, 4, seed=1).evaluate(sp, np.linspace(0, L, n + 1))))
    plan = run_transition_stabilization(y0, T, StabilizationParams(Q=1.0, n_max=3, variant=variant), L, 2 * math.pi)
    print(f"\nL = 2pi + {L - 2 * math.pi:g}, {variant}")
    for iv, rep in zip(plan.intervals, plan.reports):
        extra = f"  H_A defect {rep['h_a_defect']:.1e}" if rep["h_a_defect"] is not None else ""
        print(
            f"  [{iv.start:6.2f}, {iv.end:6.2f}]  mu_1 = {iv.mus[0]:7.2f}  ratio = {rep['energy_ratio']:.3e}"
            f"  sup|v| = {rep['v_sup']:.2e}{extra}"
        )


def main():
    run(2 * math.pi + 0.3, "basic")
    run(2 * math.pi + 0.05, "refined")


if __name__ == "__main__":
    main()
