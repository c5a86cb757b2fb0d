"""Steer a random real state to zero at L = 2 pi + 0.3 with the moment method."""

import math

import numpy as np

from kdvcrit.biortho import build_family
from kdvcrit.control import boundary_trace, moment_residuals, random_real_state, synthesize_v
from kdvcrit.kdv_simulator import GridFunction, simulate
from kdvcrit.spectrum_b import full_spectrum


def main(L=2 * math.pi + 0.3, T=2.0, n=2048):
    sp = full_spectrum(L, 30)
    family = build_family(sp, T, 8)
    z0 = random_real_state(sp, 4, seed=1)
    v = synthesize_v(z0, None, family, sp)
    res = moment_residuals(v.values, v.t, sp, z0, None, [j for j in range(-6, 7) if j])
    print(f"family tolerance {family.tolerance:.2e}, sup |v| = {v.sup():.3e}")
    print(f"largest moment residual / ||z0|| = {max(map(abs, res.values())) / z0.norm():.2e}")

    # the physical control is the right-end trace of z
    u = np.real(boundary_trace(z0, v, sp, 30))
    y0 = GridFunction(L, np.real(z0.evaluate(sp, np.linspace(0, L, n + 1))))
    tr = simulate(y0, u, T, dt=T / (len(u) - 1), store_every=len(u) // 8)
    for t, e in zip(tr.times, tr.energy[:: len(u) // 8]):
        print(f"t = {t:5.2f}  ||y|| / ||y0|| = {math.sqrt(e / tr.energy[0]):.3e}")


if __name__ == "__main__":
    main()
