"""Decay rates and observability of the slow mode as L approaches 2 pi."""

import math

from kdvcrit.kdv_simulator import decay_sweep


def main():
    rep = decay_sweep(2 * math.pi, (1e-1, 3e-2, 1e-2), T=1.0, config={"n": 1024, "dt": 1e-3})
    print("   delta   rate (spectral)  rate (simulated)  observability")
    for row in zip(rep.offsets, rep.rate_M_spectral, rep.rate_M_simulated, rep.observability_M):
        print("{:8.0e} {:16.4e} {:17.4e} {:14.4e}".format(*row))
    print(f"rate exponent {rep.exponent_rate:.3f}, observability exponent {rep.exponent_observability:.3f}")


if __name__ == "__main__":
    main()
