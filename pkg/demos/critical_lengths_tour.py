"""Walk through the first critical lengths and the spectrum just beside 2 pi."""

import math

from kdvcrit.critical_lengths import critical_lengths_up_to
from kdvcrit.spectrum_b import full_spectrum


def main():
    print(f"{'I_C':>4} {'L0':>10} {'class':>5} {'N0':>3}  pairs")
    for c in critical_lengths_up_to(50):
        pairs = ", ".join(f"({p.k},{p.l}) {p.kind}" for p in c.pairs)
        print(f"{c.index_IC:>4} {c.L0:>10.6f} {c.length_class:>5} {c.N0:>3}  {pairs}")

    # the first eigenvalue leaves zero linearly in L - 2 pi
    print("\n   delta     lambda_1   delta/(sqrt3 pi)")
    for d in (1e-1, 1e-2, 1e-3):
        lam = full_spectrum(2 * math.pi + d, 1).mode(1).lam
        print(f"{d:8.0e} {lam:12.6e} {d / (math.sqrt(3) * math.pi):12.6e}")


if __name__ == "__main__":
    main()
