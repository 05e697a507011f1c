"""Print the kink-band load path, Maxwell point and energy barriers."""

import math

import numpy as np

from layerfold.kinkband import (
    CRITICAL_ANGLE,
    KinkBandParams,
    energy_barrier,
    equilibrium_path,
    maxwell_displacement,
    minimum_load,
)


def main():
    p = KinkBandParams()
    Pm = minimum_load(p)
    print(f"minimum load {Pm:.10g} at alpha {math.degrees(CRITICAL_ANGLE):.4f} deg")
    for pt in equilibrium_path(p, np.radians([1, 5, 15, 35.26, 60, 80])):
        print(f"alpha {math.degrees(pt.alpha):7.3f} deg  P {pt.P:12.6g}  Delta {pt.Delta:12.6g}")
    mp = maxwell_displacement(p)
    print(f"Maxwell: Delta_M {mp.Delta_M:.12g}, alpha_M {math.degrees(mp.alpha_M):.6f} deg, "
          f"beta_M {math.degrees(mp.beta_M):.6f} deg")
    for ratio in (1.05, 2, 10, 1e3, 1e6):
        print(f"barrier at P = {ratio:g} P_min: {energy_barrier(ratio * Pm, p):.6g}")


if __name__ == "__main__":
    main()
