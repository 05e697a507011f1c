"""Sweep the pressure q and fit the void-length exponent.

Usage: python scripts/run_scaling_sweep.py [q_min q_max n_points]
"""

import sys

from layerfold.scaling import scaling_sweep


def main(argv):
    q_min, q_max, n = (float(argv[0]), float(argv[1]), int(argv[2])) if argv else (1.0, 100.0, 9)
    records, fit = scaling_sweep(B=1.0, m=0.3, q_min=q_min, q_max=q_max, n_points=n)
    print(f"{'q':>10} {'void_length':>14} {'corner_gap':>14} {'energy':>14}")
    for r in records:
        print(f"{r.q:10.4g} {r.void_length:14.8g} {r.corner_gap:14.8g} {r.total_energy:14.8g}")
    print(f"exponent {fit.exponent:.6f} +- {fit.stderr:.2e}, r2 {fit.r2:.10f}")


if __name__ == "__main__":
    main(sys.argv[1:])
