"""Solve a K-layer stack, print its void census and the optimal packet size.

Usage: python scripts/multilayer_packets.py [K]
"""

import sys

from layerfold.multilayer import (
    BALANCED_COEFFS,
    MultilayerProblem,
    continuous_packet_optimum,
    optimal_packet,
    solve_multilayer,
    void_census,
)


def main(argv):
    K = int(argv[0]) if argv else 6
    s = solve_multilayer(MultilayerProblem.from_parameters(K, 1.0, 0.02, 1.0, 0.3, n_nodes=401))
    c = void_census(s)
    print(f"K={K} energy {s.energy:.10g} converged {s.converged} pattern {c.pattern}")
    for r in c.interfaces:
        print(f"  interface {r.interface}: length {r.void_length:.6g}, area {r.void_area:.6g}, runs {r.runs}")
    opt = optimal_packet(BALANCED_COEFFS, 1.0, 1.0, 1.0, 1000)
    nc = continuous_packet_optimum(BALANCED_COEFFS, 1.0, 1.0, 1.0)
    print(f"packet optimum n* = {opt.n_star} (continuous {nc:.4f}), energy {opt.energy:.8g}")


if __name__ == "__main__":
    main(sys.argv[1:])
