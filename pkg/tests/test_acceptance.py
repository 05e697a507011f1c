"""End-to-end acceptance checks, one test per criterion.

Each test records a one-line PASS/FAIL verdict that is printed in the
terminal summary (see ``conftest.py``).  Run directly with
``pytest tests/test_acceptance.py -v``.
"""

import math
import time

import numpy as np

import oracles
from conftest import smooth_field
from layerfold import cli
from layerfold.kinkband import (
    KinkBandParams,
    energy_barrier,
    equilibrium_load,
    maxwell_displacement,
    minimum_load,
)
from layerfold.model import DiscreteField, ElasticaProblem, ObstacleProfile, energy_gradient, total_energy
from layerfold.multilayer import (
    BALANCED_COEFFS,
    MultilayerProblem,
    multilayer_energy,
    optimal_packet,
    solve_multilayer,
    stacked_candidate,
)
from layerfold.scaling import scaling_sweep
from layerfold.solver import certify, solve

VERDICTS: dict = {}


def record(n, ok, detail):
    VERDICTS[n] = f"criterion {n}: {'PASS' if ok else 'FAIL'} - {detail}"
    assert ok, VERDICTS[n]


def test_criterion_1_scaling_law():
    t0 = time.perf_counter()
    records, fit = scaling_sweep(B=1.0, m=0.3, q_min=1.0, q_max=100.0, n_points=9, mode="nonlinear")
    dt = time.perf_counter() - t0
    ok = (fit is not None and all(r.converged for r in records) and abs(fit.exponent + 1 / 3) <= 0.03
          and fit.r2 >= 0.999 and dt <= 300)
    record(1, ok, f"exponent {fit.exponent:.6f} (target -1/3 +- 0.03), r2 {fit.r2:.10f}, "
                  f"{len(records)} runs, {dt:.1f} s")


def test_criterion_2_oracle_equivalence():
    t0 = time.perf_counter()
    worst_L = worst_g = 0.0
    for B in (0.5, 1, 2):
        for q in (0.5, 1, 2):
            for m in (0.5, 1, 2):
                ref = oracles.linearized_numbers(B, q, m)
                s = solve(ElasticaProblem.from_parameters(B, q, m, mode="linearized", n_nodes=2001))
                worst_L = max(worst_L, abs(s.void_interval.length / 2 / ref["L"] - 1))
                worst_g = max(worst_g, abs(s.corner_gap / ref["gap_at_corner"] - 1))
    dt = time.perf_counter() - t0
    ok = worst_L <= 0.01 and worst_g <= 0.01 and dt <= 60
    record(2, ok, f"27 cases, worst rel. error L {worst_L:.2e}, corner gap {worst_g:.2e}, {dt:.1f} s")


def test_criterion_3_theorem_properties():
    rng = np.random.default_rng(20240611)
    fails, worst_kkt, worst_curv = [], 0.0, math.inf
    for _ in range(100):
        B, q = np.exp(rng.uniform(math.log(0.1), math.log(10), 2))
        m = rng.uniform(0.05, 0.5)
        s = solve(ElasticaProblem.from_parameters(B, q, m))
        c = certify(s)
        worst_kkt = max(worst_kkt, c["kkt_worst"])
        worst_curv = min(worst_curv, c["min_curvature_rel"])
        if not (s.converged and c["single_interval"] and c["convex"] and c["kkt"] and c["symmetric"]):
            fails.append((B, q, m, c))
    record(3, not fails, f"{100 - len(fails)}/100 certified, worst KKT {worst_kkt:.2e}, "
                         f"min relative curvature {worst_curv:.2e}")


def test_criterion_4_gradient():
    rng = np.random.default_rng(4)
    worst = 0.0
    for mode in ("nonlinear", "linearized"):
        for _ in range(20):
            p = ElasticaProblem(rng.uniform(0.5, 2), rng.uniform(0.5, 2),
                                ObstacleProfile(rng.uniform(0.05, 1.0), 2.0), 41, mode)
            v = smooth_field(rng, p.x, p.f, rng.uniform(0.05, 1.0))
            g = energy_gradient(DiscreteField(v, p.h), p).values

            def E(z):
                return total_energy(DiscreteField(z, p.h), p).total

            worst = max(worst, oracles.best_fd_error(E, g, v, [1e-4, 1e-5, 1e-6]))
    record(4, worst <= 1e-6, f"40 fields, worst relative error {worst:.2e} (limit 1e-6)")


def test_criterion_5_kinkband():
    P = KinkBandParams()
    Pm = minimum_load(P)
    notes = []
    high = equilibrium_load(1e-4, P) > 1e3 * Pm
    notes.append(f"P(1e-4)/P_min {equilibrium_load(1e-4, P) / Pm:.3g}")
    loads = np.geomspace(1.05 * Pm, 1e7 * Pm, 20)
    bar = [energy_barrier(x, P) for x in loads]
    shrinking = all(b < a for a, b in zip(bar, bar[1:])) and bar[-1] < 1e-6 * bar[0]
    notes.append(f"barrier ratio {bar[-1] / bar[0]:.2e}")
    mp = maxwell_displacement(P)
    D_ref, _ = oracles.brute_force_maxwell(P.b, P.H, P.k, P.q, P.mu)
    brute = abs(mp.Delta_M / D_ref - 1) <= 1e-6
    notes.append(f"Maxwell vs brute force {abs(mp.Delta_M / D_ref - 1):.1e}")
    mono = True
    for key, vals in (("mu", (0.2, 0.57, 1.0)), ("q", (0.5, 1.0, 2.0))):
        D = [maxwell_displacement(KinkBandParams(**{key: v})).Delta_M for v in vals]
        mono &= all(b >= a for a, b in zip(D, D[1:]))
    inv = max(abs(maxwell_displacement(P.scaled(q=c, k=c)).alpha_M - mp.alpha_M) for c in (0.1, 10.0))
    invariant = inv <= 1e-10
    notes.append(f"alpha_M drift {inv:.1e}, beta_M {math.degrees(mp.beta_M):.3f} deg")
    record(5, high and shrinking and brute and mono and invariant, ", ".join(notes))


def test_criterion_6_multilayer():
    p1 = MultilayerProblem.from_parameters(1, 1.0, 0.02, 1.0, 0.3, n_nodes=401)
    e1 = solve_multilayer(p1).energy
    e_ref = solve(p1.single_layer()).energy.total
    regress = abs(e1 - e_ref) <= 1e-10 * abs(e_ref)

    t0 = time.perf_counter()
    p6 = MultilayerProblem.from_parameters(6, 1.0, 0.02, 1.0, 0.3, n_nodes=401)
    s6 = solve_multilayer(p6)
    dt = time.perf_counter() - t0
    cand = multilayer_energy(stacked_candidate(p6, solve(p6.single_layer()).w.values), p6)
    k6 = s6.converged and dt <= 600 and s6.energy <= cand

    opt = optimal_packet(BALANCED_COEFFS, 1, 1, 1, 1000)
    n_ref, _ = oracles.brute_packet(BALANCED_COEFFS.c_bend, BALANCED_COEFFS.c_void, 1, 1, 1, 1000)
    packet = opt.interior and opt.n_star == n_ref and 1 < opt.n_star < 1000
    record(6, regress and k6 and packet,
           f"K=1 energy diff {abs(e1 - e_ref):.1e}; K=6 {dt:.1f} s, energy {s6.energy:.6f} <= "
           f"candidate {cand:.6f}; n* = {opt.n_star} (scan {n_ref})")


RUNS = {
    "solve-single": ["--B", "1", "--q", "1", "--m", "0.3"],
    "sweep-scaling": [],
    "kinkband-path": [],
    "kinkband-maxwell": [],
    "multilayer-solve": [],
    "packet-optimum": [],
}


def test_criterion_7_determinism(tmp_path):
    assert set(RUNS) == set(cli.SCHEMAS)
    differing = []
    n_files = 0
    for sub, flags in RUNS.items():
        outs = []
        for rep in ("a", "b"):
            out = tmp_path / sub / rep
            assert cli.main([sub, *flags, "--out", str(out)]) == 0
            outs.append(out)
        files = sorted(f.name for f in outs[0].glob("*.csv"))
        assert files == sorted(f.name for f in outs[1].glob("*.csv"))
        for name in files:
            n_files += 1
            if (outs[0] / name).read_bytes() != (outs[1] / name).read_bytes():
                differing.append(f"{sub}/{name}")
    record(7, not differing, f"{len(RUNS)} subcommands, {n_files} CSVs compared, "
                             f"{len(differing)} differ {differing or ''}".rstrip())
