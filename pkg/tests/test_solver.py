from dataclasses import replace

import numpy as np
import pytest

import oracles
from layerfold.errors import InvariantViolation, SolverError
from layerfold.model import DiscreteField, ElasticaProblem, total_energy
from layerfold.solver import (
    SolverOptions,
    certify,
    check_convexity,
    contact_force,
    initial_gap,
    linearized_solve,
    solve,
    solve_multistart,
    validate_domain,
    void_interval,
)

L111 = 3 ** (1 / 3)


# --- degenerate flat obstacle ---------------------------------------------------

@pytest.fixture(scope="module")
def flat():
    return solve(ElasticaProblem.from_parameters(1.0, 2.0, 0.0, n_nodes=101))


def test_flat_obstacle_solution(flat):
    assert np.all(flat.w.values == 0.0)
    assert flat.void_interval.length == 0.0
    assert flat.energy.total == 0.0
    assert flat.converged


def test_flat_obstacle_contact_pressure_is_q(flat):
    cf = contact_force(flat)
    assert np.allclose(cf.multipliers, 2.0, rtol=1e-14)
    assert cf.balanced


def test_flat_obstacle_is_convex(flat):
    assert check_convexity(flat).convex


# --- linearized oracle -------------------------------------------------------------

def test_linearized_half_length(linear_111):
    iv = linear_111.void_interval
    assert iv.length / 2 == pytest.approx(L111, rel=0.01)
    assert iv.length == pytest.approx(2 * L111, rel=0.01)


def test_linearized_corner_gap(linear_111):
    assert linear_111.corner_gap == pytest.approx(0.375 * L111, rel=0.01)


def test_linearized_energy(linear_111):
    ref = oracles.linearized_numbers(1, 1, 1)
    assert linear_111.energy.total == pytest.approx(ref["bending"] + ref["pressure"], rel=0.01)


def test_linearized_field_matches_closed_form(linear_111):
    exact = linearized_solve(1, 1, 1).w(linear_111.x)
    err = np.max(np.abs(linear_111.w.values - exact))
    assert err <= 1e-3 * 0.375 * L111


def test_linearized_contact_reactions(linear_111):
    cf = contact_force(linear_111)
    h = linear_111.problem.h
    # concentrated reaction q L at each contact point, plus background q h per window node
    for r in cf.point_reactions:
        assert r == pytest.approx(L111, abs=3 * h)
    assert cf.balance_error <= 1e-6


def test_multipliers_vanish_inside_void(linear_111):
    iv = linear_111.void_interval
    inside = np.abs(linear_111.x) < iv.x_right - 2 * linear_111.problem.h
    assert np.all(linear_111.multipliers[inside] == 0.0)


# --- nonlinear -----------------------------------------------------------------------

def test_small_slope_close_to_linearized():
    s = solve(ElasticaProblem.from_parameters(1.0, 1.0, 0.1))
    lin = linearized_solve(1.0, 1.0, 0.1)
    assert s.void_interval.length == pytest.approx(lin.void_length, rel=0.03)


def test_kkt_invariants(nonlinear_default):
    s = nonlinear_default
    p = s.problem
    tol = p.obstacle.tol_feas
    assert np.all(s.w.values >= p.f - tol)
    assert np.all(s.multipliers >= 0)
    comp = np.max(np.abs(s.multipliers * s.gap)) / (p.q * p.obstacle.slope * p.half_width)
    assert comp <= 1e-8
    assert s.kkt.worst <= 1e-8
    iv = s.void_interval
    assert -p.half_width <= iv.x_left <= iv.x_right <= p.half_width


def test_energy_below_initial_guess(nonlinear_default):
    p = nonlinear_default.problem
    w0 = DiscreteField(p.f + initial_gap(p), p.h)
    assert nonlinear_default.energy.total <= total_energy(w0, p).total


def test_reported_energy_matches_field(nonlinear_default):
    p = nonlinear_default.problem
    e = total_energy(nonlinear_default.w, p)
    assert e.total == pytest.approx(nonlinear_default.energy.total, rel=1e-10)


def test_certificate(nonlinear_default):
    c = certify(nonlinear_default)
    assert c["single_interval"] and c["convex"] and c["kkt"] and c["symmetric"]


def test_force_balance_nonlinear(nonlinear_default):
    cf = contact_force(nonlinear_default)
    assert cf.balanced
    assert np.isfinite(cf.multipliers[nonlinear_default.problem.n_nodes // 2])


def test_multistart_agrees():
    p = ElasticaProblem.from_parameters(0.7, 2.0, 0.25, nodes_per_void=100)
    best, energies = solve_multistart(p)
    assert max(energies) - min(energies) <= 1e-8 * abs(min(energies))


def test_solve_is_deterministic():
    p = ElasticaProblem.from_parameters(2.0, 0.5, 0.2, nodes_per_void=100)
    a, b = solve(p), solve(p)
    assert np.array_equal(a.w.values, b.w.values)
    assert a.energy == b.energy


def test_void_length_nonincreasing_in_q():
    lengths = [solve(ElasticaProblem.from_parameters(1.0, q, 0.3, half_width=6.0, n_nodes=1201)).void_interval.length
               for q in np.geomspace(1, 100, 5)]
    assert all(b <= a for a, b in zip(lengths, lengths[1:]))


@pytest.mark.parametrize("mode, m", [("linearized", 1.0), ("nonlinear", 0.3)])
def test_grid_convergence_order(mode, m):
    # irrational offset keeps the contact point off the grid
    L = [solve(ElasticaProblem.from_parameters(1.0, 1.0, m, mode=mode, nodes_per_void=k * 1.037)).void_interval.length
         for k in (50, 100, 200)]
    order = np.log2(abs(L[1] - L[0]) / abs(L[2] - L[1]))
    assert order >= 1.5


def test_validate_domain_settles():
    p = ElasticaProblem.from_parameters(1.0, 1.0, 0.3, nodes_per_void=60, domain_factor=2.0)
    chosen, lengths = validate_domain(p)
    assert chosen.h == pytest.approx(p.h)
    assert len(lengths) >= 2
    assert abs(lengths[-1] - lengths[-2]) <= 1e-3 * lengths[-1]


# --- failure reporting ---------------------------------------------------------------

def test_iteration_limit_reports_best_iterate():
    p = ElasticaProblem.from_parameters(1.0, 1.0, 0.3, nodes_per_void=100)
    with pytest.raises(SolverError) as exc:
        solve(p, SolverOptions(max_iter=2))
    assert exc.value.best is not None
    assert not exc.value.best.converged


def test_disjoint_voids_are_reported(nonlinear_default):
    s = nonlinear_default
    gap = s.gap.copy()
    gap[s.problem.n_nodes // 2] = 0.0  # split the void at the corner
    broken = replace(s, gap=gap)
    with pytest.raises(InvariantViolation):
        void_interval(broken)
    assert certify(broken)["single_interval"] is False


def test_negative_multiplier_is_reported(nonlinear_default):
    lam = nonlinear_default.multipliers.copy()
    lam[0] = -1.0
    with pytest.raises(InvariantViolation):
        contact_force(replace(nonlinear_default, multipliers=lam))
