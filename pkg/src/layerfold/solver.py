"""Constrained minimization of the single-layer energy, void extraction,
contact forces, and the closed-form linearized solution used as an oracle.

The solver works in gap coordinates ``v = w - f >= 0``.  The constraint is
then a plain nonnegativity box and rounding in the finite differences scales
with the gap rather than with the obstacle height.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import InvariantViolation, NumericalError, SolverError
from .model import (
    DiscreteField,
    ElasticaProblem,
    EnergyBreakdown,
    bending_from_differences,
    bending_gradient_from_differences,
    bending_hessian_from_differences,
    interior_weights,
    obstacle_differences,
    predicted_half_length,
    trapezoid_weights,
)
from .optim import interior_point, projected_newton


@dataclass(frozen=True)
class SolverOptions:
    """Tolerances are dimensionless.

    Gradient-type residuals are measured against the force scale ``q X``;
    complementarity against the energy scale ``q m X^2``.
    """

    tol_opt: float = 1e-9
    tol_kkt: float = 1e-8
    tol_convex: float = 1e-8
    max_iter: int = 1000
    gap_threshold: float | None = None
    bump_width: float = 1.0
    bump_height: float = 0.4


@dataclass(frozen=True)
class VoidInterval:
    x_left: float
    x_right: float

    @property
    def length(self) -> float:
        return self.x_right - self.x_left


@dataclass(frozen=True)
class KKTReport:
    feasibility: float
    dual: float
    stationarity: float
    complementarity: float

    @property
    def worst(self) -> float:
        return max(self.feasibility, self.dual, self.stationarity, self.complementarity)


@dataclass(frozen=True)
class ElasticaSolution:
    problem: ElasticaProblem
    w: DiscreteField
    gap: np.ndarray
    multipliers: np.ndarray
    void_interval: VoidInterval
    energy: EnergyBreakdown
    iterations: int
    converged: bool
    kkt: KKTReport
    gradient: np.ndarray = field(repr=False)

    @property
    def x(self):
        return self.problem.x

    @property
    def corner_gap(self) -> float:
        return float(self.gap[(len(self.gap) - 1) // 2])


class _GapModel:
    """Energy, gradient and Hessian of the single-layer problem in gap form."""

    def __init__(self, problem: ElasticaProblem):
        n, h = problem.n_nodes, problem.h
        self.problem = problem
        self.h = h
        self.B, self.q, self.mode = problem.B, problem.q, problem.mode
        self.df1, self.df2 = obstacle_differences(n, h, problem.obstacle.slope)
        self.wi = interior_weights(n, h)
        self.wp = trapezoid_weights(n, h)
        self.free = np.ones(n, dtype=bool)
        self.free[[0, 1, -2, -1]] = False

    def differences(self, v):
        h = self.h
        d1 = self.df1 + (v[2:] - v[:-2]) / (2 * h)
        d2 = self.df2 + (v[2:] - 2 * v[1:-1] + v[:-2]) / h**2
        return d1, d2

    def parts(self, v):
        d1, d2 = self.differences(v)
        eb = bending_from_differences(d1, d2, self.wi, self.B, self.mode)
        ep = self.q * float(np.dot(self.wp, v))
        return eb, ep

    def energy(self, v):
        eb, ep = self.parts(v)
        return eb + ep

    def gradient(self, v):
        d1, d2 = self.differences(v)
        g = bending_gradient_from_differences(d1, d2, self.wi, self.B, self.h, self.mode)
        return g + self.q * self.wp

    def hessian(self, v, convexify=False):
        d1, d2 = self.differences(v)
        d0, e1, e2 = bending_hessian_from_differences(
            d1, d2, self.wi, self.B, self.h, self.mode, convexify)
        return sp.diags([e2, e1, d0, e1, e2], [-2, -1, 0, 1, 2], format="csr")


def initial_gap(problem: ElasticaProblem, width=1.0, height=0.4) -> np.ndarray:
    """Gaussian bump over the corner sized by the linearized void half-length."""
    m = problem.obstacle.slope
    L0 = problem.length_scale
    v = height * m * L0 * np.exp(-(problem.x / (width * L0)) ** 2)
    v[[0, 1, -2, -1]] = 0.0
    return v


def force_scale(problem) -> float:
    return problem.q * problem.half_width


def energy_scale(problem) -> float:
    return problem.q * max(problem.obstacle.slope, 1e-300) * problem.half_width**2


def kkt_report(problem, gap, grad, contact) -> KKTReport:
    F = force_scale(problem)
    free_void = ~contact
    free_void[[0, 1, -2, -1]] = False
    dual = max(0.0, -np.min(grad[contact], initial=0.0)) / F
    stat = np.max(np.abs(grad[free_void]), initial=0.0) / F
    feas = max(0.0, -np.min(gap)) / max(problem.obstacle.slope * problem.half_width, 1e-300)
    comp = np.max(np.abs(grad * gap), initial=0.0) / energy_scale(problem)
    return KKTReport(float(feas), float(dual), float(stat), float(comp))


def _package(problem, model, v, iterations, converged, opts, strict_void=True):
    h = problem.h
    g = model.gradient(v)
    contact = v <= 0.0
    lam = np.where(contact, g / model.wp, 0.0)
    eb, ep = model.parts(v)
    w = DiscreteField(problem.f + v, h)
    thr = opts.gap_threshold if opts.gap_threshold is not None else problem.obstacle.tol_feas
    interval = _interval_from_gap(problem.x, v, thr, strict=strict_void,
                                  reaction=(lam, model.wp, problem.q))
    return ElasticaSolution(
        problem=problem, w=w, gap=v, multipliers=lam, void_interval=interval,
        energy=EnergyBreakdown(eb, ep, eb + ep), iterations=iterations,
        converged=converged, kkt=kkt_report(problem, v, g, contact), gradient=g)


def solve(problem: ElasticaProblem, opts: SolverOptions | None = None,
          initial: np.ndarray | None = None) -> ElasticaSolution:
    """Minimize the discrete energy subject to ``w >= f``.

    ``initial`` is an optional starting gap ``w - f``.  Raises
    :class:`SolverError` (carrying the best iterate) if the projected
    gradient does not reach ``opts.tol_opt``.
    """
    opts = opts or SolverOptions()
    model = _GapModel(problem)
    n = problem.n_nodes
    m = problem.obstacle.slope
    if m == 0:
        v = np.zeros(n)
        return _package(problem, model, v, 0, True, opts)

    v0 = initial_gap(problem, opts.bump_width, opts.bump_height) if initial is None else np.array(initial, float)
    v0[~model.free] = 0.0
    F = force_scale(problem)
    L0 = problem.length_scale
    try:
        v0[model.free] = np.maximum(v0[model.free], 1e-3 * m * L0)
        mu0 = 0.1 * problem.q * problem.h * m * L0
        ip = interior_point(
            model.energy, model.gradient, model.hessian, v0, model.free,
            bandwidth=2, mu0=mu0, mu_min=1e-8 * mu0, x_scale=m * L0, max_iter=opts.max_iter)
        res = projected_newton(
            model.energy, model.gradient, model.hessian, ip.x, model.free,
            bandwidth=2, tol=opts.tol_opt * F, accept_tol=opts.tol_kkt * F,
            max_iter=opts.max_iter, eps_active=1e-3 * m * problem.length_scale)
    except FloatingPointError as exc:
        raise NumericalError(str(exc)) from exc
    if not res.converged:
        best = _package(problem, model, res.x, res.iterations, False, opts, strict_void=False)
        raise SolverError(
            f"no convergence after {res.iterations} iterations "
            f"(residual {res.residual / F:.3e} relative): {res.message}", best)
    return _package(problem, model, res.x, ip.iterations + res.iterations, True, opts)


def solve_multistart(problem: ElasticaProblem, opts: SolverOptions | None = None,
                     starts=((1.0, 0.4), (0.5, 0.2), (2.0, 0.8)), rtol=1e-8):
    """Solve from several initial bumps and require the energies to agree.

    Returns the lowest-energy solution and the list of energies.
    """
    opts = opts or SolverOptions()
    sols = []
    for width, height in starts:
        o = SolverOptions(**{**opts.__dict__, "bump_width": width, "bump_height": height})
        sols.append(solve(problem, o))
    energies = [s.energy.total for s in sols]
    spread = max(energies) - min(energies)
    if spread > rtol * max(abs(min(energies)), 1e-300):
        raise InvariantViolation(
            f"restarts reached different minima (energies {energies})", details=energies)
    return min(sols, key=lambda s: s.energy.total), energies


# --- void set -----------------------------------------------------------------

def gap_runs(gap: np.ndarray, threshold: float):
    """Maximal index runs ``(first, last)`` where ``gap > threshold``."""
    above = np.concatenate(([False], gap > threshold, [False]))
    edges = np.flatnonzero(np.diff(above.astype(np.int8)))
    return [(int(a), int(b) - 1) for a, b in zip(edges[::2], edges[1::2])]


def _crossing(x0, x1, g0, g1, thr):
    return x0 + (x1 - x0) * (thr - g0) / (g1 - g0)


def _touchdown(x, reaction, nodes):
    """Centroid of the excess contact reaction over ``nodes``.

    A discrete contact point carries a concentrated reaction that the
    minimizer splits between the two nearest nodes in proportion to where
    the continuous touchdown falls; its centroid locates the touchdown to
    sub-grid accuracy.  Returns None when there is no excess reaction.
    """
    lam, wp, background = reaction
    excess = np.clip(lam[nodes] - background, 0.0, None) * wp[nodes]
    total = excess.sum()
    if not total > 0:
        return None
    return float(np.dot(excess, x[nodes]) / total)


def run_endpoints(x, gap, threshold, reaction=None):
    """Sub-grid ``(x_left, x_right)`` of every run where ``gap > threshold``.

    Endpoints come from the contact reaction centroid when ``reaction =
    (multipliers, weights, background)`` is given, otherwise from linear
    interpolation of the gap to ``threshold``.  Reaction windows hold at
    most three contact nodes and never reach past the midpoint to the
    neighbouring run or into the two clamped nodes at either end.
    """
    runs = gap_runs(gap, threshold)
    n = len(gap)
    out = []
    for r, (a, b) in enumerate(runs):
        xl = x[0] if a == 0 else _crossing(x[a - 1], x[a], gap[a - 1], gap[a], threshold)
        xr = x[-1] if b == n - 1 else _crossing(x[b], x[b + 1], gap[b], gap[b + 1], threshold)
        if reaction is not None:
            lo = 2 if r == 0 else (runs[r - 1][1] + a + 1) // 2 + 1
            hi = n - 2 if r == len(runs) - 1 else (b + runs[r + 1][0]) // 2 + 1
            left = np.arange(max(a - 3, lo), a)
            right = np.arange(b + 1, min(b + 4, hi))
            tl = _touchdown(x, reaction, left) if left.size else None
            tr = _touchdown(x, reaction, right) if right.size else None
            xl = xl if tl is None else tl
            xr = xr if tr is None else tr
        out.append((float(xl), float(xr)))
    return out


def _interval_from_gap(x, gap, threshold, strict=True, reaction=None) -> VoidInterval:
    ends = run_endpoints(x, gap, threshold, reaction)
    if not ends:
        return VoidInterval(0.0, 0.0)
    if len(ends) > 1 and strict:
        raise InvariantViolation(
            f"void set has {len(ends)} disjoint components", details=gap_runs(gap, threshold))
    return VoidInterval(ends[0][0], ends[-1][1])


def void_interval(solution: ElasticaSolution, gap_threshold: float | None = None) -> VoidInterval:
    """The void ``{w > f}`` as an interval with sub-grid endpoints.

    More than one component raises :class:`InvariantViolation`.
    """
    p = solution.problem
    thr = p.obstacle.tol_feas if gap_threshold is None else gap_threshold
    reaction = (solution.multipliers, trapezoid_weights(p.n_nodes, p.h), p.q)
    return _interval_from_gap(solution.x, solution.gap, thr, strict=True, reaction=reaction)


# --- contact forces -----------------------------------------------------------

@dataclass(frozen=True)
class ContactForces:
    multipliers: np.ndarray
    total_reaction: float
    applied_load: float
    balance_error: float
    point_reactions: tuple

    @property
    def balanced(self) -> bool:
        return self.balance_error <= 1e-6


def contact_force(solution: ElasticaSolution, tol: float = 1e-8) -> ContactForces:
    """Contact pressure per node and the force balance against the applied load.

    Reactions at the two contact points appear as O(1/h) spikes; they are
    reported integrated over the 3-node window around each contact node.
    """
    p = solution.problem
    lam = solution.multipliers
    wp = trapezoid_weights(p.n_nodes, p.h)
    if lam.min() < -tol * p.q:
        raise InvariantViolation(f"negative contact force {lam.min():.3e}")
    total = float(np.dot(lam, wp))
    applied = float(p.q * wp.sum())
    err = abs(total - applied) / applied

    runs = gap_runs(solution.gap, p.obstacle.tol_feas)
    points = ()
    if runs:
        a, b = runs[0][0], runs[-1][1]
        windows = []
        for c in (a - 1, b + 1):
            lo, hi = max(c - 1, 0), min(c + 2, p.n_nodes)
            windows.append(float(np.dot(lam[lo:hi], wp[lo:hi])))
        points = tuple(windows)
    return ContactForces(lam, total, applied, err, points)


# --- convexity and certification ---------------------------------------------

@dataclass(frozen=True)
class ConvexityReport:
    min_second_difference: float
    relative: float
    worst_node: int
    convex: bool


def check_convexity(solution: ElasticaSolution, tol_convex: float = 1e-8) -> ConvexityReport:
    """Minimum second difference of ``w`` relative to the slope change ``m h``."""
    p = solution.problem
    h, m = p.h, p.obstacle.slope
    if m == 0:
        d2 = np.diff(solution.w.values, 2)
    else:
        _, df2 = obstacle_differences(p.n_nodes, h, m)
        v = solution.gap
        d2 = df2 * h**2 + (v[2:] - 2 * v[1:-1] + v[:-2])
    i = int(np.argmin(d2))
    scale = m * h if m > 0 else 1.0
    rel = float(d2[i] / scale)
    return ConvexityReport(float(d2[i]), rel, i + 1, rel >= -tol_convex)


def certify(solution: ElasticaSolution, opts: SolverOptions | None = None) -> dict:
    """Check the structural properties the minimizer must have.

    Returns a dict of named booleans plus the measured quantities.
    """
    opts = opts or SolverOptions()
    p = solution.problem
    runs = gap_runs(solution.gap, p.obstacle.tol_feas)
    conv = check_convexity(solution, opts.tol_convex)
    iv = solution.void_interval
    sym = abs(iv.x_left + iv.x_right) <= p.h
    return {
        "single_interval": len(runs) <= 1,
        "convex": conv.convex,
        "kkt": solution.kkt.worst <= opts.tol_kkt,
        "symmetric": sym,
        "runs": len(runs),
        "min_curvature_rel": conv.relative,
        "kkt_worst": solution.kkt.worst,
        "asymmetry": abs(iv.x_left + iv.x_right),
    }


def validate_domain(problem: ElasticaProblem, opts: SolverOptions | None = None,
                    rel_tol: float = 1e-3, max_doublings: int = 4):
    """Double the half-width at fixed spacing until the void length settles.

    Returns the smallest checked problem whose void length agrees with its
    doubled-domain version to ``rel_tol``, plus the list of lengths seen.
    """
    h = problem.h
    current = problem
    prev = solve(current, opts).void_interval.length
    lengths = [prev]
    for _ in range(max_doublings):
        half = 2 * ((current.n_nodes - 1) // 2)
        bigger = ElasticaProblem(
            problem.B, problem.q,
            type(problem.obstacle)(problem.obstacle.slope, half * h),
            2 * half + 1, problem.mode)
        length = solve(bigger, opts).void_interval.length
        lengths.append(length)
        if abs(length - prev) <= rel_tol * max(abs(length), 1e-300):
            return current, lengths
        current, prev = bigger, length
    raise SolverError(f"void length did not settle under domain doubling: {lengths}")


# --- closed-form linearized solution ------------------------------------------

@dataclass(frozen=True)
class LinearizedSolution:
    """Symmetric solution of ``B w'''' = -q`` on the void ``(-L, L)`` with
    ``w = m|x|``, ``w' = ±m`` and ``w'' = 0`` at the contact points::

        w(x) = 3mL/8 + q L^2 x^2 / (4B) - q x^4 / (24B),   L^3 = 3 m B / q.
    """

    B: float
    q: float
    m: float

    @property
    def L(self) -> float:
        return predicted_half_length(self.B, self.q, self.m)

    @property
    def gap_at_corner(self) -> float:
        return 3.0 / 8.0 * self.m * self.L

    @property
    def void_length(self) -> float:
        return 2 * self.L

    def w(self, x):
        x = np.asarray(x, dtype=float)
        L, B, q = self.L, self.B, self.q
        inner = 3 * self.m * L / 8 + q * L**2 * x**2 / (4 * B) - q * x**4 / (24 * B)
        return np.where(np.abs(x) < L, inner, self.m * np.abs(x))

    def curvature(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(np.abs(x) < self.L, self.q * (self.L**2 - x**2) / (2 * self.B), 0.0)

    @property
    def energy(self) -> EnergyBreakdown:
        """Bending ``2qmL^2/5`` and pressure ``qmL^2/5`` relative to ``w = f``."""
        base = self.q * self.m * self.L**2
        return EnergyBreakdown(0.4 * base, 0.2 * base, 0.6 * base)

    @property
    def contact_reaction(self) -> float:
        """Point force at each contact point, ``B`` times the jump of ``w'''``."""
        return self.q * self.L


def linearized_solve(B: float, q: float, m: float) -> LinearizedSolution:
    for name, val in (("B", B), ("q", q), ("m", m)):
        if not (isinstance(val, (int, float)) and math.isfinite(val) and val > 0):
            raise ValueError(f"{name} must be positive, got {val}")
    return LinearizedSolution(float(B), float(q), float(m))
