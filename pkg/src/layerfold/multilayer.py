"""Several layers pressed into the V obstacle, and the packet-size estimate.

Layer ``j`` (``j = 1..K``, bottom to top) has displacement ``w_j``.  The
bottom layer rests on the obstacle; each further layer rests on the one
below with vertical spacing ``t sqrt(1 + s^2)``, ``s`` the slope of the
lower layer, which approximates constant normal thickness.  The slopes are
frozen during each inner minimization and refreshed in an outer loop, so
every inner problem is a box problem in the interface gaps

    u_1 = w_1 - f,   u_j = w_j - w_{j-1} - t sqrt(1 + s_{j-1}^2)   (u >= 0).

Only the top layer carries the overburden pressure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import NumericalError, SolverError
from .model import (
    MODES,
    DiscreteField,
    ElasticaProblem,
    ObstacleProfile,
    bending_energy,
    bending_from_differences,
    bending_gradient_from_differences,
    bending_hessian_from_differences,
    interior_weights,
    obstacle_differences,
    predicted_half_length,
    trapezoid_weights,
)
from .optim import interior_point, projected_newton
from .solver import KKTReport, SolverOptions, run_endpoints


@dataclass(frozen=True)
class MultilayerProblem:
    K: int
    B: float
    t: float
    q: float
    obstacle: ObstacleProfile
    n_nodes: int
    mode: str = "nonlinear"

    def __post_init__(self):
        problems = []
        if int(self.K) != self.K or self.K < 1:
            problems.append(f"K must be a positive integer, got {self.K}")
        for name in ("B", "t", "q"):
            if not getattr(self, name) > 0:
                problems.append(f"{name} must be > 0, got {getattr(self, name)}")
        n = self.n_nodes
        if int(n) != n or n < 5 or n % 2 == 0:
            problems.append(f"n_nodes must be an odd integer >= 5, got {n}")
        if self.mode not in MODES:
            problems.append(f"mode must be one of {MODES}, got {self.mode!r}")
        m, X = self.obstacle.slope, self.obstacle.half_width
        if m > 0 and not (self.K - 1) * self.t < m * X:
            problems.append(f"stack height (K-1) t = {(self.K - 1) * self.t} does not fit "
                            f"under m X = {m * X}")
        if problems:
            raise ValueError("; ".join(problems))
        object.__setattr__(self, "K", int(self.K))
        object.__setattr__(self, "n_nodes", int(n))

    @classmethod
    def from_parameters(cls, K, B, t, q, m, *, mode="nonlinear", n_nodes=401,
                        domain_factor=3.0):
        """Domain sized from the void of a K-layer collective packet."""
        L0 = predicted_half_length(K * B, q, m) if m > 0 else 1.0
        return cls(K, B, t, q, ObstacleProfile(m, domain_factor * L0), n_nodes, mode)

    @property
    def h(self) -> float:
        return 2 * self.obstacle.half_width / (self.n_nodes - 1)

    @property
    def x(self) -> np.ndarray:
        half = (self.n_nodes - 1) // 2
        return np.arange(-half, half + 1) * self.h

    @property
    def f(self) -> np.ndarray:
        return self.obstacle(self.x)

    @property
    def half_width(self) -> float:
        return self.obstacle.half_width

    @property
    def top_offset(self) -> float:
        """Height of the fully stacked top layer above a straight flank."""
        return (self.K - 1) * self.t * math.sqrt(1 + self.obstacle.slope**2)

    def single_layer(self) -> ElasticaProblem:
        return ElasticaProblem(self.B, self.q, self.obstacle, self.n_nodes, self.mode)


@dataclass(frozen=True)
class MultilayerSolution:
    problem: MultilayerProblem
    fields: tuple
    gaps: np.ndarray
    spacing: np.ndarray
    void_lengths: tuple
    energy: float
    iterations: int
    outer_iterations: int
    converged: bool
    kkt: KKTReport
    gradient: np.ndarray = field(repr=False)

    @property
    def x(self):
        return self.problem.x


class _StackModel:
    """Energy of the K-layer stack in gap coordinates, spacing frozen.

    Unknowns are stored node-major: ``u[i * K + j]`` is the gap below layer
    ``j`` at node ``i``, so the Hessian is banded with half-bandwidth
    ``3K - 1``.
    """

    def __init__(self, problem: MultilayerProblem, spacing: np.ndarray):
        n, K, h = problem.n_nodes, problem.K, problem.h
        self.n, self.K, self.h = n, K, h
        self.B, self.q, self.mode = problem.B, problem.q, problem.mode
        self.df1, self.df2 = obstacle_differences(n, h, problem.obstacle.slope)
        self.wi = interior_weights(n, h)
        self.wp = trapezoid_weights(n, h)
        self.offsets = np.zeros((n, K))
        if K > 1:
            self.offsets[:, 1:] = np.cumsum(spacing, axis=1)
        self.top_offset = problem.top_offset
        free = np.ones((n, K), dtype=bool)
        free[[0, 1, -2, -1], :] = False
        self.free = free.ravel()
        self.bandwidth = 3 * K - 1

    def heights(self, u):
        """Layer heights above the obstacle, shape ``(n, K)``."""
        S = np.cumsum(u.reshape(self.n, self.K), axis=1)
        return S + self.offsets if self.K > 1 else S

    def _diffs(self, col):
        h = self.h
        d1 = self.df1 + (col[2:] - col[:-2]) / (2 * h)
        d2 = self.df2 + (col[2:] - 2 * col[1:-1] + col[:-2]) / h**2
        return d1, d2

    def parts(self, u):
        Y = self.heights(u)
        eb = 0.0
        for j in range(self.K):
            d1, d2 = self._diffs(Y[:, j])
            eb += bending_from_differences(d1, d2, self.wi, self.B, self.mode)
        ep = self.q * float(np.dot(self.wp, Y[:, -1] - self.top_offset))
        return eb, ep

    def energy(self, u):
        eb, ep = self.parts(u)
        return eb + ep

    def layer_gradients(self, u):
        Y = self.heights(u)
        G = np.empty((self.n, self.K))
        for j in range(self.K):
            d1, d2 = self._diffs(Y[:, j])
            G[:, j] = bending_gradient_from_differences(d1, d2, self.wi, self.B, self.h, self.mode)
        G[:, -1] = G[:, -1] + self.q * self.wp
        return G

    def gradient(self, u):
        G = self.layer_gradients(u)
        if self.K > 1:
            G = np.cumsum(G[:, ::-1], axis=1)[:, ::-1]
        return G.ravel()

    def hessian(self, u, convexify=False):
        Y = self.heights(u)
        K, n = self.K, self.n
        diags = [np.zeros((K, n - k)) for k in range(3)]
        for j in range(K):
            d1, d2 = self._diffs(Y[:, j])
            for k, arr in enumerate(bending_hessian_from_differences(
                    d1, d2, self.wi, self.B, self.h, self.mode, convexify)):
                diags[k][j] = arr
        if K > 1:
            diags = [np.cumsum(D[::-1], axis=0)[::-1] for D in diags]
        rows, cols, vals = [], [], []
        ll, lp = np.meshgrid(np.arange(K), np.arange(K), indexing="ij")
        ll, lp = ll.ravel(), lp.ravel()
        blk = np.maximum(ll, lp)
        for k in range(3):
            i = np.arange(n - k)
            r = (i[None, :] * K + ll[:, None]).ravel()
            c = ((i[None, :] + k) * K + lp[:, None]).ravel()
            v = diags[k][blk].ravel()
            rows.append(r)
            cols.append(c)
            vals.append(v)
            if k > 0:
                rows.append(c)
                cols.append(r)
                vals.append(v)
        N = n * K
        return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                             shape=(N, N))


def _slopes(problem: MultilayerProblem, heights_col):
    m = problem.obstacle.slope
    return m * np.sign(problem.x) + np.gradient(heights_col, problem.h)


def layer_spacing(problem: MultilayerProblem, u: np.ndarray) -> np.ndarray:
    """Vertical spacings ``t sqrt(1 + s^2)`` built bottom-up from the gaps.

    Returns shape ``(n, K-1)``; column ``j-1`` separates layers ``j`` and ``j+1``.
    """
    n, K, t = problem.n_nodes, problem.K, problem.t
    U = u.reshape(n, K)
    spacing = np.zeros((n, max(K - 1, 0)))
    height = U[:, 0].copy()
    for j in range(1, K):
        spacing[:, j - 1] = t * np.sqrt(1 + _slopes(problem, height) ** 2)
        height = height + spacing[:, j - 1] + U[:, j]
    return spacing


def _kkt(problem, model, u, g):
    F = problem.q * problem.half_width
    contact = model.free & (u <= 0)
    void = model.free & (u > 0)
    E_s = problem.q * max(problem.obstacle.slope, 1e-300) * problem.half_width**2
    return KKTReport(
        feasibility=float(max(0.0, -np.min(u)) / max(problem.obstacle.slope * problem.half_width, 1e-300)),
        dual=float(max(0.0, -np.min(g[contact], initial=0.0)) / F),
        stationarity=float(np.max(np.abs(g[void]), initial=0.0) / F),
        complementarity=float(np.max(np.abs(g * u), initial=0.0) / E_s),
    )


def _package(problem, model, u, spacing, iters, outer, converged):
    n, K = problem.n_nodes, problem.K
    Y = model.heights(u)
    f = problem.f
    fields = tuple(DiscreteField(f + Y[:, j], problem.h) for j in range(K))
    gaps = u.reshape(n, K).copy()
    thr = census_threshold(problem)
    g = model.gradient(u)
    lam = _interface_multipliers(gaps, g.reshape(n, K), model.wp)
    lengths = tuple(_run_lengths(problem.x, gaps[:, j], thr, (lam[:, j], model.wp, problem.q))[0]
                    for j in range(K))
    return MultilayerSolution(problem, fields, gaps, spacing, lengths, model.energy(u), iters,
                              outer, converged, _kkt(problem, model, u, g), g)


def initial_gaps(problem: MultilayerProblem, width=1.0, height=0.4) -> np.ndarray:
    """Bump under the bottom layer sized like a collective packet of K layers."""
    m = problem.obstacle.slope
    L0 = predicted_half_length(problem.K * problem.B, problem.q, m)
    U = np.zeros((problem.n_nodes, problem.K))
    U[:, 0] = height * m * L0 * np.exp(-(problem.x / (width * L0)) ** 2)
    U[[0, 1, -2, -1], :] = 0.0
    return U.ravel()


def solve_multilayer(problem: MultilayerProblem, opts: SolverOptions | None = None,
                     max_outer: int = 50, outer_tol: float = 1e-8) -> MultilayerSolution:
    """Minimize the stack energy under ordered non-penetration.

    Outer loop: freeze the spacings, minimize over the gaps, recompute the
    spacings from the new lower-layer slopes; stop when the spacings change
    by less than ``outer_tol`` relative.
    """
    opts = opts or SolverOptions()
    n, K = problem.n_nodes, problem.K
    m = problem.obstacle.slope
    if m == 0:
        u = np.zeros(n * K)
        spacing = np.full((n, K - 1), problem.t)
        model = _StackModel(problem, spacing)
        return _package(problem, model, u, spacing, 0, 0, True)

    F = problem.q * problem.half_width
    L0 = predicted_half_length(K * problem.B, problem.q, m)
    u = initial_gaps(problem, opts.bump_width, opts.bump_height)
    spacing = layer_spacing(problem, u)
    total_iters = 0
    for outer in range(1, max_outer + 1):
        model = _StackModel(problem, spacing)
        try:
            if outer == 1:
                u0 = u.copy()
                u0[model.free] = np.maximum(u0[model.free], 1e-3 * m * L0)
                mu0 = 0.1 * problem.q * problem.h * m * L0
                ip = interior_point(model.energy, model.gradient, model.hessian, u0, model.free,
                                    bandwidth=model.bandwidth, mu0=mu0, mu_min=1e-8 * mu0,
                                    x_scale=m * L0, max_iter=opts.max_iter)
                u, total_iters = ip.x, total_iters + ip.iterations
            res = projected_newton(model.energy, model.gradient, model.hessian, u, model.free,
                                   bandwidth=model.bandwidth, tol=opts.tol_opt * F,
                                   accept_tol=opts.tol_kkt * F, max_iter=opts.max_iter,
                                   eps_active=1e-3 * m * L0)
        except FloatingPointError as exc:
            raise NumericalError(str(exc)) from exc
        u, total_iters = res.x, total_iters + res.iterations
        if not res.converged:
            best = _package(problem, model, u, spacing, total_iters, outer, False)
            raise SolverError(f"inner solve failed in outer iteration {outer}: {res.message}", best)
        new_spacing = layer_spacing(problem, u)
        change = np.max(np.abs(new_spacing - spacing), initial=0.0) / problem.t
        if change <= outer_tol:
            return _package(problem, model, u, spacing, total_iters, outer, True)
        spacing = new_spacing

    best = _package(problem, model, u, spacing, total_iters, max_outer, False)
    raise SolverError(f"spacing did not settle within {max_outer} outer iterations", best)


def multilayer_energy(fields, problem: MultilayerProblem) -> float:
    """Stack energy evaluated directly from the layer displacements."""
    if len(fields) != problem.K:
        raise ValueError(f"expected {problem.K} fields, got {len(fields)}")
    eb = sum(bending_energy(w, problem.B, problem.mode) for w in fields)
    top = fields[-1].values - problem.f - problem.top_offset
    return eb + problem.q * float(np.dot(trapezoid_weights(problem.n_nodes, problem.h), top))


def stacked_candidate(problem: MultilayerProblem, bottom: np.ndarray):
    """Admissible stack built by laying K copies on ``bottom`` with sec spacing."""
    layers = [np.asarray(bottom, float)]
    for _ in range(problem.K - 1):
        s = np.gradient(layers[-1], problem.h)
        layers.append(layers[-1] + problem.t * np.sqrt(1 + s**2))
    return tuple(DiscreteField(w, problem.h) for w in layers)


# --- void census ----------------------------------------------------------------

@dataclass(frozen=True)
class InterfaceVoid:
    interface: int
    void_length: float
    void_area: float
    runs: int


@dataclass(frozen=True)
class VoidCensus:
    interfaces: tuple
    pattern: str


def census_threshold(problem: MultilayerProblem) -> float:
    """``1e-6`` of the void height scale ``m L``, never below ``tol_feas``."""
    m = problem.obstacle.slope
    scale = m * predicted_half_length(problem.K * problem.B, problem.q, m) if m > 0 else 0.0
    return max(problem.obstacle.tol_feas, 1e-6 * scale)


def _interface_multipliers(gaps, G, wp):
    """Contact pressure at every closed interface node, zero where open."""
    return np.where(gaps <= 0, G / wp[:, None], 0.0)


def _run_lengths(x, gap, thr, reaction=None):
    ends = run_endpoints(x, gap, thr, reaction)
    return float(sum(b - a for a, b in ends)), len(ends)


def classify_pattern(has_void) -> str:
    """Name the arrangement of voided interfaces (1 = bottom).

    ``none``, ``every-interface``, ``single``, ``periodic-n`` when voids sit
    at every n-th interface starting from the bottom, otherwise ``irregular``.
    """
    idx = [i + 1 for i, v in enumerate(has_void) if v]
    K = len(has_void)
    if not idx:
        return "none"
    if len(idx) == K:
        return "every-interface"
    if len(idx) == 1:
        return "single"
    steps = set(np.diff(idx).tolist())
    if len(steps) == 1:
        n = steps.pop()
        if idx[0] <= n and K - idx[-1] < n:
            return f"periodic-{n}"
    return "irregular"


def census_from_gaps(x, gaps, threshold, multipliers=None, background=0.0) -> VoidCensus:
    """Census of an ``(n, K)`` gap array.

    With ``multipliers`` (same shape) void ends are located from the contact
    reactions in excess of ``background``; otherwise by linear
    interpolation of the gap.
    """
    gaps = np.asarray(gaps, float)
    h = x[1] - x[0]
    wp = trapezoid_weights(len(x), h)
    rows = []
    for j in range(gaps.shape[1]):
        reaction = None if multipliers is None else (multipliers[:, j], wp, background)
        length, runs = _run_lengths(x, gaps[:, j], threshold, reaction)
        area = float(np.dot(wp, np.where(gaps[:, j] > threshold, gaps[:, j], 0.0)))
        rows.append(InterfaceVoid(j + 1, length, area, runs))
    return VoidCensus(tuple(rows), classify_pattern([r.runs > 0 for r in rows]))


def void_census(solution: MultilayerSolution, gap_threshold: float | None = None) -> VoidCensus:
    """Per-interface void length, area and number of disjoint runs.

    The default threshold is :func:`census_threshold`: interfaces that
    open by less than that are noise from the frozen spacing iteration,
    not voids.
    """
    pr = solution.problem
    thr = census_threshold(pr) if gap_threshold is None else gap_threshold
    wp = trapezoid_weights(pr.n_nodes, pr.h)
    lam = _interface_multipliers(solution.gaps, solution.gradient.reshape(pr.n_nodes, pr.K), wp)
    return census_from_gaps(solution.x, solution.gaps, thr, lam, pr.q)


# --- packet size --------------------------------------------------------------

@dataclass(frozen=True)
class PacketCoefficients:
    c_bend: float
    c_void: float

    def __post_init__(self):
        if self.c_bend < 0 or self.c_void < 0 or self.c_bend + self.c_void == 0:
            raise ValueError("packet coefficients must be nonnegative and not both zero")


#: void term and mismatch term in the ratio 1 : 0.01 for B = q = m = 1
BALANCED_COEFFS = PacketCoefficients(c_bend=0.01, c_void=1.0)


def packet_energy(n, coeffs: PacketCoefficients, B: float, q: float, m: float):
    """Energy per layer when layers deform in packets of ``n``.

    One void per packet (an elastica of stiffness ``n B``, energy
    ``~ q^(1/3) (nB)^(2/3) m^(5/3)``) shared by ``n`` layers, plus an
    intra-packet mismatch cost growing linearly with packet thickness.
    """
    n_arr = np.asarray(n)
    if np.any(n_arr < 1) or np.any(n_arr != np.floor(n_arr)):
        raise ValueError("packet size must be an integer >= 1")
    n_arr = n_arr.astype(float)
    void = coeffs.c_void * q ** (1 / 3) * (n_arr * B) ** (2 / 3) * m ** (5 / 3) / n_arr
    mismatch = coeffs.c_bend * B * m**3 * n_arr
    out = void + mismatch
    return float(out) if out.ndim == 0 else out


def continuous_packet_optimum(coeffs: PacketCoefficients, B, q, m) -> float:
    """Stationary point of the continuous relaxation, ``(A / 3C)^(3/4)``."""
    A = coeffs.c_void * q ** (1 / 3) * B ** (2 / 3) * m ** (5 / 3)
    C = coeffs.c_bend * B * m**3
    return math.inf if C == 0 else (A / (3 * C)) ** 0.75


@dataclass(frozen=True)
class PacketOptimum:
    n_star: int
    energy: float
    n_max: int
    at_lower: bool
    at_upper: bool

    @property
    def interior(self) -> bool:
        return not (self.at_lower or self.at_upper)


def optimal_packet(coeffs: PacketCoefficients, B, q, m, n_max: int = 1000) -> PacketOptimum:
    """Exhaustive minimization over ``1..n_max``; ties go to the smaller n."""
    if n_max < 2:
        raise ValueError("n_max must be >= 2")
    ns = np.arange(1, n_max + 1)
    e = packet_energy(ns, coeffs, B, q, m)
    i = int(np.argmin(e))
    return PacketOptimum(int(ns[i]), float(e[i]), int(n_max), i == 0, i == n_max - 1)
