"""Obstacle geometry and the discrete elastica energy.

A layer with vertical displacement ``w`` rests on the V-shaped obstacle
``f(x) = m|x|`` under overburden pressure ``q``.  The energy is

    V[w] = B/2 * int w_xx^2 / (1 + w_x^2)^(5/2) dx + q * int (w - f) dx,

subject to ``w >= f``.  In linearized mode the slope factor is dropped.

Discretization: uniform grid on ``[-X, X]`` with an odd number of nodes (the
corner of the V sits on the middle node), second-order central differences
at interior nodes, trapezoid quadrature.  Everything here is exact calculus
of the *discrete* energy, so gradients and Hessians match finite differences
of :func:`total_energy` to rounding error.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import DomainError

MODES = ("nonlinear", "linearized")


@dataclass(frozen=True)
class ObstacleProfile:
    """Symmetric V obstacle ``f(x) = slope * |x|`` on ``[-half_width, half_width]``.

    ``slope = 0`` is accepted as the degenerate flat obstacle.
    """

    slope: float
    half_width: float
    corner_x: float = field(default=0.0, init=False)
    corner_y: float = field(default=0.0, init=False)

    def __post_init__(self):
        if not np.isfinite(self.slope) or self.slope < 0:
            raise ValueError(f"obstacle slope must be >= 0, got {self.slope}")
        if not np.isfinite(self.half_width) or self.half_width <= 0:
            raise ValueError(f"half_width must be > 0, got {self.half_width}")

    def __call__(self, x):
        return self.slope * np.abs(x)

    @property
    def tol_feas(self) -> float:
        return 1e-10 * max(1.0, self.slope * self.half_width)


def eval_obstacle(profile: ObstacleProfile, x: float) -> float:
    """Height of the obstacle at ``x``; raises :class:`DomainError` off the domain."""
    X = profile.half_width
    if not abs(x) <= X * (1 + 1e-12):
        raise DomainError(f"x={x} outside [-{X}, {X}]")
    return float(profile(x))


@dataclass(frozen=True)
class DiscreteField:
    """Nodal values on a uniform grid of spacing ``h``."""

    values: np.ndarray
    h: float

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1:
            raise ValueError("field values must be one-dimensional")
        if not np.all(np.isfinite(v)):
            raise ValueError("field contains non-finite values")
        if not self.h > 0:
            raise ValueError("grid spacing must be positive")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __len__(self):
        return len(self.values)


@dataclass(frozen=True)
class ElasticaProblem:
    """Bending stiffness ``B``, pressure ``q``, obstacle and grid."""

    B: float
    q: float
    obstacle: ObstacleProfile
    n_nodes: int
    mode: str = "nonlinear"

    def __post_init__(self):
        problems = []
        if not self.B > 0:
            problems.append(f"B must be > 0, got {self.B}")
        if not self.q > 0:
            problems.append(f"q must be > 0, got {self.q}")
        n = self.n_nodes
        if int(n) != n or n < 5 or n % 2 == 0:
            problems.append(f"n_nodes must be an odd integer >= 5, got {n}")
        if self.mode not in MODES:
            problems.append(f"mode must be one of {MODES}, got {self.mode!r}")
        if problems:
            raise ValueError("; ".join(problems))
        object.__setattr__(self, "n_nodes", int(n))

    @classmethod
    def from_parameters(cls, B, q, m, *, mode="nonlinear", half_width=None,
                        n_nodes=None, nodes_per_void=200, domain_factor=3.0):
        """Build a problem sized from the linearized void half-length.

        The domain defaults to ``domain_factor`` times the predicted void
        half-length and the spacing puts ``nodes_per_void`` cells across the
        predicted void.  When ``n_nodes`` is given it takes precedence.
        """
        L0 = predicted_half_length(B, q, m) if m > 0 else 1.0
        X = domain_factor * L0 if half_width is None else float(half_width)
        if n_nodes is None:
            h = 2 * L0 / nodes_per_void
            half = int(np.ceil(X / h - 1e-9))
            X = half * h
            n_nodes = 2 * half + 1
        return cls(B, q, ObstacleProfile(m, X), n_nodes, mode)

    @property
    def half_width(self) -> float:
        return self.obstacle.half_width

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
    def length_scale(self) -> float:
        """Predicted void half-length ``(3 m B / q)^(1/3)`` (linearized model)."""
        m = self.obstacle.slope
        return predicted_half_length(self.B, self.q, m) if m > 0 else 0.0

    def with_(self, **changes) -> "ElasticaProblem":
        from dataclasses import replace
        return replace(self, **changes)


def predicted_half_length(B, q, m) -> float:
    return float((3.0 * m * B / q) ** (1.0 / 3.0))


class EnergyBreakdown(NamedTuple):
    bending: float
    pressure: float
    total: float


def trapezoid_weights(n: int, h: float) -> np.ndarray:
    w = np.full(n, h)
    w[0] = w[-1] = h / 2
    return w


def interior_weights(n: int, h: float) -> np.ndarray:
    """Trapezoid weights over interior nodes ``1..n-2`` (length ``n-2``)."""
    return trapezoid_weights(n - 2, h)


def central_differences(w: np.ndarray, h: float):
    """First and second central differences at interior nodes."""
    d1 = (w[2:] - w[:-2]) / (2 * h)
    d2 = (w[2:] - 2 * w[1:-1] + w[:-2]) / h**2
    return d1, d2


def obstacle_differences(n: int, h: float, m: float):
    """Exact central differences of ``m|x|`` at interior nodes.

    Computing these analytically (rather than differencing ``m|x_i|``) keeps
    rounding in the solver proportional to the gap, not to ``m X``.
    """
    half = (n - 1) // 2
    d1 = np.full(n - 2, m)
    d1[: half - 1] = -m
    d1[half - 1] = 0.0
    d2 = np.zeros(n - 2)
    d2[half - 1] = 2 * m / h
    return d1, d2


# --- local density phi(a, c) with a = w_x, c = w_xx -------------------------

def _density(a, c, B, mode):
    if mode == "linearized":
        return 0.5 * B * c**2
    return 0.5 * B * c**2 * (1 + a**2) ** -2.5


def _density_first(a, c, B, mode):
    if mode == "linearized":
        return np.zeros_like(a), B * c
    s = 1 + a**2
    return -2.5 * B * a * c**2 * s**-3.5, B * c * s**-2.5


def _density_second(a, c, B, mode, convexify=False):
    if mode == "linearized":
        return np.zeros_like(a), np.zeros_like(a), np.full_like(a, B)
    s = 1 + a**2
    if convexify:
        # Gauss-Newton on r = c s^(-5/4): always positive semidefinite
        return (6.25 * B * a**2 * c**2 * s**-4.5,
                -2.5 * B * a * c * s**-3.5,
                B * s**-2.5)
    return (-2.5 * B * c**2 * s**-4.5 * (1 - 6 * a**2),
            -5.0 * B * a * c * s**-3.5,
            B * s**-2.5)


def bending_from_differences(d1, d2, weights, B, mode) -> float:
    return float(np.dot(weights, _density(d1, d2, B, mode)))


def bending_gradient_from_differences(d1, d2, weights, B, h, mode) -> np.ndarray:
    pa, pc = _density_first(d1, d2, B, mode)
    A = weights * pa / (2 * h)
    C = weights * pc / h**2
    g = np.zeros(len(d1) + 2)
    g[:-2] += C - A
    g[1:-1] -= 2 * C
    g[2:] += C + A
    return g


def bending_hessian_from_differences(d1, d2, weights, B, h, mode, convexify=False):
    """Diagonals ``(main, first, second)`` of the symmetric pentadiagonal Hessian."""
    paa, pac, pcc = _density_second(d1, d2, B, mode, convexify)
    aa = weights * paa / (4 * h**2)
    ac = weights * pac / (2 * h**3)
    cc = weights * pcc / h**4
    n = len(d1) + 2
    d0 = np.zeros(n)
    e1 = np.zeros(n - 1)
    e2 = np.zeros(n - 2)
    d0[:-2] += aa - 2 * ac + cc
    d0[1:-1] += 4 * cc
    d0[2:] += aa + 2 * ac + cc
    e1[:-1] += 2 * ac - 2 * cc
    e1[1:] += -2 * ac - 2 * cc
    e2 += cc - aa
    return d0, e1, e2


# --- public energy functionals ----------------------------------------------

def _values(w):
    if isinstance(w, DiscreteField):
        return w.values, w.h
    raise TypeError("expected a DiscreteField")


def bending_energy(w: DiscreteField, B: float, mode: str = "nonlinear") -> float:
    """Discrete bending energy of ``w``; nonnegative, zero for affine fields."""
    v, h = _values(w)
    if len(v) < 3:
        raise ValueError("bending energy needs at least 3 nodes")
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    d1, d2 = central_differences(v, h)
    return bending_from_differences(d1, d2, interior_weights(len(v), h), B, mode)


def _check_grid(w: DiscreteField, profile: ObstacleProfile):
    n = len(w)
    expected = 2 * profile.half_width / (n - 1)
    if not np.isclose(expected, w.h, rtol=1e-12, atol=0):
        raise ValueError(f"field spacing {w.h} does not match obstacle grid {expected}")
    half = (n - 1) // 2
    return np.arange(-half, half + 1) * w.h


def pressure_energy(w: DiscreteField, profile: ObstacleProfile, q: float) -> float:
    """``q`` times the trapezoid integral of the gap ``w - f``."""
    v, h = _values(w)
    if len(v) % 2 == 0:
        raise ValueError("grid must have an odd number of nodes")
    gap = v - profile(_check_grid(w, profile))
    if gap.min() < -profile.tol_feas:
        raise ValueError(f"field penetrates the obstacle by {-gap.min():.3e}")
    return float(q * np.dot(trapezoid_weights(len(v), h), gap))


def total_energy(w: DiscreteField, problem: ElasticaProblem) -> EnergyBreakdown:
    eb = bending_energy(w, problem.B, problem.mode)
    ep = pressure_energy(w, problem.obstacle, problem.q)
    return EnergyBreakdown(eb, ep, eb + ep)


def energy_gradient(w: DiscreteField, problem: ElasticaProblem) -> DiscreteField:
    """Exact gradient of the discrete :func:`total_energy` w.r.t. every nodal value.

    The solver holds the two outermost nodes at each end fixed (clamped
    boundary); the entries for those nodes are still the true partials.
    """
    v, h = _values(w)
    d1, d2 = central_differences(v, h)
    g = bending_gradient_from_differences(
        d1, d2, interior_weights(len(v), h), problem.B, h, problem.mode)
    g += problem.q * trapezoid_weights(len(v), h)
    return DiscreteField(g, h)
