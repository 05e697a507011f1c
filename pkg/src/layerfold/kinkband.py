"""Rigid-block kink-band model with interlayer friction.

A band of width ``b`` inside a stack of ``n_layers`` layers of thickness
``t`` rotates its layers by ``alpha``.  The material outside the band is an
inline spring of stiffness ``k``; the stack is held together by a lateral
pressure ``q``, and slip between layers is resisted by Coulomb friction
``mu``.  With the end shortening ``Delta`` as control parameter the total
potential is

    E(Delta, alpha) = k/2 (Delta - b (1 - cos alpha))^2 + mu q b H tan(alpha),

``H = n_layers * t``.  The second term is the frictional work of the
interlayer slip ``t tan(alpha)`` per interface, valid along a monotone
loading path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .errors import DomainError, SolverError

HALF_PI = 0.5 * math.pi
#: angle minimizing the equilibrium load, sin^2 = 1/3
CRITICAL_ANGLE = math.asin(1 / math.sqrt(3))


@dataclass(frozen=True)
class KinkBandParams:
    b: float = 1.0
    t: float = 0.01
    n_layers: int = 100
    k: float = 1.0
    q: float = 1.0
    mu: float = 0.57

    def __post_init__(self):
        problems = [f"{name} must be > 0, got {getattr(self, name)}"
                    for name in ("b", "t", "n_layers", "k", "q")
                    if not getattr(self, name) > 0]
        if not 0 < self.mu <= 2:
            problems.append(f"mu must lie in (0, 2], got {self.mu}")
        if problems:
            raise ValueError("; ".join(problems))

    @property
    def H(self) -> float:
        return self.n_layers * self.t

    @property
    def friction(self) -> float:
        """Coefficient ``mu q b H`` of the friction term."""
        return self.mu * self.q * self.b * self.H

    def scaled(self, **factors) -> "KinkBandParams":
        from dataclasses import replace
        return replace(self, **{k: getattr(self, k) * v for k, v in factors.items()})


@dataclass(frozen=True)
class PathPoint:
    alpha: float
    Delta: float
    P: float
    energy: float
    branch: str

    @property
    def beta(self) -> float:
        return band_angle(self.alpha)


def _check_alpha(alpha, *, open_left=False):
    a = np.asarray(alpha, dtype=float)
    lo_ok = a > 0 if open_left else a >= 0
    if not np.all(lo_ok & (a < HALF_PI)):
        interval = "(0, pi/2)" if open_left else "[0, pi/2)"
        raise DomainError(f"alpha must lie in {interval}, got {alpha}")
    return a


def band_angle(alpha):
    """Band inclination ``beta = alpha / 2`` preserving layer thickness."""
    return _check_alpha(alpha) / 2 if np.ndim(alpha) else float(_check_alpha(alpha)) / 2


def rotation_shortening(alpha, params: KinkBandParams):
    """Axial length ``b (1 - cos alpha)`` lost by the rotating band."""
    a = _check_alpha(alpha)
    out = 2 * params.b * np.sin(a / 2) ** 2
    return float(out) if np.ndim(out) == 0 else out


def total_potential(Delta, alpha, params: KinkBandParams):
    if np.any(np.asarray(Delta) < 0):
        raise DomainError("Delta must be >= 0")
    a = _check_alpha(alpha)
    spring = 0.5 * params.k * (Delta - rotation_shortening(a, params)) ** 2
    out = spring + params.friction * np.tan(a)
    return float(out) if np.ndim(out) == 0 else out


def equilibrium_load(alpha, params: KinkBandParams):
    """Load ``mu q H / (sin alpha cos^2 alpha)`` at which ``dE/dalpha = 0``.

    There is no finite load at ``alpha = 0``: the undeformed state is
    stable for every load.
    """
    a = np.asarray(alpha, dtype=float)
    if np.any(a == 0):
        raise DomainError("equilibrium load diverges at alpha = 0")
    a = _check_alpha(a, open_left=True)
    out = params.mu * params.q * params.H / (np.sin(a) * np.cos(a) ** 2)
    return float(out) if np.ndim(out) == 0 else out


def minimum_load(params: KinkBandParams) -> float:
    """Lowest load on the deformed branch, attained at ``CRITICAL_ANGLE``."""
    return params.mu * params.q * params.H * 1.5 * math.sqrt(3)


def equilibrium_path(params: KinkBandParams, alpha_grid) -> list[PathPoint]:
    """Stationary states on the deformed branch, one per angle."""
    alphas = _check_alpha(np.atleast_1d(alpha_grid), open_left=True)
    P = equilibrium_load(alphas, params)
    Delta = P / params.k + rotation_shortening(alphas, params)
    E = total_potential(Delta, alphas, params)
    return [PathPoint(float(a), float(d), float(p), float(e), "deformed")
            for a, d, p, e in zip(alphas, Delta, P, E)]


def undeformed_path(params: KinkBandParams, Delta_grid) -> list[PathPoint]:
    """The trivial branch ``alpha = 0``, ``P = k Delta``."""
    return [PathPoint(0.0, float(d), float(params.k * d), 0.5 * params.k * float(d) ** 2,
                      "undeformed")
            for d in np.atleast_1d(Delta_grid)]


def maxwell_curve(alpha, params: KinkBandParams):
    """Shortening at which the rotated state with angle ``alpha`` has the
    same energy as the undeformed state."""
    a = _check_alpha(alpha, open_left=True)
    Dk = rotation_shortening(a, params)
    out = Dk / 2 + params.friction * np.tan(a) / (params.k * Dk)
    return float(out) if np.ndim(out) == 0 else out


def maxwell_curve_slope(alpha, params: KinkBandParams):
    """Derivative of :func:`maxwell_curve` with respect to ``alpha``."""
    a = _check_alpha(alpha, open_left=True)
    b, c = params.b, params.friction / params.k
    Dk = rotation_shortening(a, params)
    out = 0.5 * b * np.sin(a) + c * (1 / (np.cos(a) ** 2 * Dk) - np.tan(a) * b * np.sin(a) / Dk**2)
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class MaxwellPoint:
    Delta_M: float
    alpha_M: float

    @property
    def beta_M(self) -> float:
        return band_angle(self.alpha_M)


def maxwell_displacement(params: KinkBandParams, n_coarse: int = 64,
                         xtol: float = 1e-10) -> MaxwellPoint:
    """Smallest end shortening at which some rotated state matches the
    energy of the undeformed one.

    Coarse grid to bracket the minimum of :func:`maxwell_curve`, then
    golden-section refinement.  Function values only fix the argmin to
    about ``sqrt(eps)``, so the angle is finally polished by a root search
    on the analytic slope inside the bracket.
    """
    grid = (np.arange(n_coarse) + 0.5) * HALF_PI / n_coarse
    vals = maxwell_curve(grid, params)
    j = int(np.argmin(vals))
    if j == 0 or j == n_coarse - 1:
        raise SolverError(f"Maxwell minimum not bracketed: coarse argmin at grid edge "
                          f"(alpha={grid[j]:.4g}, Delta={vals[j]:.4g})")
    lo, hi = grid[j - 1], grid[j + 1]
    res = minimize_scalar(maxwell_curve, bracket=(lo, grid[j], hi), args=(params,),
                          method="golden", options={"xtol": xtol / max(grid[j], 1e-300)})
    alpha = float(res.x)
    if maxwell_curve_slope(lo, params) < 0 < maxwell_curve_slope(hi, params):
        alpha = brentq(maxwell_curve_slope, lo, hi, args=(params,), xtol=xtol * 1e-3,
                       rtol=4 * np.finfo(float).eps)
    return MaxwellPoint(float(maxwell_curve(alpha, params)), alpha)


def predicted_band_angle(params: KinkBandParams) -> float:
    return maxwell_displacement(params).beta_M


def dead_load_potential(alpha, P, params: KinkBandParams):
    """Potential under a fixed load ``P`` with the spring relaxed:
    ``G(alpha) = mu q b H tan(alpha) - P b (1 - cos alpha)``."""
    a = _check_alpha(alpha)
    out = params.friction * np.tan(a) - P * rotation_shortening(a, params)
    return float(out) if np.ndim(out) == 0 else out


def energy_barrier(P: float, params: KinkBandParams) -> float:
    """Height of the ridge separating the undeformed state from the rotated
    one under dead load ``P``.

    The ridge is the first stationary point of :func:`dead_load_potential`;
    it exists only above :func:`minimum_load`.  Below that there is no
    rotated equilibrium to escape to and the barrier is infinite.
    """
    if not P > 0:
        raise DomainError("load must be positive")
    if P <= minimum_load(params):
        return math.inf
    target = params.mu * params.q * params.H / P

    def fn(a):
        return math.sin(a) * math.cos(a) ** 2 - target

    ridge = brentq(fn, 0.0, CRITICAL_ANGLE, xtol=1e-300, rtol=4 * np.finfo(float).eps,
                   maxiter=500)
    return max(dead_load_potential(ridge, P, params), 0.0)
