"""Projected Newton method for ``min E(x)`` subject to ``x_i >= 0`` on a subset.

Bertsekas-style two-metric projection: variables that sit (nearly) on their
bound with a gradient pushing outward get a diagonally scaled gradient step;
all others get a Newton step from the reduced Hessian.  Trial points are
projected back onto the box and accepted by an Armijo test along the
projection arc.  The Hessian is banded, so each step costs one banded
Cholesky factorization.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse as sp
from scipy.linalg import LinAlgError, solveh_banded


@dataclass
class BoxResult:
    x: np.ndarray
    energy: float
    grad: np.ndarray
    iterations: int
    converged: bool
    residual: float
    message: str = ""


def projected_residual(x, g, free):
    """Componentwise projected gradient on the free variables."""
    r = np.where((x > 0) | (g < 0), g, 0.0)
    r[~free] = 0.0
    return r


def _banded_upper(M: sp.spmatrix, u: int) -> np.ndarray:
    n = M.shape[0]
    ab = np.zeros((u + 1, n))
    for k in range(min(u, n - 1) + 1):
        ab[u - k, k:] = M.diagonal(k)
    return ab


def _newton_direction(H, rhs, bandwidth):
    ab = _banded_upper(H, bandwidth)
    return solveh_banded(ab, rhs, check_finite=True)


def projected_newton(
    energy: Callable[[np.ndarray], float],
    gradient: Callable[[np.ndarray], np.ndarray],
    hessian: Callable[[np.ndarray, bool], sp.spmatrix],
    x0: np.ndarray,
    free: np.ndarray,
    *,
    bandwidth: int,
    tol: float,
    accept_tol: float | None = None,
    max_iter: int = 500,
    eps_active: float = 1e-3,
    armijo: float = 1e-4,
) -> BoxResult:
    """Minimize over ``{x : x[free] >= 0}``; entries outside ``free`` stay fixed.

    ``hessian(x, convexify)`` returns the full sparse Hessian; with
    ``convexify=True`` it must return a positive semidefinite surrogate used
    when the exact reduced Hessian is not positive definite.

    Convergence: ``max |projected gradient| <= tol``.  If the line search
    stalls at rounding level, the iterate is still reported converged when
    the residual is below ``accept_tol``.
    """
    accept_tol = tol if accept_tol is None else accept_tol
    x = np.array(x0, dtype=float)
    x[free] = np.maximum(x[free], 0.0)
    E = energy(x)
    g = gradient(x)
    if not np.isfinite(E) or not np.all(np.isfinite(g)):
        raise FloatingPointError("non-finite energy at the initial guess")

    res = np.max(np.abs(projected_residual(x, g, free)), initial=0.0)
    for it in range(1, max_iter + 1):
        if res <= tol:
            return BoxResult(x, E, g, it - 1, True, res)

        H = hessian(x, False).tocsr()
        diag = H.diagonal()
        D = 1.0 / np.where(diag > 0, diag, 1.0)
        probe = x - np.maximum(x - D * g, 0.0)
        eps = min(eps_active, np.max(np.abs(probe[free]), initial=0.0))
        active = free & (x <= eps) & (g > 0)
        F = free & ~active

        d = np.zeros_like(x)
        d[active] = -D[active] * g[active]
        idx = np.flatnonzero(F)
        if idx.size:
            rhs = -g[idx]
            dF = None
            for convexify in (False, True):
                Hx = H if not convexify else hessian(x, True).tocsr()
                HF = Hx[idx][:, idx]
                try:
                    dF = _newton_direction(HF, rhs, bandwidth)
                except LinAlgError:
                    continue
                if np.dot(dF, rhs) > 0:
                    break
                dF = None
            if dF is None:
                # shifted surrogate, always positive definite
                Hx = hessian(x, True).tocsr()[idx][:, idx]
                shift = 1e-8 * max(np.max(np.abs(Hx.diagonal())), 1.0)
                dF = _newton_direction(Hx + shift * sp.identity(idx.size), rhs, bandwidth)
            d[idx] = dF

        gFd = float(np.dot(g[F], d[F]))
        alpha = 1.0
        accepted = False
        while alpha > 1e-16:
            xn = x + alpha * d
            xn[free] = np.maximum(xn[free], 0.0)
            En = energy(xn)
            if np.isfinite(En):
                decrease = -alpha * gFd + float(np.dot(g[active], x[active] - xn[active]))
                if En <= E - armijo * decrease:
                    accepted = True
                    break
            alpha *= 0.5

        if accepted and np.max(np.abs(xn - x)) <= 1e-15 * max(np.max(np.abs(x)), 1e-300):
            accepted = False
        if not accepted:
            # rounding-level stall: take the full step only if it reduces the residual
            xn = x + d
            xn[free] = np.maximum(xn[free], 0.0)
            gn = gradient(xn)
            res_n = np.max(np.abs(projected_residual(xn, gn, free)), initial=0.0)
            En = energy(xn)
            if np.isfinite(En) and res_n < res and abs(En - E) <= 1e-12 * max(abs(E), 1e-300) + 1e-300:
                x, E, g, res = xn, En, gn, res_n
                continue
            ok = res <= accept_tol
            return BoxResult(x, E, g, it, ok, res,
                             "line search stalled" + ("" if ok else " above tolerance"))

        x, E = xn, En
        g = gradient(x)
        if not np.all(np.isfinite(g)):
            raise FloatingPointError("non-finite gradient")
        res = np.max(np.abs(projected_residual(x, g, free)), initial=0.0)

    ok = res <= tol
    return BoxResult(x, E, g, max_iter, ok, res, "" if ok else "iteration limit reached")


def interior_point(
    energy: Callable[[np.ndarray], float],
    gradient: Callable[[np.ndarray], np.ndarray],
    hessian: Callable[[np.ndarray, bool], sp.spmatrix],
    x0: np.ndarray,
    free: np.ndarray,
    *,
    bandwidth: int,
    mu0: float,
    mu_min: float,
    x_scale: float,
    max_iter: int = 500,
    max_inner: int = 25,
    armijo: float = 1e-4,
    trace: list | None = None,
) -> BoxResult:
    """Primal-dual log-barrier method for the same box problem.

    Used to reach the neighbourhood of the optimal contact set in a number
    of steps that barely depends on the grid; :func:`projected_newton`
    then finishes with bound variables exactly at zero.  ``x0`` must be
    strictly positive on ``free``.  Each barrier level is solved until the
    barrier gradient drops below ``mu / x_scale`` or ``max_inner`` steps
    have been spent, whichever comes first.
    """
    x = np.array(x0, dtype=float)
    if np.any(x[free] <= 0):
        raise ValueError("interior point start must be strictly feasible")
    idx = np.flatnonzero(free)
    mu = mu0
    lam = mu / x[idx]

    def barrier(z):
        zf = z[idx]
        if np.any(zf <= 0):
            return np.inf
        return energy(z) - mu * float(np.sum(np.log(zf)))

    it = 0
    inner = 0
    while it < max_iter:
        g = gradient(x)
        xf = x[idx]
        rb = g[idx] - mu / xf
        # barrier subproblem solved well enough: shrink mu
        if np.max(np.abs(rb)) <= mu / x_scale or inner >= max_inner:
            if mu <= mu_min:
                break
            mu = max(mu * 0.1, mu_min)
            inner = 0
            if trace is not None:
                trace.append((it, mu))
            continue
        it += 1
        inner += 1
        sigma = lam / xf
        H = hessian(x, False).tocsr()[idx][:, idx]
        dx = None
        for convexify in (False, True):
            Hx = H if not convexify else hessian(x, True).tocsr()[idx][:, idx]
            try:
                dx = _newton_direction(Hx + sp.diags(sigma), -rb, bandwidth)
            except LinAlgError:
                dx = None
                continue
            if np.dot(dx, rb) < 0:
                break
            dx = None
        if dx is None:
            dx = -rb / (np.abs(H.diagonal()) + sigma)
        dlam = mu / xf - lam - sigma * dx

        with np.errstate(over="ignore", divide="ignore"):
            neg = dx < 0
            a_max = min(1.0, 0.995 * np.min(-xf[neg] / dx[neg])) if neg.any() else 1.0
            negl = dlam < 0
            a_dual = min(1.0, 0.995 * np.min(-lam[negl] / dlam[negl])) if negl.any() else 1.0

        phi = barrier(x)
        slope = float(np.dot(rb, dx))
        a = a_max
        while a > 1e-16:
            xn = x.copy()
            xn[idx] = xf + a * dx
            pn = barrier(xn)
            if np.isfinite(pn) and pn <= phi + armijo * a * slope:
                break
            a *= 0.5
        else:
            return BoxResult(x, energy(x), g, it, False, float(np.max(np.abs(rb))),
                             "barrier line search failed")
        x = xn
        lam = lam + min(a, a_dual) * dlam
        lam = np.maximum(lam, 1e-300)

    g = gradient(x)
    return BoxResult(x, energy(x), g, it, True, float(np.max(np.abs(g[idx] - mu / x[idx]))))
