"""Parameter sweeps and log-log fits of void length against the loading.

The void half-length of the single-layer problem should scale like
``(B/q)^(1/3)``.  A sweep fixes the domain once (validated at the largest
void) and refines the grid per run so that the same number of cells spans
the predicted void every time; the discrete problems are then close to
exact rescalings of one another.
"""

from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.stats import linregress

from .errors import InvariantViolation, SolverError
from .model import ElasticaProblem, ObstacleProfile, predicted_half_length
from .solver import SolverOptions, certify, solve

log = logging.getLogger(__name__)

THREADS_ENV = "LAYERFOLD_THREADS"


@dataclass(frozen=True)
class SweepRecord:
    B: float
    q: float
    m: float
    void_length: float
    corner_gap: float
    total_energy: float
    converged: bool
    diagnostics: str = ""


@dataclass(frozen=True)
class ScalingFit:
    exponent: float
    intercept: float
    stderr: float
    r2: float
    n_points: int


def worker_count() -> int:
    env = os.environ.get(THREADS_ENV)
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def sweep_problem(template: ElasticaProblem, B: float, q: float, nodes_per_void: int) -> ElasticaProblem:
    """Problem at (B, q) on at least the template's domain, with
    ``nodes_per_void`` cells across the predicted void."""
    m = template.obstacle.slope
    L0 = predicted_half_length(B, q, m)
    h = 2 * L0 / nodes_per_void
    half = int(math.ceil(template.half_width / h - 1e-9))
    return ElasticaProblem(B, q, ObstacleProfile(m, half * h), 2 * half + 1, template.mode)


def _run_one(args) -> SweepRecord:
    problem, opts = args
    B, q, m = problem.B, problem.q, problem.obstacle.slope
    try:
        sol = solve(problem, opts)
        checks = certify(sol, opts)
    except (SolverError, InvariantViolation) as exc:
        return SweepRecord(B, q, m, float("nan"), float("nan"), float("nan"), False,
                           f"{type(exc).__name__}: {exc}")
    failed = [k for k in ("single_interval", "convex", "kkt", "symmetric") if not checks[k]]
    return SweepRecord(B, q, m, sol.void_interval.length, sol.corner_gap, sol.energy.total,
                       not failed, ",".join(failed))


def run_sweep(template: ElasticaProblem, q_values, *, B_values=None, nodes_per_void: int = 200,
              opts: SolverOptions | None = None, workers: int | None = None) -> list[SweepRecord]:
    """One record per entry of ``q_values`` (paired with ``B_values`` if given).

    Results come back in input order regardless of ``workers``.  Runs that
    fail to converge or break an invariant are flagged, not dropped.
    """
    q_values = [float(q) for q in q_values]
    if any(not q > 0 for q in q_values):
        raise ValueError("q values must be positive")
    B_values = [template.B] * len(q_values) if B_values is None else [float(b) for b in B_values]
    if len(B_values) != len(q_values):
        raise ValueError("B_values and q_values differ in length")
    opts = opts or SolverOptions()
    jobs = [(sweep_problem(template, B, q, nodes_per_void), opts) for B, q in zip(B_values, q_values)]
    workers = worker_count() if workers is None else workers
    if workers <= 1 or len(jobs) == 1:
        return [_run_one(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
        return list(pool.map(_run_one, jobs))


def fit_exponent(records, independent: str = "q", min_points: int = 5) -> ScalingFit:
    """Least-squares slope of ``log(void_length)`` against ``log(independent)``.

    ``independent`` is one of ``"q"``, ``"B"``, ``"B/q"``.  Unconverged
    records are skipped; nonpositive lengths are skipped with a warning.
    """
    xs, ys = [], []
    for r in records:
        if not r.converged:
            continue
        if not r.void_length > 0:
            log.warning("excluding record with void length %r (B=%g, q=%g)", r.void_length, r.B, r.q)
            continue
        xval = {"q": r.q, "B": r.B, "B/q": r.B / r.q}[independent]
        xs.append(math.log(xval))
        ys.append(math.log(r.void_length))
    if len(xs) < min_points:
        raise ValueError(f"fit needs at least {min_points} usable records, got {len(xs)}")
    res = linregress(xs, ys)
    return ScalingFit(float(res.slope), float(res.intercept), float(res.stderr),
                      float(res.rvalue**2), len(xs))


def scaling_sweep(B: float = 1.0, m: float = 0.3, q_min: float = 1.0, q_max: float = 100.0,
                  n_points: int = 9, mode: str = "nonlinear", nodes_per_void: int = 200,
                  domain_factor: float = 3.0, validate: bool = True,
                  opts: SolverOptions | None = None, workers: int | None = None):
    """Geometric q sweep with the domain validated at ``q_min``.

    Returns ``(records, fit)``; ``fit`` is None when too few records converged.
    """
    from .solver import validate_domain

    template = ElasticaProblem.from_parameters(B, q_min, m, mode=mode, nodes_per_void=nodes_per_void,
                                               domain_factor=domain_factor)
    if validate:
        template, _ = validate_domain(template, opts)
    qs = np.geomspace(q_min, q_max, n_points)
    records = run_sweep(template, qs, nodes_per_void=nodes_per_void, opts=opts, workers=workers)
    try:
        fit = fit_exponent(records, "q")
    except ValueError:
        fit = None
    return records, fit
