import numpy as np
import pytest

from layerfold.model import ElasticaProblem
from layerfold.solver import solve


def smooth_field(rng, x, f, scale, n_modes=4):
    """Feasible smooth field: obstacle plus a positive random bump."""
    X = x[-1]
    bump = np.zeros_like(x)
    for _ in range(n_modes):
        c, w, a = rng.uniform(-0.5, 0.5) * X, rng.uniform(0.2, 0.6) * X, rng.uniform(0.1, 1.0)
        bump += a * np.exp(-((x - c) / w) ** 2)
    return f + scale * bump


@pytest.fixture(scope="session")
def linear_111():
    """Linearized solve at B = q = m = 1 on the reference grid."""
    p = ElasticaProblem.from_parameters(1.0, 1.0, 1.0, mode="linearized", n_nodes=2001)
    return solve(p)


@pytest.fixture(scope="session")
def nonlinear_default():
    return solve(ElasticaProblem.from_parameters(1.0, 1.0, 0.3))


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import VERDICTS
    except ImportError:
        return
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(VERDICTS):
            terminalreporter.write_line(VERDICTS[n])
