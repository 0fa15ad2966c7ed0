import os

import numpy as np
import pytest

from src.core.libsvm import default_data_dir
from src.core.oracle import BlockObjective
from src.core.problems import QuadraticProblem, gen_quadratic


class CountingQuadratic(QuadraticProblem):
    """Tallies public oracle calls independently of the built-in counters."""

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.tally = {"grad_x": 0, "grad_y": 0}

    def grad_x(self, x, y):
        self.tally["grad_x"] += 1
        return super().grad_x(x, y)

    def grad_y(self, x, y):
        self.tally["grad_y"] += 1
        return super().grad_y(x, y)

    def grad(self, x, y):
        self.tally["grad_x"] += 1
        self.tally["grad_y"] += 1
        return super().grad(x, y)

    @classmethod
    def wrap(cls, p: QuadraticProblem) -> "CountingQuadratic":
        L_x, L_y = p.smoothness
        mu_x, mu_y = p.strong_convexity
        return cls(p.A, p.b, p.d_x, L_x=L_x, L_y=L_y, mu_x=mu_x, mu_y=mu_y, seed=p.seed)


class ZeroObjective(BlockObjective):
    """f = 0; only convex, so it has no certified constants."""

    def __init__(self, d_x=1, d_y=1):
        super().__init__(d_x, d_y, 1.0, 1.0)

    def _value(self, x, y):
        return 0.0

    def _grad_x(self, x, y):
        return np.zeros(self.d_x)

    def _grad_y(self, x, y):
        return np.zeros(self.d_y)


def diag_quadratic(a_x, a_y, b=(0.0, 0.0)) -> QuadraticProblem:
    """1+1 dimensional f = a_x x^2 + a_y y^2 + b.z with exact constants."""
    return QuadraticProblem(np.diag([a_x, a_y]), np.asarray(b, dtype=float), 1,
                            L_x=2 * a_x, L_y=2 * a_y, mu_x=2 * a_x, mu_y=2 * a_y)


@pytest.fixture
def small_quadratic():
    return gen_quadratic(8, 4, 1.0, 20.0, 1.0, 50.0, coupling_rho=0.2, seed=0)


@pytest.fixture
def counting_quadratic(small_quadratic):
    return CountingQuadratic.wrap(small_quadratic)


@pytest.fixture
def a1a_path():
    path = os.path.join(default_data_dir(), "a1a")
    if not os.path.exists(path):
        pytest.skip(f"a1a not present in {default_data_dir()}")
    return path
