import math

import numpy as np
import pytest

from conftest import ZeroObjective, diag_quadratic
from src.core.libsvm import parse_libsvm
from src.core.oracle import (
    BlockConstants,
    BlockVector,
    InvalidInputError,
    NonFiniteError,
    assumption_margins,
    evaluate,
    finite_difference_gradient,
    grad_x,
    grad_y,
)
from src.core.problems import QuadraticProblem, make_logistic


class NanObjective(ZeroObjective):
    def _value(self, x, y):
        return float("nan")

    def _grad_y(self, x, y):
        return np.array([np.inf])


class TestBlockVector:
    def test_rejects_non_finite(self):
        with pytest.raises(NonFiniteError):
            BlockVector([1.0, np.nan], [0.0])

    def test_rejects_empty_block(self):
        with pytest.raises(InvalidInputError):
            BlockVector([1.0], [])

    def test_rejects_matrix(self):
        with pytest.raises(InvalidInputError):
            BlockVector(np.ones((2, 2)), [0.0])

    def test_joint_split(self):
        p = BlockVector([1.0, 2.0], [3.0])
        q = BlockVector.from_joint(p.joint(), 2)
        assert p.d_x == 2 and p.d_y == 1
        np.testing.assert_array_equal(q.x, [1.0, 2.0])
        np.testing.assert_array_equal(q.y, [3.0])


class TestBlockConstants:
    def test_condition_numbers(self):
        c = BlockConstants(L_x=50.0, L_y=500.0, mu_x=0.1, mu_y=0.1)
        assert c.kappa_x == pytest.approx(500.0)
        assert c.kappa_y == pytest.approx(5000.0)

    @pytest.mark.parametrize("mu_x,L_x", [(0.0, 1.0), (2.0, 1.0), (-1.0, 1.0)])
    def test_rejects_invalid(self, mu_x, L_x):
        with pytest.raises(InvalidInputError):
            BlockConstants(L_x=L_x, L_y=1.0, mu_x=mu_x, mu_y=1.0)

    def test_convex_only_problem_has_no_constants(self):
        problem = ZeroObjective()
        assert not problem.has_constants
        with pytest.raises(InvalidInputError, match="regularization"):
            problem.constants


class TestOracleValues:
    def test_identity_quadratic(self):
        problem = QuadraticProblem(np.eye(2), np.zeros(2), 1, L_x=2, L_y=2, mu_x=2, mu_y=2)
        assert evaluate(problem, BlockVector([1.0], [1.0])) == pytest.approx(2.0)
        np.testing.assert_array_equal(grad_x(problem, BlockVector([0.0], [0.0])), [0.0])
        np.testing.assert_array_equal(grad_y(problem, BlockVector([0.0], [0.0])), [0.0])

    def test_diagonal_quadratic(self):
        problem = diag_quadratic(1.0, 2.0, b=(2.0, -4.0))
        assert evaluate(problem, BlockVector([-1.0], [1.0])) == pytest.approx(-3.0)
        origin = BlockVector([0.0], [0.0])
        np.testing.assert_allclose(grad_x(problem, origin), [2.0])
        np.testing.assert_allclose(grad_y(problem, origin), [-4.0])

    def test_logistic_at_zero_is_log2(self):
        data = parse_libsvm("+1 1:0.5 3:1.0\n-1 2:2.0\n+1 1:1.0 2:1.0 3:1.0\n")
        problem = make_logistic(data, 2, 1, 0.0, 0.0)
        assert evaluate(problem, BlockVector.zeros(2, 1)) == pytest.approx(math.log(2.0), abs=1e-15)


class TestCounters:
    def test_each_oracle_bumps_its_counter(self, small_quadratic):
        p = BlockVector.zeros(small_quadratic.d_x, small_quadratic.d_y)
        grad_x(small_quadratic, p)
        grad_x(small_quadratic, p)
        grad_y(small_quadratic, p)
        evaluate(small_quadratic, p)
        snap = small_quadratic.counters.snapshot()
        assert (snap.grad_x_calls, snap.grad_y_calls, snap.eval_calls) == (2, 1, 1)

    def test_joint_gradient_costs_one_of_each(self, small_quadratic):
        small_quadratic.grad(np.zeros(8), np.zeros(4))
        snap = small_quadratic.counters.snapshot()
        assert (snap.grad_x_calls, snap.grad_y_calls) == (1, 1)

    def test_peek_is_uncounted(self, small_quadratic):
        small_quadratic.peek_value(np.zeros(8), np.zeros(4))
        small_quadratic.peek_grad(np.zeros(8), np.zeros(4))
        snap = small_quadratic.counters.snapshot()
        assert (snap.grad_x_calls, snap.grad_y_calls, snap.eval_calls) == (0, 0, 0)

    def test_reset(self, small_quadratic):
        small_quadratic.grad(np.zeros(8), np.zeros(4))
        small_quadratic.counters.reset()
        assert small_quadratic.counters.snapshot().grad_x_calls == 0

    def test_dimension_mismatch(self, small_quadratic):
        with pytest.raises(InvalidInputError):
            small_quadratic.grad_x(np.zeros(7), np.zeros(4))

    def test_non_finite_outputs_abort(self):
        problem = NanObjective()
        with pytest.raises(NonFiniteError):
            problem.value(np.zeros(1), np.zeros(1))
        with pytest.raises(NonFiniteError):
            problem.grad_y(np.zeros(1), np.zeros(1))


class TestGradientConsistency:
    def test_quadratic_matches_finite_differences(self, small_quadratic):
        rng = np.random.default_rng(3)
        for _ in range(100):
            p = BlockVector(rng.standard_normal(8), rng.standard_normal(4))
            gx, gy = small_quadratic.peek_grad(p.x, p.y)
            fx, fy = finite_difference_gradient(small_quadratic, p)
            g = np.concatenate([gx, gy])
            err = np.linalg.norm(g - np.concatenate([fx, fy])) / max(1.0, np.linalg.norm(g))
            assert err <= 1e-5

    def test_assumption_margins_hold(self, small_quadratic):
        rng = np.random.default_rng(4)
        scale = max(small_quadratic.smoothness)
        for _ in range(1000):
            p1 = BlockVector(rng.standard_normal(8), rng.standard_normal(4))
            p2 = BlockVector(rng.standard_normal(8), rng.standard_normal(4))
            smooth, convex = assumption_margins(small_quadratic, p1, p2)
            assert smooth >= -1e-9 * scale * (1.0 + abs(small_quadratic.peek_value(p2.x, p2.y)))
            assert convex >= -1e-9 * scale * (1.0 + abs(small_quadratic.peek_value(p2.x, p2.y)))
