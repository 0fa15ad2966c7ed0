import math

import numpy as np
import pytest

from conftest import diag_quadratic
from src.core.baselines import (
    JointView,
    Rescaling,
    _BlockSampler,
    acdm,
    gradient_descent,
    lincoupling,
    nag,
    sampling_probabilities,
)
from src.core.oracle import BlockVector, InvalidInputError
from src.core.problems import QuadraticProblem
from src.core.trace import StoppingPolicy, default_outer_cap


def zeros_for(problem):
    return BlockVector.zeros(problem.d_x, problem.d_y)


def target(problem, gap, max_iter=None):
    return StoppingPolicy(max_iter=max_iter, target_gap=gap, f_star=problem.reference_optimum()[1])


class TestSampling:
    def test_equal_smoothness(self):
        assert sampling_probabilities(1.0, 1.0) == (0.5, 0.5)

    def test_sqrt_weighting(self):
        p_x, p_y = sampling_probabilities(1.0, 4.0)
        assert p_x == pytest.approx(1.0 / 3.0)
        assert p_y == pytest.approx(2.0 / 3.0)

    def test_draw_frequency(self, small_quadratic):
        sampler = _BlockSampler(small_quadratic, 1.0 / 3.0, seed=5)
        draws = [sampler.draw() for _ in range(20000)]
        assert draws.count("x") / len(draws) == pytest.approx(1.0 / 3.0, abs=0.02)


class TestRescaling:
    def test_round_trip(self):
        r = Rescaling(np.sqrt(7.0))
        y = np.random.default_rng(0).standard_normal(6)
        np.testing.assert_allclose(r.inverse(r.forward(y)), y, rtol=1e-15, atol=0)

    def test_rescaled_constants(self):
        problem = QuadraticProblem(np.diag([0.5, 2.0]), np.zeros(2), 1, L_x=1.0, L_y=40.0, mu_x=1.0, mu_y=4.0)
        r = Rescaling.for_problem(problem)
        assert r.scale == pytest.approx(2.0)
        assert r.constants(problem) == pytest.approx((1.0, 10.0, 1.0))

    def test_rescaled_gradient_is_chain_rule(self, small_quadratic):
        r = Rescaling.for_problem(small_quadratic)
        sampler = _BlockSampler(small_quadratic, 0.5, seed=0, rescaling=r)
        x, y = np.ones(8), np.linspace(-1.0, 1.0, 4)
        g = sampler.block_gradient("y", x, r.forward(y))
        np.testing.assert_allclose(g, small_quadratic.peek_grad(x, y)[1] / r.scale)


class TestJointView:
    def test_joint_constants(self, small_quadratic):
        joint = JointView(small_quadratic)
        c = small_quadratic.constants
        assert joint.L_joint == max(c.L_x, c.L_y)
        assert joint.mu_joint == min(c.mu_x, c.mu_y)
        assert joint.kappa == pytest.approx(joint.L_joint / joint.mu_joint)


class TestNag:
    def test_unit_condition_converges_in_one_step(self):
        problem = diag_quadratic(1.0, 1.0, b=(2.0, -4.0))
        trace = nag(JointView(problem), zeros_for(problem), target(problem, 1e-12))
        assert trace.converged
        assert trace.final.outer_iter == 1
        np.testing.assert_allclose(trace.solution.joint(), [-1.0, 2.0])

    def test_both_gradients_every_step(self, small_quadratic):
        trace = nag(JointView(small_quadratic), zeros_for(small_quadratic), StoppingPolicy(max_iter=20))
        for row in trace.rows:
            assert row.grad_x_calls == row.grad_y_calls == row.outer_iter

    def test_converges(self, small_quadratic):
        trace = nag(JointView(small_quadratic), zeros_for(small_quadratic), target(small_quadratic, 1e-8))
        assert trace.converged
        assert trace.final.f_gap <= 1e-8

    def test_faster_than_gradient_descent(self, small_quadratic):
        joint = JointView(small_quadratic)
        fast = nag(joint, zeros_for(small_quadratic), target(small_quadratic, 1e-6))
        slow = gradient_descent(joint, zeros_for(small_quadratic), target(small_quadratic, 1e-6))
        assert slow.converged and fast.converged
        assert fast.final.outer_iter < slow.final.outer_iter

    def test_stride(self, small_quadratic):
        trace = nag(JointView(small_quadratic), zeros_for(small_quadratic), StoppingPolicy(max_iter=10), stride=4)
        assert [row.outer_iter for row in trace.rows] == [0, 4, 8, 10]

    def test_rejects_bad_stride(self, small_quadratic):
        with pytest.raises(InvalidInputError):
            nag(JointView(small_quadratic), zeros_for(small_quadratic), StoppingPolicy(max_iter=1), stride=0)

    def test_loose_target_above_one(self, small_quadratic):
        z0 = BlockVector(np.full(8, 3.0), np.full(4, 3.0))
        trace = nag(JointView(small_quadratic), z0, target(small_quadratic, 2.0))
        assert trace.rows[0].f_gap > 2.0
        assert trace.converged
        assert trace.final.f_gap <= 2.0


@pytest.mark.parametrize("method", [acdm, lincoupling])
class TestRandomized:
    def test_one_block_gradient_per_draw(self, method, counting_quadratic):
        trace = method(counting_quadratic, zeros_for(counting_quadratic), StoppingPolicy(max_iter=100), seed=3)
        for row in trace.rows:
            assert row.grad_x_calls + row.grad_y_calls == row.outer_iter
        assert counting_quadratic.tally["grad_x"] == trace.final.grad_x_calls
        assert counting_quadratic.tally["grad_y"] == trace.final.grad_y_calls

    def test_seeded_runs_are_deterministic(self, method, small_quadratic):
        first = method(small_quadratic, zeros_for(small_quadratic), StoppingPolicy(max_iter=200), seed=9)
        small_quadratic.counters.reset()
        second = method(small_quadratic, zeros_for(small_quadratic), StoppingPolicy(max_iter=200), seed=9)
        assert first.rows == second.rows
        np.testing.assert_array_equal(first.solution.joint(), second.solution.joint())

    def test_seed_changes_block_sequence(self, method, small_quadratic):
        first = method(small_quadratic, zeros_for(small_quadratic), StoppingPolicy(max_iter=200), seed=1)
        small_quadratic.counters.reset()
        second = method(small_quadratic, zeros_for(small_quadratic), StoppingPolicy(max_iter=200), seed=2)
        assert [r.grad_x_calls for r in first.rows] != [r.grad_x_calls for r in second.rows]

    def test_default_stride_is_dimension(self, method, small_quadratic):
        trace = method(small_quadratic, zeros_for(small_quadratic), StoppingPolicy(max_iter=50))
        iters = [row.outer_iter for row in trace.rows]
        assert iters == [0, 12, 24, 36, 48, 50]

    def test_converges(self, method, small_quadratic):
        trace = method(small_quadratic, zeros_for(small_quadratic), target(small_quadratic, 1e-8, max_iter=50000), seed=0)
        assert trace.converged
        assert trace.final.f_gap <= 1e-8

    def test_loose_target_gets_positive_cap(self, method, small_quadratic):
        z0 = BlockVector(np.full(8, 3.0), np.full(4, 3.0))
        trace = method(small_quadratic, z0, target(small_quadratic, 2.0), seed=0)
        assert trace.final.outer_iter >= 1


def test_lincoupling_samples_both_blocks_evenly_on_symmetric_problem():
    problem = diag_quadratic(2.0, 2.0, b=(1.0, 1.0))
    trace = lincoupling(problem, zeros_for(problem), StoppingPolicy(max_iter=4000), seed=0, stride=1000)
    final = trace.final
    assert final.grad_x_calls + final.grad_y_calls == 4000
    assert final.grad_x_calls == pytest.approx(2000, abs=200)


@pytest.mark.parametrize("eps", [1.0, 2.0, 10.0, 1e6])
def test_outer_cap_stays_positive_for_loose_targets(eps):
    assert default_outer_cap(100.0, eps) == 100


def test_outer_cap_grows_with_log_inverse_eps():
    assert default_outer_cap(100.0, 1e-6) == math.ceil(100.0 * math.log(1e6))
