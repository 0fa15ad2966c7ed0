"""
Baselines Module
Comparison methods over the same BlockObjective contract and Trace schema
as BAM: joint Nesterov acceleration, accelerated block-coordinate descent
on the rescaled problem, and restarted linear coupling.
"""

import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from src.utils.logger import logger
from .oracle import BlockObjective, BlockVector, InvalidInputError, NonFiniteError
from .trace import StoppingPolicy, Trace, TraceRecorder, default_outer_cap


@dataclass(frozen=True)
class JointView:
    """The problem seen as one L_joint-smooth, mu_joint-strongly convex function."""

    base: BlockObjective

    @property
    def L_joint(self) -> float:
        return max(self.base.constants.L_x, self.base.constants.L_y)

    @property
    def mu_joint(self) -> float:
        return min(self.base.constants.mu_x, self.base.constants.mu_y)

    @property
    def kappa(self) -> float:
        return self.L_joint / self.mu_joint


@dataclass(frozen=True)
class Rescaling:
    """y' = scale * y with scale = sqrt(mu_y / mu_x); equalises strong convexity."""

    scale: float

    @classmethod
    def for_problem(cls, problem: BlockObjective) -> "Rescaling":
        c = problem.constants
        return cls(math.sqrt(c.mu_y / c.mu_x))

    def forward(self, y: np.ndarray) -> np.ndarray:
        return self.scale * y

    def inverse(self, y_scaled: np.ndarray) -> np.ndarray:
        return y_scaled / self.scale

    def constants(self, problem: BlockObjective) -> Tuple[float, float, float]:
        """(L_x, L_y', mu) of the rescaled problem."""
        c = problem.constants
        s2 = self.scale ** 2
        return c.L_x, c.L_y / s2, c.mu_x


def sampling_probabilities(L_x: float, L_y: float) -> Tuple[float, float]:
    """Block-pick probabilities proportional to sqrt(L)."""
    sx, sy = math.sqrt(L_x), math.sqrt(L_y)
    return sx / (sx + sy), sy / (sx + sy)


def _stop_with_cap(stop: StoppingPolicy, kappa: float) -> StoppingPolicy:
    if stop.target_gap is not None:
        return stop.with_cap(default_outer_cap(kappa, stop.target_gap))
    return stop


def _require_finite(v: np.ndarray, method: str, k: int):
    if not np.all(np.isfinite(v)):
        raise NonFiniteError(f"{method} iterate became non-finite at k={k}")


def validate_stride(stride: Optional[int]):
    if stride is not None and stride < 1:
        raise InvalidInputError(f"stride must be >= 1, got {stride}")


def nag(joint: JointView, z0: BlockVector, stop: StoppingPolicy, stride: int = 1,
        record_wall_time: bool = False) -> Trace:
    """Constant-momentum Nesterov method on the joint variable; each step costs both block gradients."""
    problem = joint.base
    L, kappa = joint.L_joint, joint.kappa
    validate_stride(stride)
    momentum = (math.sqrt(kappa) - 1.0) / (math.sqrt(kappa) + 1.0)
    stop = _stop_with_cap(stop, kappa)
    d_x = problem.d_x
    logger.info(f"NAG start: L={L:.4g}, kappa={kappa:.4g}, momentum={momentum:.6f}")

    recorder = TraceRecorder("nag", problem, stop.f_star, record_wall_time=record_wall_time)
    y_prev = z0.joint()
    w = y_prev.copy()
    k = 0
    gap = recorder.gap(y_prev[:d_x], y_prev[d_x:])
    recorder.record(k, gap)
    while not stop.reached(k, gap):
        gx, gy = problem.grad(w[:d_x], w[d_x:])
        y = w - np.concatenate([gx, gy]) / L
        w = y + momentum * (y - y_prev)
        y_prev = y
        k += 1
        _require_finite(w, "NAG", k)
        gap = recorder.gap(y[:d_x], y[d_x:])
        if k % stride == 0 or stop.reached(k, gap):
            recorder.record(k, gap)

    trace = recorder.trace
    trace.converged = stop.converged(gap)
    trace.solution = BlockVector.from_joint(y_prev, d_x)
    return trace


def gradient_descent(joint: JointView, z0: BlockVector, stop: StoppingPolicy) -> Trace:
    """Plain gradient descent with step 1/L_joint."""
    problem = joint.base
    L = joint.L_joint
    stop = _stop_with_cap(stop, joint.kappa ** 2)
    d_x = problem.d_x
    recorder = TraceRecorder("gd", problem, stop.f_star)
    z = z0.joint()
    k = 0
    gap = recorder.gap(z[:d_x], z[d_x:])
    recorder.record(k, gap)
    while not stop.reached(k, gap):
        gx, gy = problem.grad(z[:d_x], z[d_x:])
        z = z - np.concatenate([gx, gy]) / L
        k += 1
        _require_finite(z, "GD", k)
        gap = recorder.gap(z[:d_x], z[d_x:])
        recorder.record(k, gap)
    trace = recorder.trace
    trace.converged = stop.converged(gap)
    trace.solution = BlockVector.from_joint(z, d_x)
    return trace


class _BlockSampler:
    """Seeded block picker; also maps block gradients through an optional rescaling."""

    def __init__(self, problem: BlockObjective, p_x: float, seed: int,
                 rescaling: Optional[Rescaling] = None):
        self.problem = problem
        self.p_x = p_x
        self.rng = np.random.default_rng(seed)
        self.scale = rescaling.scale if rescaling else 1.0

    def draw(self) -> str:
        return "x" if self.rng.random() < self.p_x else "y"

    def block_gradient(self, block: str, x: np.ndarray, y_scaled: np.ndarray) -> np.ndarray:
        y = y_scaled / self.scale
        if block == "x":
            return self.problem.grad_x(x, y)
        return self.problem.grad_y(x, y) / self.scale


def acdm(problem: BlockObjective, z0: BlockVector, stop: StoppingPolicy, seed: int = 0,
         stride: Optional[int] = None, record_wall_time: bool = False) -> Trace:
    """
    Accelerated block-coordinate descent with sqrt(L) sampling applied to the
    rescaled problem, where both blocks share strong convexity mu_x.
    Each draw costs one gradient of the sampled block.
    """
    rescaling = Rescaling.for_problem(problem)
    L_x, L_y, sigma = rescaling.constants(problem)
    p_x, p_y = sampling_probabilities(L_x, L_y)
    L = {"x": L_x, "y": L_y}
    p = {"x": p_x, "y": p_y}
    S = math.sqrt(L_x) + math.sqrt(L_y)
    tau = 2.0 / (1.0 + math.sqrt(4.0 * S * S / sigma + 1.0))
    eta = 1.0 / (tau * S * S)
    shrink = 1.0 / (1.0 + eta * sigma)
    validate_stride(stride)
    stride = stride or problem.d_x + problem.d_y
    stop = _stop_with_cap(stop, S * S / sigma)
    logger.info(f"ACDM start: p_x={p_x:.4f}, tau={tau:.4g}, scale={rescaling.scale:.4g}, seed={seed}")

    sampler = _BlockSampler(problem, p_x, seed, rescaling)
    recorder = TraceRecorder("acdm", problem, stop.f_star, record_wall_time=record_wall_time)
    # iterates live in rescaled coordinates: dicts of block arrays
    y = {"x": z0.x.copy(), "y": rescaling.forward(z0.y)}
    z = {"x": y["x"].copy(), "y": y["y"].copy()}
    k = 0
    gap = recorder.gap(z0.x, z0.y)
    recorder.record(k, gap)
    while not stop.reached(k, gap):
        x = {b: tau * z[b] + (1.0 - tau) * y[b] for b in ("x", "y")}
        i = sampler.draw()
        g = sampler.block_gradient(i, x["x"], x["y"])
        y = {"x": x["x"], "y": x["y"]}
        y[i] = x[i] - g / L[i]
        z = {b: shrink * (z[b] + eta * sigma * x[b]) for b in ("x", "y")}
        z[i] = z[i] - shrink * (eta / p[i]) * g
        k += 1
        _require_finite(y[i], "ACDM", k)
        if k % stride == 0:
            gap = recorder.gap(y["x"], rescaling.inverse(y["y"]))
            recorder.record(k, gap)
    if recorder.trace.final.outer_iter != k:
        gap = recorder.gap(y["x"], rescaling.inverse(y["y"]))
        recorder.record(k, gap)

    trace = recorder.trace
    trace.converged = stop.converged(gap)
    trace.solution = BlockVector(y["x"], rescaling.inverse(y["y"]))
    return trace


def lincoupling(problem: BlockObjective, z0: BlockVector, stop: StoppingPolicy, seed: int = 0,
                stride: Optional[int] = None, record_wall_time: bool = False) -> Trace:
    """
    Randomized linear coupling of a block-gradient step and a block mirror
    step, restarted from the gradient sequence every ceil(sqrt(8) S / sqrt(mu))
    draws so the expected gap halves per restart (mu = min(mu_x, mu_y)).
    """
    c = problem.constants
    sigma = min(c.mu_x, c.mu_y)
    p_x, p_y = sampling_probabilities(c.L_x, c.L_y)
    L = {"x": c.L_x, "y": c.L_y}
    p = {"x": p_x, "y": p_y}
    S = math.sqrt(c.L_x) + math.sqrt(c.L_y)
    period = int(math.ceil(math.sqrt(8.0) * S / math.sqrt(sigma)))
    validate_stride(stride)
    stride = stride or problem.d_x + problem.d_y
    stop = _stop_with_cap(stop, S * S / sigma)
    logger.info(f"LinCoupling start: p_x={p_x:.4f}, restart period={period}, seed={seed}")

    sampler = _BlockSampler(problem, p_x, seed)
    recorder = TraceRecorder("lincoupling", problem, stop.f_star, record_wall_time=record_wall_time)
    y = {"x": z0.x.copy(), "y": z0.y.copy()}
    z = {"x": y["x"].copy(), "y": y["y"].copy()}
    k = j = 0
    gap = recorder.gap(z0.x, z0.y)
    recorder.record(k, gap)
    while not stop.reached(k, gap):
        if j == period:
            z = {"x": y["x"].copy(), "y": y["y"].copy()}
            j = 0
        tau = 2.0 / (j + 2.0)
        step = (j + 2.0) / (2.0 * S * S)
        x = {b: tau * z[b] + (1.0 - tau) * y[b] for b in ("x", "y")}
        i = sampler.draw()
        g = sampler.block_gradient(i, x["x"], x["y"])
        y = {"x": x["x"], "y": x["y"]}
        y[i] = x[i] - g / L[i]
        z[i] = z[i] - (step / p[i]) * g
        k += 1
        j += 1
        _require_finite(y[i], "LinCoupling", k)
        if k % stride == 0:
            gap = recorder.gap(y["x"], y["y"])
            recorder.record(k, gap)
    if recorder.trace.final.outer_iter != k:
        gap = recorder.gap(y["x"], y["y"])
        recorder.record(k, gap)

    trace = recorder.trace
    trace.converged = stop.converged(gap)
    trace.solution = BlockVector(y["x"], y["y"])
    return trace
