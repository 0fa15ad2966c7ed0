"""
Block Accelerated Method
Outer accelerated loop in x with an inexact proximal-type step in y. Each
outer iteration makes one grad_x f call; the y block is handled by the
inner solver, whose gradient calls are the grad_y f cost.
"""

import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from src.utils.logger import logger
from .inner import AuxProblem, InnerSolver
from .oracle import BlockConstants, BlockObjective, BlockVector, InvalidInputError, NonFiniteError, as_vector
from .trace import StoppingPolicy, Trace, TraceRecorder, default_outer_cap

CONTRACTION_RTOL = 1e-8
LEMMA1_RTOL = 1e-9


@dataclass(frozen=True)
class BamParams:
    alpha: float
    eta_x: float
    eta_y: float

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise InvalidInputError(f"alpha must lie in (0, 1], got {self.alpha}")
        if not (self.eta_x > 0 and self.eta_y > 0):
            raise InvalidInputError(f"step sizes must be positive, got eta_x={self.eta_x}, eta_y={self.eta_y}")

    @property
    def rho(self) -> float:
        """Weight 1 / (eta_y alpha) of the proximal term in the inner problem."""
        return 1.0 / (self.eta_y * self.alpha)

    def as_dict(self) -> dict:
        return {"alpha": self.alpha, "eta_x": self.eta_x, "eta_y": self.eta_y}


def compute_parameters(c: BlockConstants) -> BamParams:
    ratio = math.sqrt(c.mu_x / c.L_x)
    return BamParams(
        alpha=ratio,
        eta_x=1.0 / math.sqrt(c.mu_x * c.L_x),
        eta_y=ratio / c.mu_y,
    )


def theoretical_outer_bound(params: BamParams, psi_ratio: float) -> int:
    """Outer iterations after which the contraction guarantees Psi/Psi0 <= psi_ratio."""
    return int(math.ceil(math.log(1.0 / psi_ratio) / math.log(1.0 + params.alpha)))


@dataclass(frozen=True)
class BamState:
    k: int
    x: np.ndarray
    y: np.ndarray
    x_bar: np.ndarray
    y_bar: np.ndarray
    # from the step that produced this state
    x_under: Optional[np.ndarray] = None
    y_under: Optional[np.ndarray] = None
    g_x: Optional[np.ndarray] = None
    g_y: Optional[np.ndarray] = None
    inner_iterations: int = 0
    doublings: int = 0

    @classmethod
    def initial(cls, x0, y0) -> "BamState":
        x0 = as_vector(x0, "x0")
        y0 = as_vector(y0, "y0")
        return cls(k=0, x=x0, y=y0, x_bar=x0.copy(), y_bar=y0.copy())

    @property
    def anchor(self) -> BlockVector:
        return BlockVector(self.x_bar, self.y_bar)


@dataclass(frozen=True)
class LyapunovReport:
    psi: float
    r_x: float
    r_y: float
    f_gap: float


def extrapolate(state: BamState, params: BamParams) -> Tuple[np.ndarray, np.ndarray]:
    a = params.alpha
    return a * state.x + (1.0 - a) * state.x_bar, a * state.y + (1.0 - a) * state.y_bar


def bam_step(state: BamState, problem: BlockObjective, params: BamParams,
             inner: InnerSolver) -> BamState:
    a, eta_x, eta_y = params.alpha, params.eta_x, params.eta_y
    x_under, y_under = extrapolate(state, params)

    aux = AuxProblem(problem, x_under, y_under, params.rho)
    result = inner(aux)
    y_bar_next = result.y

    # one grad_x call, shared by both x updates; g_y comes from the last inner gradient
    g_x = problem.grad_x(x_under, y_bar_next)
    g_y = aux.base_gradient(result.gradient, y_bar_next)

    x_bar_next = x_under - eta_x * a * g_x
    x_next = (state.x + a * x_under - eta_x * g_x) / (1.0 + a)
    y_next = (state.y + a * y_bar_next - eta_y * g_y) / (1.0 + a)

    for name, v in (("x", x_next), ("y", y_next), ("x_bar", x_bar_next)):
        if not np.all(np.isfinite(v)):
            raise NonFiniteError(f"BAM iterate {name} became non-finite at k={state.k + 1}")

    return BamState(
        k=state.k + 1,
        x=x_next,
        y=y_next,
        x_bar=x_bar_next,
        y_bar=y_bar_next,
        x_under=x_under,
        y_under=y_under,
        g_x=g_x,
        g_y=g_y,
        inner_iterations=result.iterations,
        doublings=result.doublings,
    )


def implicit_residuals(prev: BamState, new: BamState, params: BamParams) -> Tuple[float, float]:
    """Residuals of the implicit x and y update lines, relative to 1 + ||new||."""
    a = params.alpha
    rx = new.x - prev.x - a * (new.x_under - new.x) + params.eta_x * new.g_x
    ry = new.y - prev.y - a * (new.y_bar - new.y) + params.eta_y * new.g_y
    return (
        float(np.linalg.norm(rx) / (1.0 + np.linalg.norm(new.x))),
        float(np.linalg.norm(ry) / (1.0 + np.linalg.norm(new.y))),
    )


def lyapunov(state: BamState, params: BamParams, optimum: BlockVector, f_star: float,
             problem: BlockObjective) -> LyapunovReport:
    dx = state.x - optimum.x
    dy = state.y - optimum.y
    r_x = float(dx @ dx)
    r_y = float(dy @ dy)
    f_gap = problem.peek_value(state.x_bar, state.y_bar) - f_star
    psi = (1.0 + params.alpha) * (r_x / params.eta_x + r_y / params.eta_y) + (2.0 / params.alpha) * f_gap
    return LyapunovReport(psi=psi, r_x=r_x, r_y=r_y, f_gap=f_gap)


def check_lemma1(x_under: np.ndarray, y_bar_next: np.ndarray, g_x: np.ndarray,
                 params: BamParams, problem: BlockObjective) -> float:
    """f(x_bar+, y_bar+) + (eta_x alpha / 2)||g_x||^2 - f(x_under, y_bar+); nonpositive in exact arithmetic."""
    step = params.eta_x * params.alpha
    x_bar_next = x_under - step * g_x
    return (
        problem.peek_value(x_bar_next, y_bar_next)
        + 0.5 * step * float(g_x @ g_x)
        - problem.peek_value(x_under, y_bar_next)
    )


def contraction_slack(params: BamParams, f_star: float) -> float:
    """Absolute floor on Psi comparisons: the f-gap term cannot be resolved below it."""
    return (2.0 / params.alpha) * 64.0 * np.finfo(float).eps * (1.0 + abs(f_star))


def contraction_holds(psi_prev: float, psi_next: float, params: BamParams, f_star: float) -> bool:
    bound = psi_prev / (1.0 + params.alpha) * (1.0 + CONTRACTION_RTOL)
    return psi_next <= bound + contraction_slack(params, f_star)


def run(problem: BlockObjective, x0, y0, stop: StoppingPolicy, diagnostics: bool = False,
        params: Optional[BamParams] = None, inner: Optional[InnerSolver] = None,
        optimum: Optional[Tuple[BlockVector, float]] = None, stride: int = 1,
        record_wall_time: bool = False) -> Trace:
    """
    Runs BAM from (x0, y0) until ``stop`` fires and returns the trace.

    Psi, the descent residual and the contraction ratio are recorded when
    ``diagnostics`` is set and a reference optimum is available (passed in
    or known to the problem). They are computed over the uncounted channel.
    """
    constants = problem.constants
    params = params or compute_parameters(constants)
    inner = inner or InnerSolver.for_parameters(params.eta_y * params.alpha, constants.L_y)
    reference = optimum or problem.reference_optimum()

    f_star = stop.f_star if stop.f_star is not None else (reference[1] if reference else None)
    if diagnostics and reference is None:
        logger.warning("BAM diagnostics requested but no reference optimum is available; disabled")
        diagnostics = False
    if stop.psi_ratio is not None and not diagnostics:
        raise InvalidInputError("a psi_ratio stopping rule needs diagnostics and a reference optimum")
    eps = stop.target_gap if stop.target_gap is not None else stop.psi_ratio
    if eps is not None:
        stop = stop.with_cap(default_outer_cap(constants.kappa_x, eps))

    logger.info(
        f"BAM start: d=({problem.d_x}, {problem.d_y}), kappa_x={constants.kappa_x:.4g}, "
        f"kappa_y={constants.kappa_y:.4g}, alpha={params.alpha:.6g}, "
        f"initial inner N={inner.budget.initial_N}"
    )

    recorder = TraceRecorder("bam", problem, f_star, diagnostics, record_wall_time)
    state = BamState.initial(x0, y0)
    gap = recorder.gap(state.x_bar, state.y_bar)
    psi0 = psi = None
    if diagnostics:
        psi0 = psi = lyapunov(state, params, reference[0], reference[1], problem).psi
    recorder.record(0, gap, psi=psi)

    while not stop.reached(state.k, gap, psi, psi0):
        new_state = bam_step(state, problem, params, inner)
        gap = recorder.gap(new_state.x_bar, new_state.y_bar)
        residual = ratio = None
        if diagnostics:
            new_psi = lyapunov(new_state, params, reference[0], reference[1], problem).psi
            residual = check_lemma1(new_state.x_under, new_state.y_bar, new_state.g_x, params, problem)
            ratio = (1.0 + params.alpha) * new_psi / psi if psi > 0 else 0.0
            psi = new_psi
        state = new_state
        if state.k % stride == 0 or stop.reached(state.k, gap, psi, psi0):
            recorder.record(state.k, gap, psi=psi, lemma1_residual=residual, contraction_ratio=ratio)
        logger.debug(f"BAM k={state.k} f_gap={gap:.3e} inner_calls={state.inner_iterations}")

    trace = recorder.trace
    trace.converged = stop.converged(gap, psi, psi0)
    trace.solution = state.anchor
    logger.info(
        f"BAM done: k={state.k}, grad_x={trace.final.grad_x_calls}, "
        f"grad_y={trace.final.grad_y_calls}, f_gap={gap:.3e}"
    )
    return trace
