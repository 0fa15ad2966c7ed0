"""
Inner Solver Module
Approximately minimises the auxiliary function

    A(y) = f(x_under, y) + (rho / 2) ||y - y_center||^2,   rho = 1 / (eta_y * alpha)

until the relative gradient-norm criterion ||grad A(y)|| <= rho ||y - y_center||
holds. The solver runs Nesterov's method for the first half of a budget of
N gradient calls and OGM-G for the second half, doubling N until the
criterion is met.
"""

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from src.utils.logger import logger
from .oracle import BlockObjective, InnerSolverError, InvalidInputError, NonFiniteError, as_vector


@dataclass(frozen=True)
class AuxProblem:
    base: BlockObjective
    x_under: np.ndarray
    y_center: np.ndarray
    rho: float

    def __post_init__(self):
        if not self.rho > 0:
            raise InvalidInputError(f"rho must be positive, got {self.rho}")
        object.__setattr__(self, "x_under", as_vector(self.x_under, "x_under"))
        object.__setattr__(self, "y_center", as_vector(self.y_center, "y_center"))

    @property
    def smoothness(self) -> float:
        return self.base.constants.L_y + self.rho

    @property
    def strong_convexity(self) -> float:
        return self.base.constants.mu_y + self.rho

    @property
    def step_size(self) -> float:
        return 1.0 / self.smoothness

    def base_gradient(self, g: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Recover grad_y f(x_under, y) from grad A(y) without another oracle call."""
        return g - self.rho * (y - self.y_center)


def aux_eval(aux: AuxProblem, y: np.ndarray) -> float:
    diff = y - aux.y_center
    return aux.base.value(aux.x_under, y) + 0.5 * aux.rho * (diff @ diff)


def aux_grad(aux: AuxProblem, y: np.ndarray) -> np.ndarray:
    """Gradient of A; costs exactly one counted grad_y f call."""
    return aux.base.grad_y(aux.x_under, y) + aux.rho * (y - aux.y_center)


def default_abs_floor(aux: AuxProblem) -> float:
    return 1e-13 * (1.0 + np.linalg.norm(aux.y_center))


def check_criterion(g: np.ndarray, y: np.ndarray, aux: AuxProblem,
                    abs_floor: Optional[float] = None) -> bool:
    if abs_floor is None:
        abs_floor = default_abs_floor(aux)
    return np.linalg.norm(g) <= aux.rho * np.linalg.norm(y - aux.y_center) + abs_floor * aux.rho


def criterion_ratio(g: np.ndarray, y: np.ndarray, aux: AuxProblem,
                    abs_floor: Optional[float] = None) -> float:
    """||g|| over the criterion's right-hand side; the criterion holds iff <= 1."""
    if abs_floor is None:
        abs_floor = default_abs_floor(aux)
    rhs = aux.rho * (np.linalg.norm(y - aux.y_center) + abs_floor)
    g_norm = float(np.linalg.norm(g))
    if rhs == 0.0:
        return 0.0 if g_norm == 0.0 else math.inf
    return g_norm / float(rhs)


def ogmg_thetas(N: int) -> np.ndarray:
    """Backward theta recursion of OGM-G; entry i is theta_i, theta_N = 1."""
    if N < 1:
        raise InvalidInputError(f"OGM-G needs N >= 1, got {N}")
    thetas = np.empty(N + 1)
    thetas[N] = 1.0
    for i in range(N - 1, 0, -1):
        thetas[i] = (1.0 + math.sqrt(1.0 + 4.0 * thetas[i + 1] ** 2)) / 2.0
    thetas[0] = (1.0 + math.sqrt(1.0 + 8.0 * thetas[1] ** 2)) / 2.0
    return thetas


@dataclass(frozen=True)
class OgmgSchedule:
    N: int
    gamma: float
    thetas: np.ndarray

    @classmethod
    def build(cls, N: int, gamma: float) -> "OgmgSchedule":
        return cls(N=N, gamma=gamma, thetas=ogmg_thetas(N))

    def coefficients(self, i: int):
        t_i, t_next = self.thetas[i], self.thetas[i + 1]
        momentum = (t_i - 1.0) * (2.0 * t_next - 1.0) / (t_i * (2.0 * t_i - 1.0))
        correction = (2.0 * t_next - 1.0) / (2.0 * t_i - 1.0)
        return momentum, correction


def ogmg_run(aux: AuxProblem, start: np.ndarray, N: int, gamma: Optional[float] = None) -> np.ndarray:
    """N steps of OGM-G from ``start``; returns x_N after exactly N gradient calls."""
    schedule = OgmgSchedule.build(N, aux.step_size if gamma is None else gamma)
    x = np.array(start, dtype=np.float64)
    y = x.copy()
    for i in range(N):
        y_next = x - schedule.gamma * aux_grad(aux, x)
        momentum, correction = schedule.coefficients(i)
        x = y_next + momentum * (y_next - y) + correction * (y_next - x)
        y = y_next
        _require_finite(x, "OGM-G", i)
    return x


def nag_run(aux: AuxProblem, start: np.ndarray, N: int, gamma: Optional[float] = None) -> np.ndarray:
    """N steps of convex Nesterov acceleration with the t_k momentum sequence."""
    if N < 1:
        raise InvalidInputError(f"NAG needs N >= 1, got {N}")
    gamma = aux.step_size if gamma is None else gamma
    y_prev = np.array(start, dtype=np.float64)
    z = y_prev.copy()
    t = 1.0
    for i in range(N):
        y_next = z - gamma * aux_grad(aux, z)
        t_next = (1.0 + math.sqrt(1.0 + 4.0 * t * t)) / 2.0
        z = y_next + ((t - 1.0) / t_next) * (y_next - y_prev)
        y_prev, t = y_next, t_next
        _require_finite(z, "NAG", i)
    return y_prev


def _require_finite(v: np.ndarray, method: str, i: int):
    if not np.all(np.isfinite(v)):
        raise NonFiniteError(f"{method} iterate became non-finite at step {i}")


@dataclass(frozen=True)
class InnerBudget:
    initial_N: int
    max_doublings: int = 30
    abs_floor: Optional[float] = None

    def __post_init__(self):
        if self.initial_N < 2 or self.initial_N % 2:
            raise InvalidInputError(f"initial_N must be even and >= 2, got {self.initial_N}")
        if not 0 <= self.max_doublings <= 60:
            raise InvalidInputError(f"max_doublings must lie in [0, 60], got {self.max_doublings}")


def initial_budget(eta_y_alpha: float, L_y: float) -> int:
    """2 ceil(2 max{1, sqrt(eta_y alpha L_y)}), the stand-in for sqrt(2C) max{1, .}."""
    return 2 * int(math.ceil(2.0 * max(1.0, math.sqrt(eta_y_alpha * L_y))))


class InnerResult(NamedTuple):
    y: np.ndarray
    iterations: int
    gradient: np.ndarray
    doublings: int


def nag_then_ogmg(aux: AuxProblem, start: np.ndarray, N: int) -> np.ndarray:
    half = N // 2
    y = nag_run(aux, start, half)
    return ogmg_run(aux, y, N - half)


def solve_inner(aux: AuxProblem, budget: InnerBudget) -> InnerResult:
    """
    Returns a point satisfying the criterion together with the number of
    gradient calls spent and grad A at that point. Every attempt restarts
    from y_center.
    """
    floor = budget.abs_floor if budget.abs_floor is not None else default_abs_floor(aux)
    center = aux.y_center

    g = aux_grad(aux, center)
    calls = 1
    if check_criterion(g, center, aux, floor):
        return InnerResult(center.copy(), calls, g, 0)

    best_y, best_ratio = center.copy(), criterion_ratio(g, center, aux, floor)
    N = budget.initial_N
    for doublings in range(budget.max_doublings + 1):
        y = nag_then_ogmg(aux, center, N)
        g = aux_grad(aux, y)
        calls += N + 1
        if check_criterion(g, y, aux, floor):
            return InnerResult(y, calls, g, doublings)
        ratio = criterion_ratio(g, y, aux, floor)
        if ratio < best_ratio:
            best_y, best_ratio = y, ratio
        logger.debug(f"Inner criterion missed with N={N} (ratio {ratio:.3g}), doubling")
        N *= 2

    raise InnerSolverError(
        f"inner criterion not met after {budget.max_doublings} doublings "
        f"(best ratio {best_ratio:.3g})",
        best_candidate=best_y,
        criterion_ratio=best_ratio,
    )


class InnerSolver:
    """Callable wrapper used by the outer loop; holds the budget policy."""

    def __init__(self, budget: InnerBudget):
        self.budget = budget

    @classmethod
    def for_parameters(cls, eta_y_alpha: float, L_y: float, max_doublings: int = 30,
                       abs_floor: Optional[float] = None) -> "InnerSolver":
        return cls(InnerBudget(initial_budget(eta_y_alpha, L_y), max_doublings, abs_floor))

    def __call__(self, aux: AuxProblem) -> InnerResult:
        return solve_inner(aux, self.budget)
