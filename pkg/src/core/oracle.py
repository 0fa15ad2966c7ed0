"""
Oracle Module
Block-structured objective contract, two-block points and per-block
oracle-call accounting shared by every solver.
"""

import threading
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np


class BlockSplitError(Exception):
    """Base class for every error raised by blocksplit."""


class InvalidInputError(BlockSplitError, ValueError):
    """Input rejected before any computation happened."""


class NonFiniteError(BlockSplitError, FloatingPointError):
    """An oracle output or a solver iterate stopped being finite."""


class InnerSolverError(BlockSplitError):
    """The inner solver exhausted its budget without meeting its criterion."""

    def __init__(self, message: str, best_candidate: np.ndarray, criterion_ratio: float):
        super().__init__(message)
        self.best_candidate = best_candidate
        self.criterion_ratio = criterion_ratio


def as_vector(values, name: str = "vector") -> np.ndarray:
    """Convert to a 1-D float64 array and reject NaN/Inf."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1:
        raise InvalidInputError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"{name} contains non-finite entries")
    return arr


@dataclass(frozen=True)
class BlockVector:
    """A point (x, y) with separate block dimensions."""

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        x = as_vector(self.x, "x")
        y = as_vector(self.y, "y")
        if x.size < 1 or y.size < 1:
            raise InvalidInputError("both blocks need at least one coordinate")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    @property
    def d_x(self) -> int:
        return self.x.size

    @property
    def d_y(self) -> int:
        return self.y.size

    def joint(self) -> np.ndarray:
        return np.concatenate([self.x, self.y])

    @classmethod
    def from_joint(cls, z, d_x: int) -> "BlockVector":
        z = np.asarray(z, dtype=np.float64)
        return cls(z[:d_x], z[d_x:])

    @classmethod
    def zeros(cls, d_x: int, d_y: int) -> "BlockVector":
        return cls(np.zeros(d_x), np.zeros(d_y))


@dataclass(frozen=True)
class BlockConstants:
    """Certified smoothness and strong convexity constants per block."""

    L_x: float
    L_y: float
    mu_x: float
    mu_y: float

    def __post_init__(self):
        for name in ("L_x", "L_y", "mu_x", "mu_y"):
            value = float(getattr(self, name))
            if not np.isfinite(value):
                raise InvalidInputError(f"{name} must be finite, got {value}")
            object.__setattr__(self, name, value)
        if not 0.0 < self.mu_x <= self.L_x:
            raise InvalidInputError(f"need 0 < mu_x <= L_x, got mu_x={self.mu_x}, L_x={self.L_x}")
        if not 0.0 < self.mu_y <= self.L_y:
            raise InvalidInputError(f"need 0 < mu_y <= L_y, got mu_y={self.mu_y}, L_y={self.L_y}")

    @property
    def kappa_x(self) -> float:
        return self.L_x / self.mu_x

    @property
    def kappa_y(self) -> float:
        return self.L_y / self.mu_y

    def as_dict(self) -> dict:
        return {"L_x": self.L_x, "L_y": self.L_y, "mu_x": self.mu_x, "mu_y": self.mu_y}


@dataclass(frozen=True)
class CounterSnapshot:
    grad_x_calls: int
    grad_y_calls: int
    eval_calls: int


class OracleCounters:
    """Monotone per-block call counters; increments are lock-protected."""

    def __init__(self):
        self._lock = threading.Lock()
        self.grad_x_calls = 0
        self.grad_y_calls = 0
        self.eval_calls = 0

    def bump(self, grad_x: int = 0, grad_y: int = 0, evals: int = 0):
        with self._lock:
            self.grad_x_calls += grad_x
            self.grad_y_calls += grad_y
            self.eval_calls += evals

    def snapshot(self) -> CounterSnapshot:
        with self._lock:
            return CounterSnapshot(self.grad_x_calls, self.grad_y_calls, self.eval_calls)

    def reset(self):
        with self._lock:
            self.grad_x_calls = 0
            self.grad_y_calls = 0
            self.eval_calls = 0


class BlockObjective(ABC):
    """
    Oracle contract for f(x, y).

    Subclasses implement the raw ``_value``/``_grad_x``/``_grad_y`` maps.
    The public methods validate dimensions, count calls and reject
    non-finite outputs. ``peek_*`` methods form the uncounted channel used
    by diagnostics and trace recording.
    """

    def __init__(self, d_x: int, d_y: int, L_x: float, L_y: float,
                 mu_x: float = 0.0, mu_y: float = 0.0):
        if d_x < 1 or d_y < 1:
            raise InvalidInputError(f"block dimensions must be >= 1, got ({d_x}, {d_y})")
        if not (L_x > 0 and L_y > 0 and mu_x >= 0 and mu_y >= 0):
            raise InvalidInputError(f"invalid block constants L=({L_x}, {L_y}), mu=({mu_x}, {mu_y})")
        self.d_x = int(d_x)
        self.d_y = int(d_y)
        # mu may be 0 for problems that are only convex in a block
        self.smoothness = (float(L_x), float(L_y))
        self.strong_convexity = (float(mu_x), float(mu_y))
        self.counters = OracleCounters()

    @property
    def constants(self) -> BlockConstants:
        if not self.has_constants:
            raise InvalidInputError(
                f"{type(self).__name__} is not strongly convex in every block "
                f"(mu={self.strong_convexity}); apply the regularization wrapper first"
            )
        return BlockConstants(*self.smoothness, *self.strong_convexity)

    @property
    def has_constants(self) -> bool:
        return min(self.strong_convexity) > 0

    @abstractmethod
    def _value(self, x: np.ndarray, y: np.ndarray) -> float:
        ...

    @abstractmethod
    def _grad_x(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        ...

    @abstractmethod
    def _grad_y(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        ...

    def _grad(self, x: np.ndarray, y: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        return self._grad_x(x, y), self._grad_y(x, y)

    def reference_optimum(self) -> Optional[Tuple[BlockVector, float]]:
        """(z*, f*) when known in closed form or from a cached reference run."""
        return None

    def describe(self) -> dict:
        return {"kind": type(self).__name__, "d_x": self.d_x, "d_y": self.d_y}

    # counted channel

    def value(self, x: np.ndarray, y: np.ndarray) -> float:
        self._check_dims(x, y)
        self.counters.bump(evals=1)
        return self._finite_scalar("f", self._value(x, y))

    def grad_x(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        self._check_dims(x, y)
        self.counters.bump(grad_x=1)
        return self._finite_array("grad_x f", self._grad_x(x, y))

    def grad_y(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        self._check_dims(x, y)
        self.counters.bump(grad_y=1)
        return self._finite_array("grad_y f", self._grad_y(x, y))

    def grad(self, x: np.ndarray, y: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Joint gradient; costs one call of each block oracle."""
        self._check_dims(x, y)
        self.counters.bump(grad_x=1, grad_y=1)
        gx, gy = self._grad(x, y)
        return self._finite_array("grad_x f", gx), self._finite_array("grad_y f", gy)

    # uncounted channel

    def peek_value(self, x: np.ndarray, y: np.ndarray) -> float:
        self._check_dims(x, y)
        return self._finite_scalar("f", self._value(x, y))

    def peek_grad(self, x: np.ndarray, y: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        self._check_dims(x, y)
        gx, gy = self._grad(x, y)
        return self._finite_array("grad_x f", gx), self._finite_array("grad_y f", gy)

    def _check_dims(self, x: np.ndarray, y: np.ndarray):
        if np.shape(x) != (self.d_x,) or np.shape(y) != (self.d_y,):
            raise InvalidInputError(
                f"expected blocks of shape ({self.d_x},) and ({self.d_y},), "
                f"got {np.shape(x)} and {np.shape(y)}"
            )

    @staticmethod
    def _finite_scalar(name: str, value) -> float:
        value = float(value)
        if not np.isfinite(value):
            raise NonFiniteError(f"oracle {name} returned {value}")
        return value

    @staticmethod
    def _finite_array(name: str, arr: np.ndarray) -> np.ndarray:
        if not np.all(np.isfinite(arr)):
            raise NonFiniteError(f"oracle {name} returned non-finite entries")
        return arr


def evaluate(problem: BlockObjective, p: BlockVector) -> float:
    return problem.value(p.x, p.y)


def grad_x(problem: BlockObjective, p: BlockVector) -> np.ndarray:
    return problem.grad_x(p.x, p.y)


def grad_y(problem: BlockObjective, p: BlockVector) -> np.ndarray:
    return problem.grad_y(p.x, p.y)


def finite_difference_gradient(problem: BlockObjective, p: BlockVector, h: Optional[float] = None):
    """Central differences of f over the uncounted channel, block by block."""
    z = p.joint()
    if h is None:
        h = 1e-6 * (1.0 + np.linalg.norm(z))
    grad = np.empty_like(z)
    for i in range(z.size):
        step = np.zeros_like(z)
        step[i] = h
        zp, zm = z + step, z - step
        grad[i] = (
            problem.peek_value(zp[:p.d_x], zp[p.d_x:]) - problem.peek_value(zm[:p.d_x], zm[p.d_x:])
        ) / (2.0 * h)
    return grad[:p.d_x], grad[p.d_x:]


def assumption_margins(problem: BlockObjective, p1: BlockVector, p2: BlockVector) -> Tuple[float, float]:
    """
    Slack in the block smoothness and block strong convexity inequalities
    for the pair (p1, p2). Both are nonnegative when the stored constants
    are valid.
    """
    c = problem.constants
    f1 = problem.peek_value(p1.x, p1.y)
    f2 = problem.peek_value(p2.x, p2.y)
    gx, gy = problem.peek_grad(p1.x, p1.y)
    dx, dy = p2.x - p1.x, p2.y - p1.y
    linear = f1 + gx @ dx + gy @ dy
    upper = linear + 0.5 * c.L_x * (dx @ dx) + 0.5 * c.L_y * (dy @ dy)
    lower = linear + 0.5 * c.mu_x * (dx @ dx) + 0.5 * c.mu_y * (dy @ dy)
    return upper - f2, f2 - lower
