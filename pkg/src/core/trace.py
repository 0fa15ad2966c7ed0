"""
Trace Module
Convergence history keyed by per-block oracle counts, the stopping policy
shared by BAM and the baselines, and CSV persistence of traces.
"""

import csv
import math
import time
from dataclasses import dataclass, field, fields
from typing import List, Optional

from .oracle import BlockObjective, BlockVector, InvalidInputError

BASE_COLUMNS = ["outer_iter", "grad_x_calls", "grad_y_calls", "f_gap", "wall_time_s"]
DIAGNOSTIC_COLUMNS = ["psi", "lemma1_residual", "contraction_ratio"]


@dataclass(frozen=True)
class StoppingPolicy:
    """
    When to stop a run.

    A run stops at the first sample where any enabled rule fires:
    ``max_iter`` outer iterations, f-gap below ``target_gap`` (needs
    ``f_star``), or Psi/Psi0 below ``psi_ratio`` (BAM diagnostics only).
    """

    max_iter: Optional[int] = None
    target_gap: Optional[float] = None
    f_star: Optional[float] = None
    psi_ratio: Optional[float] = None

    def __post_init__(self):
        if self.max_iter is None and self.target_gap is None and self.psi_ratio is None:
            raise InvalidInputError("stopping policy needs max_iter, target_gap or psi_ratio")
        if self.max_iter is not None and self.max_iter < 0:
            raise InvalidInputError(f"max_iter must be >= 0, got {self.max_iter}")
        if self.target_gap is not None:
            if self.target_gap <= 0:
                raise InvalidInputError(f"target_gap must be positive, got {self.target_gap}")
            if self.f_star is None:
                raise InvalidInputError("target_gap needs a reference f_star")
        if self.psi_ratio is not None and not 0 < self.psi_ratio < 1:
            raise InvalidInputError(f"psi_ratio must lie in (0, 1), got {self.psi_ratio}")

    def with_cap(self, cap: int) -> "StoppingPolicy":
        if self.max_iter is not None:
            return self
        return StoppingPolicy(max_iter=cap, target_gap=self.target_gap,
                              f_star=self.f_star, psi_ratio=self.psi_ratio)

    def reached(self, k: int, f_gap: float, psi: Optional[float] = None,
                psi0: Optional[float] = None) -> bool:
        if self.max_iter is not None and k >= self.max_iter:
            return True
        if self.target_gap is not None and f_gap <= self.target_gap:
            return True
        if self.psi_ratio is not None and psi is not None and psi0:
            return psi <= self.psi_ratio * psi0
        return False

    def converged(self, f_gap: float, psi: Optional[float] = None,
                  psi0: Optional[float] = None) -> bool:
        """Whether a target (not the iteration cap) was met."""
        if self.target_gap is not None and f_gap <= self.target_gap:
            return True
        if self.psi_ratio is not None and psi is not None and psi0:
            return psi <= self.psi_ratio * psi0
        return False


def default_outer_cap(kappa: float, eps: float) -> int:
    """Safety bound ceil(10 sqrt(kappa) max(1, ln(1/eps))) on outer iterations."""
    return int(math.ceil(10.0 * math.sqrt(kappa) * max(1.0, math.log(1.0 / eps))))


@dataclass
class TraceRow:
    outer_iter: int
    grad_x_calls: int
    grad_y_calls: int
    f_gap: float
    wall_time_s: float = 0.0
    psi: Optional[float] = None
    lemma1_residual: Optional[float] = None
    contraction_ratio: Optional[float] = None


@dataclass
class Trace:
    method: str
    rows: List[TraceRow] = field(default_factory=list)
    diagnostics: bool = False
    converged: bool = False
    solution: Optional[BlockVector] = None

    @property
    def columns(self) -> List[str]:
        return BASE_COLUMNS + (DIAGNOSTIC_COLUMNS if self.diagnostics else [])

    @property
    def final(self) -> TraceRow:
        return self.rows[-1]

    def append(self, row: TraceRow):
        if self.rows:
            last = self.rows[-1]
            if row.grad_x_calls < last.grad_x_calls or row.grad_y_calls < last.grad_y_calls:
                raise InvalidInputError("trace counters must be nondecreasing")
        self.rows.append(row)

    def first_reaching(self, gap: float) -> Optional[TraceRow]:
        for row in self.rows:
            if row.f_gap <= gap:
                return row
        return None

    def to_csv(self, path: str):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(self.columns)
            for row in self.rows:
                writer.writerow([_format(getattr(row, name)) for name in self.columns])

    @classmethod
    def from_csv(cls, path: str, method: str) -> "Trace":
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            diagnostics = "psi" in (reader.fieldnames or [])
            trace = cls(method=method, diagnostics=diagnostics)
            for record in reader:
                values = {}
                for f in fields(TraceRow):
                    raw = record.get(f.name)
                    if raw is None or raw == "":
                        continue
                    values[f.name] = int(raw) if f.name in ("outer_iter", "grad_x_calls", "grad_y_calls") else float(raw)
                trace.rows.append(TraceRow(**values))
        return trace


def _format(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(float(value))
    return str(value)


class TraceRecorder:
    """
    Samples a running solver into a Trace.

    f-gaps are measured over the problem's uncounted channel against
    ``f_star``; without a reference the raw objective value is stored.
    """

    def __init__(self, method: str, problem: BlockObjective, f_star: Optional[float],
                 diagnostics: bool = False, record_wall_time: bool = False):
        self.trace = Trace(method=method, diagnostics=diagnostics)
        self.problem = problem
        self.f_star = f_star
        self.record_wall_time = record_wall_time
        self._start = time.perf_counter()

    def gap(self, x, y) -> float:
        value = self.problem.peek_value(x, y)
        return value - self.f_star if self.f_star is not None else value

    def record(self, k: int, f_gap: float, psi: Optional[float] = None,
               lemma1_residual: Optional[float] = None,
               contraction_ratio: Optional[float] = None) -> TraceRow:
        counts = self.problem.counters.snapshot()
        wall = time.perf_counter() - self._start if self.record_wall_time else 0.0
        row = TraceRow(
            outer_iter=k,
            grad_x_calls=counts.grad_x_calls,
            grad_y_calls=counts.grad_y_calls,
            f_gap=float(f_gap),
            wall_time_s=wall,
            psi=psi,
            lemma1_residual=lemma1_residual,
            contraction_ratio=contraction_ratio,
        )
        self.trace.append(row)
        return row
