"""
Comparison report over a finished experiment directory.
"""

import json
import os
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from src.core.oracle import InvalidInputError
from src.core.trace import Trace
from .config import RANDOMIZED_METHODS
from .runner import METADATA_FILE

COLUMNS = ("method", "seed", "final_f_gap", "grad_x_to_eps", "grad_y_to_eps", "weighted_cost")


@dataclass
class ReportRow:
    method: str
    seed: str
    final_f_gap: float
    grad_x_to_eps: Optional[float]
    grad_y_to_eps: Optional[float]
    weighted_cost: Optional[float]


def load_metadata(directory: str) -> dict:
    path = os.path.join(directory, METADATA_FILE)
    if not os.path.exists(path):
        raise InvalidInputError(f"{directory} has no {METADATA_FILE}; is it an experiment output?")
    with open(path) as fh:
        return json.load(fh)


def summarize(directory: str, cost_ratio: float = 1.0) -> List[ReportRow]:
    """
    One row per successful run: counts when the f-gap first reached the
    target eps (empty if never) and the weighted cost
    cost_ratio * grad_x + grad_y. Randomized methods get a median row.
    """
    if cost_ratio < 0:
        raise InvalidInputError(f"cost ratio must be >= 0, got {cost_ratio}")
    metadata = load_metadata(directory)
    eps = metadata["config"]["stopping"].get("eps")
    rows: List[ReportRow] = []
    by_method = {}
    for run in metadata["runs"]:
        if run["status"] != "ok":
            continue
        trace = Trace.from_csv(os.path.join(directory, run["csv"]), run["method"])
        hit = trace.first_reaching(eps) if eps is not None else trace.final
        gx = gy = cost = None
        if hit is not None:
            gx, gy = hit.grad_x_calls, hit.grad_y_calls
            cost = cost_ratio * gx + gy
        row = ReportRow(run["method"], str(run["seed"]), trace.final.f_gap, gx, gy, cost)
        rows.append(row)
        by_method.setdefault(run["method"], []).append(row)

    for method, method_rows in by_method.items():
        if method in RANDOMIZED_METHODS and len(method_rows) > 1:
            rows.append(ReportRow(
                method, "median",
                float(np.median([r.final_f_gap for r in method_rows])),
                _median([r.grad_x_to_eps for r in method_rows]),
                _median([r.grad_y_to_eps for r in method_rows]),
                _median([r.weighted_cost for r in method_rows]),
            ))
    return rows


def _median(values) -> Optional[float]:
    if any(v is None for v in values):
        return None
    return float(np.median(values))


def _cell(value) -> str:
    if value is None:
        return "-"
    if isinstance(value, float):
        return f"{value:.4g}"
    return str(value)


def format_report(directory: str, cost_ratio: float = 1.0) -> str:
    metadata = load_metadata(directory)
    rows = summarize(directory, cost_ratio)
    table = [COLUMNS] + [tuple(_cell(getattr(r, c)) for c in COLUMNS) for r in rows]
    widths = [max(len(line[i]) for line in table) for i in range(len(COLUMNS))]
    lines = ["  ".join(cell.ljust(w) for cell, w in zip(line, widths)).rstrip() for line in table]
    lines.insert(1, "  ".join("-" * w for w in widths))

    header = [f"Experiment {metadata['config'].get('name', '?')} (config {metadata['config_hash'][:12]})"]
    theory = metadata.get("theoretical", {})
    if theory:
        parts = [f"{k}={v}" for k, v in sorted(theory.items())]
        header.append("BAM theoretical budgets: " + ", ".join(parts))
    failed = [f"{r['method']}/seed{r['seed']}: {r['error']}" for r in metadata["runs"] if r["status"] != "ok"]
    footer = ["Failed runs:"] + ["  " + f for f in failed] if failed else []
    return "\n".join(header + [""] + lines + ([""] + footer if footer else [])) + "\n"
