"""
Experiment Runner
Builds a fresh problem for every (method, seed) pair, dispatches to the
solver, and writes one CSV trace per run plus a metadata document.
"""

import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from src.core import bam
from src.core.baselines import JointView, acdm, lincoupling, nag
from src.core.inner import InnerSolver, initial_budget
from src.core.libsvm import default_data_dir, load_dataset
from src.core.oracle import BlockObjective, BlockSplitError, BlockVector
from src.core.problems import cached_reference, gen_quadratic, load_problem, make_logistic, regularize
from src.core.trace import StoppingPolicy, Trace
from src.utils.logger import logger
from . import __version__
from .config import ExperimentConfig, MethodSpec, ProblemSpec

METADATA_FILE = "metadata.json"

# Recorded as failed runs instead of aborting the experiment.
RUN_ERRORS = (BlockSplitError, np.linalg.LinAlgError, OSError, json.JSONDecodeError)


def build_problem(spec: ProblemSpec, seed: int, data_dir: Optional[str] = None) -> BlockObjective:
    """A new problem instance with its own counters; quadratics without a fixed seed use ``seed``."""
    if spec.kind == "quadratic":
        problem = gen_quadratic(
            spec.d_x, spec.d_y, spec.mu_x, spec.L_x, spec.mu_y, spec.L_y,
            coupling_rho=spec.coupling_rho, seed=spec.seed if spec.seed is not None else seed,
        )
    elif spec.kind == "logistic":
        data = load_dataset(spec.dataset, data_dir)
        problem = make_logistic(data, spec.d_x, spec.d_y, spec.lambda_x, spec.lambda_y,
                                L_data=spec.L_data, dataset_ref=spec.dataset)
    else:
        problem = load_problem(spec.path, data_dir)
    if spec.regularize_eps is not None:
        problem = regularize(problem, spec.regularize_eps, spec.regularize_R)
    return problem


def reference_for(problem: BlockObjective, data_dir: Optional[str] = None) -> Tuple[BlockVector, float]:
    reference = problem.reference_optimum()
    if reference is None:
        reference = cached_reference(problem, data_dir)
    return reference


def warm_reference_cache(config: ExperimentConfig, data_dir: Optional[str] = None):
    """Computes a seed-independent cached reference once so parallel runs only read it."""
    if config.problem.kind == "quadratic" and config.problem.seed is None:
        return
    try:
        problem = build_problem(config.problem, config.seeds[0], data_dir)
        if problem.reference_optimum() is None:
            cached_reference(problem, data_dir)
    except RUN_ERRORS as e:
        logger.warning(f"Reference precompute failed, runs will retry: {e}")


def _stopping(config: ExperimentConfig, f_star: float, with_psi: bool) -> StoppingPolicy:
    s = config.stopping
    return StoppingPolicy(
        max_iter=s.max_iter,
        target_gap=s.eps,
        f_star=f_star,
        psi_ratio=s.psi_ratio if with_psi else None,
    )


def _run_bam(problem, reference, config: ExperimentConfig, method: MethodSpec, seed: int) -> Trace:
    c = problem.constants
    params = bam.compute_parameters(c)
    inner = InnerSolver.for_parameters(params.eta_y * params.alpha, c.L_y, method.max_doublings)
    z0 = BlockVector.zeros(problem.d_x, problem.d_y)
    return bam.run(
        problem, z0.x, z0.y, _stopping(config, reference[1], method.diagnostics),
        diagnostics=method.diagnostics, params=params, inner=inner, optimum=reference,
        stride=config.stride or 1, record_wall_time=config.record_wall_time,
    )


def _run_nag(problem, reference, config: ExperimentConfig, method: MethodSpec, seed: int) -> Trace:
    z0 = BlockVector.zeros(problem.d_x, problem.d_y)
    return nag(JointView(problem), z0, _stopping(config, reference[1], False),
               stride=config.stride or 1, record_wall_time=config.record_wall_time)


def _run_acdm(problem, reference, config: ExperimentConfig, method: MethodSpec, seed: int) -> Trace:
    z0 = BlockVector.zeros(problem.d_x, problem.d_y)
    return acdm(problem, z0, _stopping(config, reference[1], False), seed=seed,
                stride=config.stride, record_wall_time=config.record_wall_time)


def _run_lincoupling(problem, reference, config: ExperimentConfig, method: MethodSpec, seed: int) -> Trace:
    z0 = BlockVector.zeros(problem.d_x, problem.d_y)
    return lincoupling(problem, z0, _stopping(config, reference[1], False), seed=seed,
                       stride=config.stride, record_wall_time=config.record_wall_time)


METHODS: Dict[str, Callable[..., Trace]] = {
    "bam": _run_bam,
    "nag": _run_nag,
    "acdm": _run_acdm,
    "lincoupling": _run_lincoupling,
}


@dataclass
class RunRecord:
    method: str
    seed: int
    status: str
    csv: Optional[str] = None
    error: Optional[str] = None
    converged: bool = False
    rows: int = 0
    final_f_gap: Optional[float] = None
    grad_x_calls: Optional[int] = None
    grad_y_calls: Optional[int] = None


@dataclass
class ExperimentResult:
    out_dir: str
    runs: List[RunRecord] = field(default_factory=list)

    @property
    def failed(self) -> bool:
        return any(r.status != "ok" for r in self.runs)


def csv_name(method: str, seed: int) -> str:
    return f"{method}_seed{seed}.csv"


def run_method(config: ExperimentConfig, method: MethodSpec, seed: int,
               data_dir: Optional[str] = None) -> Tuple[Optional[Trace], Optional[str]]:
    """Runs one (method, seed) pair; solver failures come back as an error message."""
    try:
        problem = build_problem(config.problem, seed, data_dir)
        reference = reference_for(problem, data_dir)
        logger.info(f"Running {method.name} (seed {seed}) on {problem.describe()['kind']}")
        return METHODS[method.name](problem, reference, config, method, seed), None
    except RUN_ERRORS as e:
        logger.exception(f"{method.name} (seed {seed}) failed: {e}")
        return None, f"{type(e).__name__}: {e}"


def _execute(config: ExperimentConfig, method: MethodSpec, seed: int, data_dir: Optional[str]) -> RunRecord:
    trace, error = run_method(config, method, seed, data_dir)
    if trace is None:
        return RunRecord(method.name, seed, status="failed", error=error)
    name = csv_name(method.name, seed)
    trace.to_csv(os.path.join(config.out, name))
    final = trace.final
    return RunRecord(
        method.name, seed, status="ok", csv=name, converged=trace.converged, rows=len(trace.rows),
        final_f_gap=final.f_gap, grad_x_calls=final.grad_x_calls, grad_y_calls=final.grad_y_calls,
    )


def describe_setup(config: ExperimentConfig, data_dir: Optional[str] = None) -> dict:
    """Problem constants, BAM parameters and the theoretical budgets for the first seed."""
    try:
        problem = build_problem(config.problem, config.seeds[0], data_dir)
        c = problem.constants
    except RUN_ERRORS as e:
        return {"error": str(e)}
    params = bam.compute_parameters(c)
    target = config.stopping.psi_ratio or config.stopping.eps
    setup = {
        "problem": problem.describe(),
        "constants": c.as_dict(),
        "bam_parameters": params.as_dict(),
        "theoretical": {"initial_inner_budget": initial_budget(params.eta_y * params.alpha, c.L_y)},
    }
    if target is not None and target < 1:
        setup["theoretical"]["outer_bound"] = bam.theoretical_outer_bound(params, target)
    return setup


def run_experiment(config: ExperimentConfig, data_dir: Optional[str] = None) -> ExperimentResult:
    """Runs every (method, seed) pair of ``config`` and writes CSVs plus metadata into ``config.out``."""
    data_dir = data_dir or default_data_dir()
    os.makedirs(config.out, exist_ok=True)
    started = datetime.now(timezone.utc).isoformat()
    t0 = time.perf_counter()

    jobs = [(m, s) for m in config.methods for s in config.seeds]
    if config.workers > 1:
        warm_reference_cache(config, data_dir)
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            records = list(pool.map(lambda job: _execute(config, job[0], job[1], data_dir), jobs))
    else:
        records = [_execute(config, m, s, data_dir) for m, s in jobs]

    result = ExperimentResult(config.out, records)
    metadata = {
        "version": __version__,
        "config": config.to_dict(),
        "config_hash": config.config_hash(),
        "seeds": list(config.seeds),
        **describe_setup(config, data_dir),
        "runs": [r.__dict__ for r in records],
        "started_at": started,
        "finished_at": datetime.now(timezone.utc).isoformat(),
        "elapsed_s": time.perf_counter() - t0,
    }
    with open(os.path.join(config.out, METADATA_FILE), "w") as fh:
        json.dump(metadata, fh, indent=2)

    failed = [f"{r.method}/seed{r.seed}" for r in records if r.status != "ok"]
    if failed:
        logger.error(f"{len(failed)} run(s) failed: {', '.join(failed)}")
    logger.info(f"Wrote {len(records) - len(failed)} trace(s) to {config.out}")
    return result
