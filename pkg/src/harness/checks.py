"""
Invariant Check Suites
Executable versions of the properties the solvers promise: Lyapunov
contraction and the x-step descent inequality of BAM, the OGM-G theta
recursion, gradient correctness against finite differences, and oracle
counter discipline.
"""

import functools
from dataclasses import asdict, dataclass
from typing import Callable, Dict, Iterable, List, Optional, Tuple

import numpy as np

from src.core import bam
from src.core.baselines import JointView, acdm, lincoupling, nag
from src.core.inner import InnerSolver, ogmg_thetas
from src.core.libsvm import LibsvmDataset
from src.core.oracle import BlockConstants, BlockObjective, BlockVector, InvalidInputError, finite_difference_gradient
from src.core.problems import QuadraticProblem, gen_quadratic, make_logistic, regularize
from src.core.trace import StoppingPolicy, Trace
from src.utils.logger import logger

THETA_SIZES = (1, 2, 3, 10, 100, 1000, 10000)
THETA_TOL = 1e-12
FD_TOL = 1e-5


@dataclass
class SuiteResult:
    passed: bool
    cases: int
    max_residual: float

    def as_dict(self) -> dict:
        return asdict(self)


def random_quadratic(rng: np.random.Generator, d_x: int = 20, d_y: int = 5,
                     coupled: Optional[bool] = None) -> QuadraticProblem:
    """Quadratic with kappa_x, kappa_y log-uniform on [10, 1e4]."""
    kappa_x, kappa_y = 10.0 ** rng.uniform(1.0, 4.0, size=2)
    if coupled is None:
        coupled = bool(rng.random() < 0.5)
    return gen_quadratic(d_x, d_y, 1.0, kappa_x, 1.0, kappa_y,
                         coupling_rho=0.2 if coupled else 0.0, seed=int(rng.integers(2 ** 31)))


def corrupted_parameters(c: BlockConstants, factor: float) -> bam.BamParams:
    """BAM parameters computed from mu_x scaled by ``factor`` (capped at L_x)."""
    return bam.compute_parameters(BlockConstants(c.L_x, c.L_y, min(c.mu_x * factor, c.L_x), c.mu_y))


@functools.lru_cache(maxsize=4)
def diagnostic_runs(cases: int, seed: int, max_iter: int,
                    corrupt_mu_x: Optional[float] = None) -> Tuple[Tuple[QuadraticProblem, bam.BamParams, Trace], ...]:
    rng = np.random.default_rng(seed)
    runs = []
    for _ in range(cases):
        problem = random_quadratic(rng)
        c = problem.constants
        params = corrupted_parameters(c, corrupt_mu_x) if corrupt_mu_x else bam.compute_parameters(c)
        inner = InnerSolver.for_parameters(params.eta_y * params.alpha, c.L_y)
        z0 = BlockVector(rng.standard_normal(problem.d_x), rng.standard_normal(problem.d_y))
        trace = bam.run(problem, z0.x, z0.y, StoppingPolicy(max_iter=max_iter, psi_ratio=1e-8),
                        diagnostics=True, params=params, inner=inner)
        runs.append((problem, params, trace))
    return tuple(runs)


def check_contraction(cases: int = 20, seed: int = 0, max_iter: int = 200,
                      corrupt_mu_x: Optional[float] = None) -> SuiteResult:
    """Psi+ <= Psi / (1 + alpha) at every outer step; residual is the worst excess over Psi."""
    worst, steps = -np.inf, 0
    for problem, params, trace in diagnostic_runs(cases, seed, max_iter, corrupt_mu_x):
        f_star = problem.reference_optimum()[1]
        slack = bam.contraction_slack(params, f_star)
        for prev, row in zip(trace.rows, trace.rows[1:]):
            bound = prev.psi / (1.0 + params.alpha) * (1.0 + bam.CONTRACTION_RTOL) + slack
            worst = max(worst, (row.psi - bound) / prev.psi)
            steps += 1
    return SuiteResult(passed=bool(worst <= 0.0), cases=steps, max_residual=float(worst))


def check_lemma1(cases: int = 20, seed: int = 0, max_iter: int = 200,
                 corrupt_mu_x: Optional[float] = None) -> SuiteResult:
    """Descent residual of the x step relative to 1 + |f*|."""
    worst, steps = -np.inf, 0
    for problem, _, trace in diagnostic_runs(cases, seed, max_iter, corrupt_mu_x):
        scale = 1.0 + abs(problem.reference_optimum()[1])
        for row in trace.rows[1:]:
            worst = max(worst, row.lemma1_residual / scale)
            steps += 1
    return SuiteResult(passed=bool(worst <= bam.LEMMA1_RTOL), cases=steps, max_residual=float(worst))


def theta_residuals(N: int) -> np.ndarray:
    """Relative residuals of the backward recursion, entries 0..N-1."""
    t = ogmg_thetas(N)
    res = np.empty(N)
    res[0] = abs(t[0] ** 2 - t[0] - 2.0 * t[1] ** 2) / t[0] ** 2
    res[1:] = np.abs(t[1:N] ** 2 - t[1:N] - t[2:] ** 2) / t[1:N] ** 2
    return res


def check_thetas(sizes: Iterable[int] = THETA_SIZES) -> SuiteResult:
    worst, cases = 0.0, 0
    for N in sizes:
        worst = max(worst, float(theta_residuals(N).max()))
        cases += 1
    spots = [
        (ogmg_thetas(1)[0], 2.0),
        (ogmg_thetas(2)[1], (1.0 + np.sqrt(5.0)) / 2.0),
    ]
    for value, expected in spots:
        worst = max(worst, abs(value - expected))
        cases += 1
    return SuiteResult(passed=worst <= THETA_TOL, cases=cases, max_residual=worst)


def synthetic_dataset(rng: np.random.Generator, n_samples: int = 40, n_features: int = 10,
                      density: float = 0.4) -> LibsvmDataset:
    rows = []
    for _ in range(n_samples):
        mask = rng.random(n_features) < density
        idx = np.flatnonzero(mask)
        rows.append((idx, rng.standard_normal(idx.size)))
    labels = np.where(rng.random(n_samples) < 0.5, -1.0, 1.0)
    return LibsvmDataset(labels=labels, rows=rows, n_features=n_features)


def fd_problems(seed: int = 0) -> List[BlockObjective]:
    rng = np.random.default_rng(seed)
    data = synthetic_dataset(rng)
    return [
        gen_quadratic(6, 4, 1.0, 30.0, 2.0, 80.0, coupling_rho=0.3, seed=seed),
        make_logistic(data, 6, 4, 0.01, 0.02),
        regularize(make_logistic(data, 6, 4, 0.0, 0.0), eps=1e-2, R=3.0),
    ]


def gradient_error(problem: BlockObjective, p: BlockVector) -> float:
    gx, gy = problem.peek_grad(p.x, p.y)
    fx, fy = finite_difference_gradient(problem, p)
    g = np.concatenate([gx, gy])
    return float(np.linalg.norm(g - np.concatenate([fx, fy])) / max(1.0, np.linalg.norm(g)))


def check_finite_difference(points: int = 20, seed: int = 0) -> SuiteResult:
    rng = np.random.default_rng(seed)
    worst, cases = 0.0, 0
    for problem in fd_problems(seed):
        for _ in range(points):
            p = BlockVector(rng.standard_normal(problem.d_x), rng.standard_normal(problem.d_y))
            worst = max(worst, gradient_error(problem, p))
            cases += 1
    return SuiteResult(passed=worst <= FD_TOL, cases=cases, max_residual=worst)


def expected_counts(method: str, outer_iter: int, grad_x: int, grad_y: int) -> int:
    """Mismatch between recorded counters and the per-step cost of ``method``."""
    if method == "bam":
        return abs(grad_x - outer_iter)
    if method == "nag":
        return abs(grad_x - outer_iter) + abs(grad_y - outer_iter)
    return abs(grad_x + grad_y - outer_iter)


def check_counters(seed: int = 0, steps: int = 30) -> SuiteResult:
    problem = gen_quadratic(8, 4, 1.0, 40.0, 1.0, 400.0, coupling_rho=0.2, seed=seed)
    z0 = BlockVector.zeros(problem.d_x, problem.d_y)
    stop = StoppingPolicy(max_iter=steps)
    runs = {
        "bam": lambda: bam.run(problem, z0.x, z0.y, stop),
        "nag": lambda: nag(JointView(problem), z0, stop),
        "acdm": lambda: acdm(problem, z0, StoppingPolicy(max_iter=steps * 12), seed=seed),
        "lincoupling": lambda: lincoupling(problem, z0, StoppingPolicy(max_iter=steps * 12), seed=seed),
    }
    worst, cases = 0, 0
    for method, run in runs.items():
        problem.counters.reset()
        trace = run()
        for row in trace.rows:
            worst = max(worst, expected_counts(method, row.outer_iter, row.grad_x_calls, row.grad_y_calls))
            cases += 1
        # each BAM step spends at least the center check of the inner solver
        if method == "bam":
            worst = max(worst, int(trace.final.grad_y_calls < trace.final.outer_iter))

    before = problem.counters.snapshot()
    problem.peek_value(z0.x, z0.y)
    problem.peek_grad(z0.x, z0.y)
    worst = max(worst, int(problem.counters.snapshot() != before))
    cases += 1
    return SuiteResult(passed=worst == 0, cases=cases, max_residual=float(worst))


SUITES: Dict[str, Callable[..., SuiteResult]] = {
    "contraction": check_contraction,
    "lemma1": check_lemma1,
    "thetas": check_thetas,
    "finite-difference": check_finite_difference,
    "counters": check_counters,
}


def run_checks(suites: Optional[Iterable[str]] = None, corrupt_mu_x: Optional[float] = None) -> Dict[str, dict]:
    """Runs the selected suites (all by default) and returns the machine-readable report."""
    names = list(suites) if suites else list(SUITES)
    unknown = [n for n in names if n not in SUITES]
    if unknown:
        raise InvalidInputError(f"unknown check suite(s) {unknown}; available: {sorted(SUITES)}")
    if corrupt_mu_x is not None and corrupt_mu_x <= 0:
        raise InvalidInputError(f"corruption factor must be positive, got {corrupt_mu_x}")

    report = {}
    for name in names:
        if name in ("contraction", "lemma1"):
            result = SUITES[name](corrupt_mu_x=corrupt_mu_x)
        else:
            result = SUITES[name]()
        level = "info" if result.passed else "error"
        getattr(logger, level)(f"check {name}: passed={result.passed} cases={result.cases} "
                               f"max_residual={result.max_residual:.3e}")
        report[name] = result.as_dict()
    return report


def all_passed(report: Dict[str, dict]) -> bool:
    return all(entry["passed"] for entry in report.values())
