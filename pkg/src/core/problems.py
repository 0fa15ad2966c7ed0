"""
Problems Module
Concrete block objectives: seeded quadratics with per-block spectra,
two-regulariser logistic regression over a LIBSVM dataset, and the
regularization wrapper for blocks that are only convex. Also the JSON
problem archive and the cached reference optimum for logistic problems.
"""

import hashlib
import json
import math
import os
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy import linalg
from scipy.special import expit
from scipy.stats import ortho_group

from src.utils.logger import logger
from .libsvm import LibsvmDataset, atomic_path, default_data_dir, load_dataset
from .oracle import BlockObjective, BlockVector, InvalidInputError

ARCHIVE_FORMAT_VERSION = 1
CERTIFY_TOL = 1e-9


class QuadraticProblem(BlockObjective):
    """f(z) = z^T A z + b^T z with z = (x, y) and certified block constants."""

    def __init__(self, A: np.ndarray, b: np.ndarray, d_x: int, L_x: float, L_y: float,
                 mu_x: float, mu_y: float, seed: Optional[int] = None,
                 coupling_rho: float = 0.0, certify: bool = True):
        A = np.asarray(A, dtype=np.float64)
        b = np.asarray(b, dtype=np.float64)
        n = b.size
        if A.shape != (n, n):
            raise InvalidInputError(f"A must be {n}x{n}, got {A.shape}")
        if not np.allclose(A, A.T, rtol=0, atol=1e-12 * max(1.0, np.abs(A).max())):
            raise InvalidInputError("A must be symmetric")
        super().__init__(d_x, n - d_x, L_x, L_y, mu_x, mu_y)
        self.A = A
        self.b = b
        self.seed = seed
        self.coupling_rho = coupling_rho
        self._A_xx = A[:d_x, :d_x]
        self._A_xy = A[:d_x, d_x:]
        self._A_yy = A[d_x:, d_x:]
        self._b_x = b[:d_x]
        self._b_y = b[d_x:]
        self._optimum = None
        if certify:
            self.certify()

    def _value(self, x, y):
        return (x @ (self._A_xx @ x) + 2.0 * (x @ (self._A_xy @ y)) + y @ (self._A_yy @ y)
                + self._b_x @ x + self._b_y @ y)

    def _grad_x(self, x, y):
        return 2.0 * (self._A_xx @ x + self._A_xy @ y) + self._b_x

    def _grad_y(self, x, y):
        return 2.0 * (self._A_xy.T @ x + self._A_yy @ y) + self._b_y

    def certify(self):
        """
        Verify both block inequalities exactly: diag(L) - 2A and
        2A - diag(mu) must be positive semidefinite.
        """
        L_x, L_y = self.smoothness
        mu_x, mu_y = self.strong_convexity
        upper = np.concatenate([np.full(self.d_x, L_x), np.full(self.d_y, L_y)])
        lower = np.concatenate([np.full(self.d_x, mu_x), np.full(self.d_y, mu_y)])
        hessian = 2.0 * self.A
        scale = max(L_x, L_y)
        smooth_gap = linalg.eigvalsh(np.diag(upper) - hessian)[0]
        convex_gap = linalg.eigvalsh(hessian - np.diag(lower))[0]
        if smooth_gap < -CERTIFY_TOL * scale or convex_gap < -CERTIFY_TOL * scale:
            raise InvalidInputError(
                f"stored constants do not certify the quadratic "
                f"(smoothness slack {smooth_gap:.3e}, convexity slack {convex_gap:.3e})"
            )

    def reference_optimum(self) -> Tuple[BlockVector, float]:
        if self._optimum is None:
            self._optimum = quadratic_optimum(self)
        return self._optimum

    def describe(self) -> dict:
        return {
            "kind": "quadratic",
            "d_x": self.d_x,
            "d_y": self.d_y,
            "constants": self.constants.as_dict(),
            "seed": self.seed,
            "coupling_rho": self.coupling_rho,
        }


def _random_rotation(d: int, rng: np.random.Generator) -> np.ndarray:
    if d == 1:
        return np.ones((1, 1))
    return ortho_group.rvs(d, random_state=rng)


def _block_matrix(d: int, mu: float, L: float, rng: np.random.Generator) -> np.ndarray:
    # eigenvalues of A are half those of the Hessian 2A
    eig = rng.uniform(mu / 2.0, L / 2.0, size=d)
    if d >= 2:
        eig[0], eig[-1] = mu / 2.0, L / 2.0
    Q = _random_rotation(d, rng)
    block = (Q * eig) @ Q.T
    return 0.5 * (block + block.T)


def gen_quadratic(d_x: int, d_y: int, mu_x: float, L_x: float, mu_y: float, L_y: float,
                  coupling_rho: float = 0.0, seed: int = 0) -> QuadraticProblem:
    if not (0 < mu_x <= L_x and 0 < mu_y <= L_y):
        raise InvalidInputError(f"need 0 < mu <= L per block, got mu=({mu_x}, {mu_y}), L=({L_x}, {L_y})")
    if not 0.0 <= coupling_rho < 1.0:
        raise InvalidInputError(f"coupling_rho must lie in [0, 1), got {coupling_rho}")

    rng = np.random.default_rng(seed)
    A_x = _block_matrix(d_x, mu_x, L_x, rng)
    A_y = _block_matrix(d_y, mu_y, L_y, rng)
    B = np.zeros((d_x, d_y))
    width = 0.0
    if coupling_rho > 0:
        G = rng.standard_normal((d_x, d_y))
        B = G * (coupling_rho * math.sqrt(mu_x * mu_y) / 2.0 / np.linalg.norm(G, 2))
        width = 2.0 * np.linalg.norm(B, 2)
        if mu_x - width <= 0 or mu_y - width <= 0:
            raise InvalidInputError(
                f"coupling {coupling_rho} is infeasible: 2||B|| = {width:.4g} >= min(mu_x, mu_y)"
            )
    b = rng.standard_normal(d_x + d_y)

    A = np.block([[A_x, B], [B.T, A_y]])
    problem = QuadraticProblem(
        A, b, d_x,
        L_x=L_x + width, L_y=L_y + width, mu_x=mu_x - width, mu_y=mu_y - width,
        seed=seed, coupling_rho=coupling_rho,
    )
    logger.debug(f"Generated quadratic d=({d_x}, {d_y}) seed={seed} coupling={coupling_rho}")
    return problem


def quadratic_optimum(p: QuadraticProblem) -> Tuple[BlockVector, float]:
    z = linalg.solve(2.0 * p.A, -p.b, assume_a="pos")
    point = BlockVector.from_joint(z, p.d_x)
    return point, p.peek_value(point.x, point.y)


class LogisticProblem(BlockObjective):
    """
    (1/n) sum log(1 + exp(-label <features, (x, y)>)) + lambda_x ||x||^2 + lambda_y ||y||^2

    Block x is the first d_x feature columns, block y the next d_y; any
    further columns are dropped.
    """

    def __init__(self, features, labels: np.ndarray, d_x: int, d_y: int,
                 lambda_x: float, lambda_y: float, L_data: float,
                 dataset_ref: Optional[str] = None, fingerprint: Optional[str] = None):
        if lambda_x < 0 or lambda_y < 0:
            raise InvalidInputError(f"regularisation weights must be >= 0, got ({lambda_x}, {lambda_y})")
        super().__init__(d_x, d_y, L_data + 2.0 * lambda_x, L_data + 2.0 * lambda_y,
                         2.0 * lambda_x, 2.0 * lambda_y)
        features = features.tocsr()
        self.n = features.shape[0]
        self.labels = np.asarray(labels, dtype=np.float64)
        self._xi_x = features[:, :d_x].tocsr()
        self._xi_y = features[:, d_x:d_x + d_y].tocsr()
        self.lambda_x = lambda_x
        self.lambda_y = lambda_y
        self.L_data = L_data
        self.dataset_ref = dataset_ref
        self.fingerprint = fingerprint
        self._optimum = None

    def _margins(self, x, y):
        return self.labels * (self._xi_x @ x + self._xi_y @ y)

    def _weights(self, x, y):
        # derivative of the mean loss with respect to each sample's score
        return -self.labels * expit(-self._margins(x, y)) / self.n

    def _value(self, x, y):
        loss = np.logaddexp(0.0, -self._margins(x, y)).mean()
        return loss + self.lambda_x * (x @ x) + self.lambda_y * (y @ y)

    def _grad_x(self, x, y):
        return self._xi_x.T @ self._weights(x, y) + 2.0 * self.lambda_x * x

    def _grad_y(self, x, y):
        return self._xi_y.T @ self._weights(x, y) + 2.0 * self.lambda_y * y

    def _grad(self, x, y):
        w = self._weights(x, y)
        return (self._xi_x.T @ w + 2.0 * self.lambda_x * x,
                self._xi_y.T @ w + 2.0 * self.lambda_y * y)

    def reference_optimum(self) -> Optional[Tuple[BlockVector, float]]:
        return self._optimum

    def attach_optimum(self, optimum: Tuple[BlockVector, float]):
        self._optimum = optimum

    def describe(self) -> dict:
        return {
            "kind": "logistic",
            "dataset": self.dataset_ref,
            "fingerprint": self.fingerprint,
            "d_x": self.d_x,
            "d_y": self.d_y,
            "lambda_x": self.lambda_x,
            "lambda_y": self.lambda_y,
            "L_data": self.L_data,
        }


def estimate_smoothness(data: LibsvmDataset, rtol: float = 1e-6, max_iter: int = 10000, seed: int = 0) -> float:
    """lambda_max(Xi^T Xi) / (4n) by power iteration on the sparse feature matrix."""
    if data.n_samples == 0:
        raise InvalidInputError("cannot estimate smoothness of an empty dataset")
    xi = data.to_csr()
    v = np.random.default_rng(seed).standard_normal(xi.shape[1])
    v /= np.linalg.norm(v)
    estimate = 0.0
    for _ in range(max_iter):
        w = xi.T @ (xi @ v)
        new_estimate = float(np.linalg.norm(w))
        if new_estimate == 0.0:
            break
        v = w / new_estimate
        if abs(new_estimate - estimate) <= rtol * new_estimate:
            estimate = new_estimate
            break
        estimate = new_estimate
    return estimate / (4.0 * data.n_samples)


def make_logistic(data: LibsvmDataset, d_x: int, d_y: int, lambda_x: float, lambda_y: float,
                  L_data: Optional[float] = None, dataset_ref: Optional[str] = None) -> LogisticProblem:
    if d_x < 1 or d_y < 1 or d_x + d_y > data.n_features:
        raise InvalidInputError(
            f"block split ({d_x}, {d_y}) does not fit {data.n_features} features"
        )
    if L_data is None:
        L_data = estimate_smoothness(data)
    dropped = data.n_features - d_x - d_y
    if dropped:
        logger.info(f"Logistic split uses {d_x}+{d_y} features, dropping the last {dropped}")
    return LogisticProblem(
        data.to_csr(d_x + d_y), data.labels, d_x, d_y, lambda_x, lambda_y, L_data,
        dataset_ref=dataset_ref, fingerprint=data.fingerprint(),
    )


class RegularizedProblem(BlockObjective):
    """Adds (mu_reg / 2)||. - center||^2 to the selected blocks of a base objective."""

    def __init__(self, base: BlockObjective, mu_reg: float, center: BlockVector, blocks: Sequence[str]):
        L_x, L_y = base.smoothness
        mu_x, mu_y = base.strong_convexity
        self.sel_x = "x" in blocks
        self.sel_y = "y" in blocks
        super().__init__(
            base.d_x, base.d_y,
            L_x + mu_reg * self.sel_x, L_y + mu_reg * self.sel_y,
            mu_x + mu_reg * self.sel_x, mu_y + mu_reg * self.sel_y,
        )
        self.base = base
        self.mu_reg = mu_reg
        self.center = center

    def _value(self, x, y):
        extra = 0.0
        if self.sel_x:
            dx = x - self.center.x
            extra += dx @ dx
        if self.sel_y:
            dy = y - self.center.y
            extra += dy @ dy
        return self.base._value(x, y) + 0.5 * self.mu_reg * extra

    def _grad_x(self, x, y):
        g = self.base._grad_x(x, y)
        return g + self.mu_reg * (x - self.center.x) if self.sel_x else g

    def _grad_y(self, x, y):
        g = self.base._grad_y(x, y)
        return g + self.mu_reg * (y - self.center.y) if self.sel_y else g

    def describe(self) -> dict:
        return {**self.base.describe(), "regularized": {"mu_reg": self.mu_reg, "blocks": self.blocks}}

    @property
    def blocks(self):
        return [b for b, sel in (("x", self.sel_x), ("y", self.sel_y)) if sel]


def regularize(problem: BlockObjective, eps: float, R: float, center: Optional[BlockVector] = None,
               blocks: Optional[Sequence[str]] = None) -> RegularizedProblem:
    """
    Strong convexity mu = eps / (2 R^2) for the deficient blocks (or the
    ones named in ``blocks``). Solving the result to eps/2 solves the
    original problem to eps whenever the start is within R of a solution.
    """
    if not (eps > 0 and R > 0):
        raise InvalidInputError(f"eps and R must be positive, got eps={eps}, R={R}")
    if blocks is None:
        blocks = [b for b, mu in zip(("x", "y"), problem.strong_convexity) if mu <= 0]
    unknown = set(blocks) - {"x", "y"}
    if unknown:
        raise InvalidInputError(f"unknown blocks {sorted(unknown)}")
    center = center or BlockVector.zeros(problem.d_x, problem.d_y)
    return RegularizedProblem(problem, eps / (2.0 * R * R), center, blocks)


def _reference_key(problem: BlockObjective) -> str:
    canonical = json.dumps(problem.describe(), sort_keys=True)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def compute_reference(problem: BlockObjective, gap_tol: float = 1e-12, max_iter: int = 500000,
                      start: Optional[BlockVector] = None) -> Tuple[BlockVector, float]:
    """
    Long accelerated run over the uncounted channel. Stops once the
    certified bound ||grad f||^2 / (2 min mu) on the gap is below gap_tol.
    """
    L = max(problem.smoothness)
    mu = min(problem.strong_convexity)
    if mu <= 0:
        raise InvalidInputError("reference runs need a strongly convex problem")
    momentum = (math.sqrt(L / mu) - 1.0) / (math.sqrt(L / mu) + 1.0)
    start = start or BlockVector.zeros(problem.d_x, problem.d_y)
    z_prev = start.joint()
    w = z_prev.copy()
    d_x = problem.d_x
    for k in range(max_iter):
        gx, gy = problem.peek_grad(w[:d_x], w[d_x:])
        g = np.concatenate([gx, gy])
        if (g @ g) / (2.0 * mu) <= gap_tol:
            z_prev = w
            break
        z = w - g / L
        w = z + momentum * (z - z_prev)
        z_prev = z
    else:
        logger.warning(f"Reference run hit max_iter={max_iter} before gap tolerance {gap_tol}")
    point = BlockVector.from_joint(z_prev, d_x)
    return point, problem.peek_value(point.x, point.y)


def _read_reference(path: str) -> Optional[Tuple[BlockVector, float]]:
    try:
        with open(path) as fh:
            record = json.load(fh)
        return BlockVector(np.array(record["x"]), np.array(record["y"])), float(record["f_star"])
    except (ValueError, KeyError, TypeError, InvalidInputError) as e:
        logger.warning(f"Ignoring unreadable reference cache {path}: {e}")
        return None


def cached_reference(problem: BlockObjective, data_dir: Optional[str] = None,
                     gap_tol: float = 1e-12) -> Tuple[BlockVector, float]:
    """Reference optimum persisted under ``<data_dir>/reference/<hash>.json``."""
    directory = os.path.join(data_dir or default_data_dir(), "reference")
    path = os.path.join(directory, _reference_key(problem) + ".json")
    if os.path.exists(path):
        cached = _read_reference(path)
        if cached is not None:
            logger.info(f"Using cached reference optimum {path}")
            return cached

    logger.info("Computing high-accuracy reference optimum...")
    point, f_star = compute_reference(problem, gap_tol=gap_tol)
    os.makedirs(directory, exist_ok=True)
    with atomic_path(path) as tmp:
        with open(tmp, "w") as fh:
            json.dump({"problem": problem.describe(), "gap_tol": gap_tol, "f_star": f_star,
                       "x": point.x.tolist(), "y": point.y.tolist()}, fh)
    return point, f_star


def save_problem(problem: BlockObjective, path: str):
    record = {"format_version": ARCHIVE_FORMAT_VERSION, **problem.describe()}
    if isinstance(problem, QuadraticProblem):
        record["A"] = problem.A.tolist()
        record["b"] = problem.b.tolist()
    elif not isinstance(problem, LogisticProblem):
        raise InvalidInputError(f"cannot archive {type(problem).__name__}")
    with open(path, "w") as fh:
        json.dump(record, fh)


def load_problem(path: str, data_dir: Optional[str] = None) -> BlockObjective:
    with open(path) as fh:
        record = json.load(fh)
    version = record.get("format_version")
    if version != ARCHIVE_FORMAT_VERSION:
        raise InvalidInputError(f"unsupported archive format version {version!r}")
    kind = record.get("kind")
    if kind == "quadratic":
        c = record["constants"]
        return QuadraticProblem(
            np.array(record["A"]), np.array(record["b"]), record["d_x"],
            L_x=c["L_x"], L_y=c["L_y"], mu_x=c["mu_x"], mu_y=c["mu_y"],
            seed=record.get("seed"), coupling_rho=record.get("coupling_rho", 0.0),
        )
    if kind == "logistic":
        data = load_dataset(record["dataset"], data_dir)
        return make_logistic(data, record["d_x"], record["d_y"], record["lambda_x"],
                             record["lambda_y"], L_data=record["L_data"], dataset_ref=record["dataset"])
    raise InvalidInputError(f"unknown problem kind {kind!r}")
