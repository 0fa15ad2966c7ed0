"""
Experiment Configuration
JSON experiment documents parsed into frozen dataclasses, named presets
for the two experiment families, and command-line overrides.
"""

import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from src.core.oracle import InvalidInputError

PROBLEM_KINDS = ("quadratic", "logistic", "archive")
METHOD_NAMES = ("bam", "nag", "acdm", "lincoupling")
RANDOMIZED_METHODS = ("acdm", "lincoupling")


class ConfigError(InvalidInputError):
    """Experiment config failed validation."""


@dataclass(frozen=True)
class ProblemSpec:
    kind: str
    d_x: Optional[int] = None
    d_y: Optional[int] = None
    # quadratic
    mu_x: Optional[float] = None
    L_x: Optional[float] = None
    mu_y: Optional[float] = None
    L_y: Optional[float] = None
    coupling_rho: float = 0.0
    seed: Optional[int] = None
    # logistic
    dataset: Optional[str] = None
    lambda_x: Optional[float] = None
    lambda_y: Optional[float] = None
    L_data: Optional[float] = None
    # archive
    path: Optional[str] = None
    # regularization trick for blocks that are only convex
    regularize_eps: Optional[float] = None
    regularize_R: Optional[float] = None

    def __post_init__(self):
        if self.kind not in PROBLEM_KINDS:
            raise ConfigError(f"problem.kind must be one of {PROBLEM_KINDS}, got {self.kind!r}")
        if self.kind == "quadratic":
            _require(self, "problem", ("d_x", "d_y", "mu_x", "L_x", "mu_y", "L_y"))
        elif self.kind == "logistic":
            _require(self, "problem", ("dataset", "d_x", "d_y", "lambda_x", "lambda_y"))
        else:
            _require(self, "problem", ("path",))
        if (self.regularize_eps is None) != (self.regularize_R is None):
            raise ConfigError("problem.regularize_eps and problem.regularize_R must be given together")


@dataclass(frozen=True)
class MethodSpec:
    name: str
    diagnostics: bool = False
    max_doublings: int = 30

    def __post_init__(self):
        if self.name not in METHOD_NAMES:
            raise ConfigError(f"unknown method {self.name!r}; available: {METHOD_NAMES}")
        if self.diagnostics and self.name != "bam":
            raise ConfigError(f"diagnostics are only recorded by bam, not {self.name!r}")

    @property
    def randomized(self) -> bool:
        return self.name in RANDOMIZED_METHODS


@dataclass(frozen=True)
class StoppingSpec:
    eps: Optional[float] = 1e-6
    max_iter: Optional[int] = None
    psi_ratio: Optional[float] = None

    def __post_init__(self):
        if self.eps is None and self.max_iter is None and self.psi_ratio is None:
            raise ConfigError("stopping needs eps, max_iter or psi_ratio")
        if self.eps is not None and self.eps <= 0:
            raise ConfigError(f"stopping.eps must be positive, got {self.eps}")


@dataclass(frozen=True)
class ExperimentConfig:
    problem: ProblemSpec
    methods: Tuple[MethodSpec, ...]
    stopping: StoppingSpec = field(default_factory=StoppingSpec)
    seeds: Tuple[int, ...] = (0,)
    name: str = "experiment"
    out: str = "results"
    stride: Optional[int] = None
    record_wall_time: bool = False
    workers: int = 1

    def __post_init__(self):
        if not self.methods:
            raise ConfigError("at least one method is required")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        if self.stride is not None and self.stride < 1:
            raise ConfigError(f"stride must be >= 1, got {self.stride}")
        if self.workers < 1:
            raise ConfigError(f"workers must be >= 1, got {self.workers}")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def config_hash(self) -> str:
        """SHA-256 of the canonical JSON; the output directory is excluded."""
        record = self.to_dict()
        record.pop("out")
        canonical = json.dumps(record, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _require(spec, section: str, names):
    missing = [n for n in names if getattr(spec, n) is None]
    if missing:
        raise ConfigError(f"{section} of kind {spec.kind!r} is missing {missing}")


def _expected_type(f: dataclasses.Field):
    hint = str(f.type)
    if "bool" in hint:
        return (bool,)
    if "int" in hint and "Tuple" not in hint:
        return (int,)
    if "float" in hint:
        return (int, float)
    if "str" in hint:
        return (str,)
    return None


def _build(cls, raw, section: str):
    if not isinstance(raw, dict):
        raise ConfigError(f"{section} must be an object, got {type(raw).__name__}")
    known = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(raw) - set(known))
    if unknown:
        raise ConfigError(f"unknown keys in {section}: {unknown}")
    for name, value in raw.items():
        expected = _expected_type(known[name])
        if value is None or expected is None:
            continue
        # bool is an int subclass; keep them apart
        if isinstance(value, bool) != (bool in expected) or not isinstance(value, expected):
            raise ConfigError(f"{section}.{name} has the wrong type ({type(value).__name__})")
    return cls(**raw)


def problem_from_dict(raw: dict) -> ProblemSpec:
    return _build(ProblemSpec, raw, "problem")


def config_from_dict(raw: dict) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    known = {f.name for f in dataclasses.fields(ExperimentConfig)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(f"unknown keys in config: {unknown}")
    for key in ("problem", "methods"):
        if key not in raw:
            raise ConfigError(f"config is missing {key!r}")

    methods = raw["methods"]
    if not isinstance(methods, list):
        raise ConfigError("methods must be a list")
    method_specs = tuple(
        _build(MethodSpec, {"name": m} if isinstance(m, str) else m, f"methods[{i}]")
        for i, m in enumerate(methods)
    )
    seeds = raw.get("seeds", [0])
    if not isinstance(seeds, list) or not all(isinstance(s, int) and not isinstance(s, bool) for s in seeds):
        raise ConfigError("seeds must be a list of integers")

    rest = {k: v for k, v in raw.items() if k not in ("problem", "methods", "stopping", "seeds")}
    top = _build(_TopLevel, rest, "config")
    return ExperimentConfig(
        problem=problem_from_dict(raw["problem"]),
        methods=method_specs,
        stopping=_build(StoppingSpec, raw.get("stopping", {}), "stopping"),
        seeds=tuple(seeds),
        **dataclasses.asdict(top),
    )


@dataclass(frozen=True)
class _TopLevel:
    name: str = "experiment"
    out: str = "results"
    stride: Optional[int] = None
    record_wall_time: bool = False
    workers: int = 1


def load_config(path: str) -> ExperimentConfig:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path} is not valid JSON: {e}") from None
    return config_from_dict(raw)


def apply_overrides(config: ExperimentConfig, seed: Optional[int] = None, out: Optional[str] = None,
                    eps: Optional[float] = None, methods: Optional[List[str]] = None,
                    stride: Optional[int] = None) -> ExperimentConfig:
    """Command-line flags replace the matching config fields."""
    changes = {}
    if seed is not None:
        changes["seeds"] = (seed,)
    if out is not None:
        changes["out"] = out
    if eps is not None:
        changes["stopping"] = dataclasses.replace(config.stopping, eps=eps)
    if methods:
        by_name = {m.name: m for m in config.methods}
        changes["methods"] = tuple(by_name.get(name) or MethodSpec(name) for name in methods)
    if stride is not None:
        changes["stride"] = stride
    return dataclasses.replace(config, **changes) if changes else config


def _quadratic_sweep(L_y: float) -> dict:
    return {
        "name": f"quadratic-Ly{L_y:g}",
        "problem": {"kind": "quadratic", "d_x": 100, "d_y": 10, "mu_x": 0.1, "L_x": 50.0,
                    "mu_y": 0.1, "L_y": L_y, "seed": 0},
        "methods": ["bam", "nag", "acdm", "lincoupling"],
        "stopping": {"eps": 1e-6},
        "seeds": [0, 1, 2, 3, 4],
    }


def _a1a_sweep(mu_y: float) -> dict:
    return {
        "name": f"a1a-muy{mu_y:g}",
        "problem": {"kind": "logistic", "dataset": "a1a", "d_x": 100, "d_y": 19,
                    "lambda_x": 0.005, "lambda_y": mu_y / 2.0},
        "methods": ["bam", "nag", "acdm", "lincoupling"],
        "stopping": {"eps": 1e-6},
        "seeds": [0, 1, 2, 3, 4],
    }


# Named experiment families; each entry is a sweep of configs
PRESETS: Dict[str, List[dict]] = {
    "figure1-quadratic": [_quadratic_sweep(L_y) for L_y in (500.0, 5000.0, 50000.0)],
    "figure2-a1a": [_a1a_sweep(mu_y) for mu_y in (0.002, 1e-4, 5e-5)],
    "smoke": [{
        "name": "smoke",
        "problem": {"kind": "quadratic", "d_x": 8, "d_y": 4, "mu_x": 1.0, "L_x": 20.0,
                    "mu_y": 1.0, "L_y": 50.0, "coupling_rho": 0.2, "seed": 0},
        "methods": [{"name": "bam", "diagnostics": True}, "nag", "acdm", "lincoupling"],
        "stopping": {"eps": 1e-8},
        "seeds": [0],
    }],
}


def preset_configs(name: str, out: Optional[str] = None) -> List[ExperimentConfig]:
    """The sweep behind a preset; each config writes into ``<out>/<config name>``."""
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; available: {sorted(PRESETS)}")
    base = out or os.path.join("results", name)
    configs = []
    for raw in PRESETS[name]:
        config = config_from_dict(raw)
        configs.append(dataclasses.replace(config, out=os.path.join(base, config.name)))
    return configs
