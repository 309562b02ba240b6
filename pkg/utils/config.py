"""Experiment configuration: YAML files validated against a schema declared here."""
import hashlib
import json
import os
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import yaml

from utils.errors import ConfigError

# key -> (type, default); list types are ("list", element type)
COMMON = {
    "seeds": (("list", int), [0]),
    "threads": (int, 1),
    "out": (str, "results"),
    "repetitions": (int, 1),
}

SCHEMA: Dict[str, Dict[str, Tuple[Any, Any]]] = {
    "decay": {
        "sizes": (("list", int), [500]),
        "cases": (("list", str), ["real_spectrum", "kappa_real", "kappa_shifted"]),
        "kappas": (("list", float), [1.0, 1e2, 1e4, 1e6, 1e8]),
        "l_max": (int, 60),
        "h_max": (int, 20),
    },
    "dac_bench": {
        "tests": (("list", int), [1, 2, 3, 4]),
        "sizes": (("list", int), [512, 1024, 2048]),
        "ranks": (("list", int), [2, 4, 8, 16, 32]),
        "rank_size": (int, 2000),
        "size_cap": (int, 4096),
        "n_min": (int, 250),
        "compression_tol": (float, 1e-10),
        "eksm_tol": (float, 1e-8),
        "s_max": (int, 100),
        "parallel": (bool, False),
        "checkpoint": (bool, False),
    },
    "tink_bench": {
        "studies": (("list", str), ["linesearch", "kappa"]),
        "linesearch_size": (int, 2000),
        "linesearch_modes": (("list", str), ["none", "first", "all"]),
        "sizes": (("list", int), [500, 1000, 2000]),
        "kappas": (("list", float), [1.0, 10.0, 100.0]),
        "tol": (float, 1e-12),
        "k_max": (int, 50),
        "s0": (int, 8),
        "zeta": (float, 0.0),
        "alpha": (float, 1e-4),
        "probes": (int, 10),
        "compare_dac": (bool, True),
        "n_min": (int, 250),
        "compression_tol": (float, 1e-10),
        "eksm_tol": (float, 1e-8),
    },
    "allen_cahn": {
        "sizes": (("list", int), [500]),
        "L": (float, 1.0),
        "sigma": (float, 1e-3),
        "gamma_tilde": (float, 0.1),
        "T": (float, 10.0),
        "dt": (float, 0.05),
        "solvers": (("list", str), ["tink", "closed_form"]),
        "uncontrolled": (bool, True),
        "snapshot_stride": (int, 0),
        "tol": (float, 1e-12),
        "probes": (int, 10),
    },
    "cucker_smale": {
        "sizes": (("list", int), [500]),
        "T": (float, 10.0),
        "dt": (float, 0.1),
        "solvers": (("list", str), ["dac"]),
        "orderings": (("list", str), ["sorted", "unsorted"]),
        "uncontrolled": (bool, True),
        "snapshot_stride": (int, 0),
        "n_min": (int, 250),
        "compression_tol": (float, 1e-10),
        "eksm_tol": (float, 1e-8),
        "rtol": (float, 1e-8),
        "atol": (float, 1e-10),
    },
    "verify": {
        "checks": (("list", str), []),
        "quick": (bool, True),
    },
}

SOLVER_KEYS = frozenset({
    "n_min", "compression_tol", "eksm_tol", "s_max", "parallel", "tol", "k_max",
    "s0", "zeta", "alpha", "probes", "rtol", "atol", "dt",
})


def _coerce(key: str, kind, value):
    if isinstance(kind, tuple):
        if not isinstance(value, list):
            raise ConfigError(f"{key}: expected a list, got {type(value).__name__}")
        return [_coerce(f"{key}[{i}]", kind[1], item) for i, item in enumerate(value)]
    if kind is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{key}: expected a boolean, got {value!r}")
        return value
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{key}: expected an integer, got {value!r}")
        return value
    if kind is float:
        if isinstance(value, bool):
            raise ConfigError(f"{key}: expected a number, got {value!r}")
        if isinstance(value, (int, float)):
            return float(value)
        if isinstance(value, str):
            # PyYAML reads exponents without a dot, like 1e-10, as strings
            try:
                return float(value)
            except ValueError:
                pass
        raise ConfigError(f"{key}: expected a number, got {value!r}")
    if not isinstance(value, kind):
        raise ConfigError(f"{key}: expected {kind.__name__}, got {type(value).__name__}")
    return value


@dataclass(frozen=True)
class ExperimentConfig:
    """Resolved configuration of one experiment run."""

    name: str
    sizes: List[int]
    seeds: List[int]
    threads: int
    out: str
    solver: Dict[str, Any] = field(default_factory=dict)
    params: Dict[str, Any] = field(default_factory=dict)

    def as_dict(self) -> Dict[str, Any]:
        return {
            "name": self.name, "sizes": list(self.sizes), "seeds": list(self.seeds),
            "threads": self.threads, "out": self.out,
            "solver": dict(self.solver), "params": dict(self.params),
        }

    @property
    def config_hash(self) -> str:
        """sha256 of the canonical JSON form; ``out`` and ``threads`` do not affect results."""
        payload = self.as_dict()
        payload.pop("out")
        payload.pop("threads")
        canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    def get(self, key: str, default=None):
        if key in self.solver:
            return self.solver[key]
        return self.params.get(key, default)

    @property
    def seed(self) -> int:
        return self.seeds[0]


def resolve_config(name: str, raw: Optional[Dict[str, Any]] = None,
                   overrides: Optional[Dict[str, Any]] = None) -> ExperimentConfig:
    """Validate ``raw`` against the schema of ``name`` and apply CLI overrides.

    Args:
        name: Experiment name (a key of SCHEMA)
        raw: Parsed file contents; a top-level ``experiment`` key must match ``name``
        overrides: ``out``, ``seed`` and ``threads`` from the command line; None values are ignored
    """
    if name not in SCHEMA:
        raise ConfigError(f"unknown experiment {name!r}")
    raw = dict(raw or {})
    declared = raw.pop("experiment", name)
    if declared != name:
        raise ConfigError(f"config is for {declared!r}, not {name!r}")
    schema = {**COMMON, **SCHEMA[name]}
    unknown = sorted(set(raw) - set(schema))
    if unknown:
        raise ConfigError(f"unknown keys for {name}: {', '.join(unknown)}")

    values = {}
    for key, (kind, default) in schema.items():
        values[key] = _coerce(key, kind, raw[key]) if key in raw else default

    overrides = {k: v for k, v in (overrides or {}).items() if v is not None}
    if "out" in overrides:
        values["out"] = str(overrides["out"])
    if "threads" in overrides:
        values["threads"] = _coerce("threads", int, overrides["threads"])
    if "seed" in overrides:
        values["seeds"] = [_coerce("seed", int, overrides["seed"])]

    if values["threads"] < 1:
        raise ConfigError("threads must be at least 1")
    if not values["seeds"]:
        raise ConfigError("seeds must not be empty")
    if values["repetitions"] < 1:
        raise ConfigError("repetitions must be at least 1")

    common = {"seeds", "threads", "out", "sizes"}
    solver = {k: v for k, v in values.items() if k in SOLVER_KEYS}
    params = {k: v for k, v in values.items() if k not in SOLVER_KEYS and k not in common}
    return ExperimentConfig(
        name=name,
        sizes=list(values.get("sizes", [])),
        seeds=values["seeds"],
        threads=values["threads"],
        out=values["out"],
        solver=solver,
        params=params,
    )


def load_config(name: str, path: Optional[str] = None,
                overrides: Optional[Dict[str, Any]] = None) -> ExperimentConfig:
    """Read a YAML config (or use defaults when ``path`` is None) and resolve it."""
    raw: Dict[str, Any] = {}
    if path is not None:
        if not os.path.exists(path):
            raise ConfigError(f"config file not found: {path}")
        with open(path, "r", encoding="utf-8") as handle:
            try:
                raw = yaml.safe_load(handle) or {}
            except yaml.YAMLError as exc:
                raise ConfigError(f"{path}: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
    defaults = {"out": os.getenv("RICCATI_OUT"), "threads": os.getenv("RICCATI_THREADS")}
    if defaults["threads"] is not None:
        defaults["threads"] = int(defaults["threads"])
    merged = {k: v for k, v in defaults.items() if v is not None and k not in raw}
    merged.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return resolve_config(name, raw, merged)
