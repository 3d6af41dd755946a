"""Experiment configuration: dataclasses, JSON schema and stable hashing."""
from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import jsonschema

ALGORITHMS = ("macopt", "macopt_h", "ucb", "safemac", "passivemac", "two_stage")

_KERNEL_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "family": {"enum": ["matern52", "rbf"]},
        "lengthscale": {"type": "number", "exclusiveMinimum": 0},
        "output_scale": {"type": "number", "exclusiveMinimum": 0},
    },
}

CONFIG_SCHEMA: dict[str, Any] = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "safecoverage experiment",
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "algorithm": {"enum": list(ALGORITHMS)},
        "environment": {"type": "string", "pattern": "^(gp|obstacle|file:.+)$"},
        "n_agents": {"type": "integer", "minimum": 1},
        "grid": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "width": {"type": "integer", "minimum": 1},
                "height": {"type": "integer", "minimum": 1},
                "spacing": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "r": {"type": "integer", "minimum": 0},
        "kernel_rho": _KERNEL_SCHEMA,
        "kernel_q": _KERNEL_SCHEMA,
        "noise_var_rho": {"type": "number", "exclusiveMinimum": 0},
        "noise_var_q": {"type": "number", "exclusiveMinimum": 0},
        "beta_sqrt_rho": {"type": "number", "exclusiveMinimum": 0},
        "beta_sqrt_q": {"type": "number", "exclusiveMinimum": 0},
        "eps_rho": {"type": "number", "minimum": 0},
        "eps_q": {"type": "number", "minimum": 0},
        "lipschitz": {"type": ["number", "null"], "exclusiveMinimum": 0},
        "max_rounds": {"type": "integer", "minimum": 1},
        "seeds": {
            "oneOf": [
                {"type": "array", "items": {"type": "integer", "minimum": 0}},
                {"type": "string", "pattern": r"^\d+\.\.\d+$"},
            ]
        },
        "output_dir": {"type": "string"},
        "wall_clock_limit": {"type": ["number", "null"], "exclusiveMinimum": 0},
        "path_restricted": {"type": "boolean"},
        "density_transform": {"enum": ["shift", "clamp"]},
    },
}


class ConfigError(ValueError):
    """Invalid experiment configuration; ``code`` is a short machine-readable tag."""

    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


@dataclass(frozen=True)
class GridConfig:
    width: int = 30
    height: int = 30
    spacing: float = 0.1


@dataclass(frozen=True)
class KernelConfig:
    family: str = "matern52"
    lengthscale: float = 2.0
    output_scale: float = 1.0


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment; every field has a default so ``{}`` is a valid config."""

    algorithm: str = "safemac"
    environment: str = "obstacle"
    n_agents: int = 3
    grid: GridConfig = field(default_factory=GridConfig)
    r: int = 5
    kernel_rho: KernelConfig = field(default_factory=KernelConfig)
    kernel_q: KernelConfig = field(default_factory=KernelConfig)
    noise_var_rho: float = 1e-3
    noise_var_q: float = 1e-3
    beta_sqrt_rho: float = 3.0
    beta_sqrt_q: float = 3.0
    eps_rho: float = 0.15
    eps_q: float = 0.1
    lipschitz: float | None = None
    max_rounds: int = 300
    seeds: tuple[int, ...] = (0,)
    output_dir: str = "results"
    wall_clock_limit: float | None = None
    path_restricted: bool = True
    density_transform: str = "shift"

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["seeds"] = list(self.seeds)
        return d

    def identity(self) -> dict:
        """Fields that determine a run's outcome (seed list and output location excluded)."""
        d = self.to_dict()
        for k in ("seeds", "output_dir", "wall_clock_limit"):
            d.pop(k)
        return d

    @property
    def hash(self) -> str:
        blob = json.dumps(self.identity(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:12]

    @property
    def is_file_environment(self) -> bool:
        return self.environment.startswith("file:")

    @property
    def environment_path(self) -> Path:
        return Path(self.environment[len("file:"):])


def parse_seeds(spec) -> tuple[int, ...]:
    """``"a..b"`` (inclusive), ``"1,2,5"``, a single integer, or a list of integers."""
    if isinstance(spec, (list, tuple)):
        return tuple(int(s) for s in spec)
    if isinstance(spec, int):
        return (spec,)
    text = str(spec).strip()
    try:
        if ".." in text:
            lo, hi = text.split("..")
            lo, hi = int(lo), int(hi)
            if hi < lo:
                raise ValueError
            return tuple(range(lo, hi + 1))
        return tuple(int(s) for s in text.split(",") if s.strip())
    except ValueError:
        raise ConfigError("bad_seeds", f"cannot parse seed specification {spec!r}") from None


def config_from_dict(data: dict) -> ExperimentConfig:
    try:
        jsonschema.validate(data, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError("schema", f"{where}: {exc.message}") from None
    kw = dict(data)
    if "grid" in kw:
        kw["grid"] = GridConfig(**kw["grid"])
    for key in ("kernel_rho", "kernel_q"):
        if key in kw:
            kw[key] = KernelConfig(**kw[key])
    if "seeds" in kw:
        kw["seeds"] = parse_seeds(kw["seeds"])
    return ExperimentConfig(**kw)


def load_config(path: str | Path) -> ExperimentConfig:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError("not_found", f"config file {path} does not exist") from None
    except json.JSONDecodeError as exc:
        raise ConfigError("parse_error", f"{path}: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("schema", "config must be a JSON object")
    return config_from_dict(data)
