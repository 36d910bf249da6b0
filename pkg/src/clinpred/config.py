"""Pipeline configuration: plain key=value file, env and flag overrides.

Precedence: explicit flag > CLINPRED_* environment variable > config file
entry > built-in default.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, fields

from .data import TASKS
from .errors import ConfigurationError
from .models import FAMILIES

ENV_PREFIX = "CLINPRED_"


@dataclass
class PipelineConfig:
    cohort: str = ""
    schema: str | None = None
    seed: int = 0
    n_runs: int = 30
    n_chained_iterations: int = 10
    bootstrap_n: int = 100
    alpha: float = 0.05
    out_dir: str = "run_output"
    workers: int = 1
    tasks: tuple[str, ...] = TASKS
    families: tuple[str, ...] = FAMILIES

    def validate(self):
        if not self.cohort:
            raise ConfigurationError("a cohort file path is required")
        if not os.path.exists(self.cohort):
            raise ConfigurationError(f"cohort file not found: {self.cohort!r}")
        if self.schema and not os.path.exists(self.schema):
            raise ConfigurationError(f"schema file not found: {self.schema!r}")
        for name in ("seed",):
            if int(getattr(self, name)) < 0:
                raise ConfigurationError(f"{name} must be non-negative")
        for name in ("n_runs", "n_chained_iterations", "bootstrap_n", "workers"):
            if int(getattr(self, name)) < 1:
                raise ConfigurationError(f"{name} must be positive")
        if not 0.0 < float(self.alpha) < 1.0:
            raise ConfigurationError("alpha must lie in (0, 1)")
        unknown = set(self.tasks) - set(TASKS)
        if unknown:
            raise ConfigurationError(f"unknown tasks: {sorted(unknown)}")
        unknown = set(self.families) - set(FAMILIES)
        if unknown:
            raise ConfigurationError(f"unknown families: {sorted(unknown)}")

    def to_jsonable(self) -> dict:
        return {
            "cohort": self.cohort,
            "schema": self.schema,
            "seed": self.seed,
            "n_runs": self.n_runs,
            "n_chained_iterations": self.n_chained_iterations,
            "bootstrap_n": self.bootstrap_n,
            "alpha": self.alpha,
            "out_dir": self.out_dir,
            "workers": self.workers,
            "tasks": list(self.tasks),
            "families": list(self.families),
        }


_INT_KEYS = {"seed", "n_runs", "n_chained_iterations", "bootstrap_n", "workers"}
_FLOAT_KEYS = {"alpha"}
_LIST_KEYS = {"tasks", "families"}


def _coerce(key: str, raw):
    if isinstance(raw, (int, float, tuple, list)) or raw is None:
        value = raw
    elif key in _INT_KEYS:
        value = int(raw)
    elif key in _FLOAT_KEYS:
        value = float(raw)
    elif key in _LIST_KEYS:
        value = tuple(v.strip() for v in str(raw).split(",") if v.strip())
    else:
        value = str(raw)
    if key in _LIST_KEYS and isinstance(value, list):
        value = tuple(value)
    return value


def parse_config_file(path) -> dict:
    values: dict = {}
    known = {f.name for f in fields(PipelineConfig)}
    with open(path, "r", encoding="utf-8") as fh:
        for raw in fh:
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigurationError(f"bad config line: {line!r}")
            key, _, value = line.partition("=")
            key = key.strip()
            if key not in known:
                raise ConfigurationError(f"unknown config key: {key!r}")
            values[key] = value.strip()
    return values


def load_config(
    file_path=None, overrides: dict | None = None, env: dict | None = None
) -> PipelineConfig:
    """Merge config sources by documented precedence and validate."""
    env = os.environ if env is None else env
    merged: dict = {}
    if file_path:
        merged.update(parse_config_file(file_path))
    for f in fields(PipelineConfig):
        env_key = ENV_PREFIX + f.name.upper()
        if env_key in env:
            merged[f.name] = env[env_key]
    for key, value in (overrides or {}).items():
        if value is not None:
            merged[key] = value
    config = PipelineConfig(**{k: _coerce(k, v) for k, v in merged.items()})
    config.validate()
    return config
