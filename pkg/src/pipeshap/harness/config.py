"""Experiment configuration and the flat key=value config file format."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path

from ..errors import ConfigError
from ..knn import UTILITY_KINDS

REPAIR_METHODS = ("random", "datascope", "datascope_interactive", "tmc_x10", "tmc_x100", "brute_force")
SHAPLEY_METHODS = ("datascope", "general", "general_pairwise", "map_fast", "1nn_map", "1nn_fork",
                   "tmc_x10", "tmc_x100", "brute_force")
BENCH_METHODS = ("datascope", "general", "map_fast", "1nn_map", "1nn_fork", "tmc_x10", "tmc_x100")
SCALERS = ("none", "standard", "log")
BIAS_MODES = ("linear", "shuffled")


def _split(value) -> tuple[str, ...]:
    if value is None:
        return ()
    if isinstance(value, (list, tuple)):
        return tuple(str(v) for v in value)
    return tuple(s.strip() for s in str(value).split(",") if s.strip())


@dataclass(frozen=True)
class ExperimentConfig:
    # data: either CSV paths or a synthetic generator
    train: str | None = None
    dim: str | None = None
    validation: str | None = None
    test: str | None = None
    synthetic: str | None = None  # map, fork or join
    synthetic_size: int = 1000
    synthetic_validation: int = 100
    synthetic_test: int = 500
    synthetic_dims: int = 0  # join only; 0 picks size // 10
    # schema
    features: tuple[str, ...] = ()
    dim_features: tuple[str, ...] = ()
    label: str = "y"
    group: str | None = None
    id_column: str | None = None
    fact_key: str | None = None
    dim_key: str | None = None
    # pipeline
    scaler: str = "none"
    providers: int = 100
    fork: bool = False
    # model and utility
    k: int = 1
    utility: str = "accuracy"
    positive_label: str | None = None
    empty_label: str | None = None
    method: str = "datascope"
    # corruption
    flip_probability: float = 0.5
    provider_bias_mode: str = "linear"
    # simulation
    checkpoints: int = 100
    repetitions: int = 10
    seed: int | None = None
    truncation: float = 0.001
    # benchmark
    sizes: tuple[int, ...] = (200, 400, 800, 1600, 3200)
    validation_sizes: tuple[int, ...] = ()
    bench_repeats: int = 3
    # output
    out: str | None = None
    format: str = "csv"
    timing: bool = False

    @property
    def pipeline_class(self) -> str:
        if self.synthetic:
            return self.synthetic
        if self.dim:
            return "join"
        return "fork" if self.fork else "map"

    def validate(self, command: str) -> "ExperimentConfig":
        if not 0.0 <= self.flip_probability <= 1.0:
            raise ConfigError(f"flip_probability must be in [0, 1], got {self.flip_probability}")
        if self.checkpoints < 1:
            raise ConfigError("checkpoints must be at least 1")
        if self.repetitions < 1:
            raise ConfigError("repetitions must be at least 1")
        if self.k < 1:
            raise ConfigError("K must be at least 1")
        if self.providers < 1:
            raise ConfigError("providers must be at least 1")
        if self.utility not in UTILITY_KINDS:
            raise ConfigError(f"unknown utility {self.utility!r}; expected one of {', '.join(UTILITY_KINDS)}")
        if self.scaler not in SCALERS:
            raise ConfigError(f"unknown scaler {self.scaler!r}; expected one of {', '.join(SCALERS)}")
        if self.provider_bias_mode not in BIAS_MODES:
            raise ConfigError(f"provider_bias_mode must be one of {', '.join(BIAS_MODES)}")
        if self.format not in ("csv", "json", "both"):
            raise ConfigError(f"format must be csv, json or both, got {self.format!r}")
        if self.truncation < 0:
            raise ConfigError("truncation tolerance must be non-negative")
        allowed = {"shapley": SHAPLEY_METHODS, "repair-sim": REPAIR_METHODS, "benchmark": BENCH_METHODS}[command]
        if self.method not in allowed:
            raise ConfigError(f"method {self.method!r} is not valid for {command}; expected one of {', '.join(allowed)}")
        if command in ("repair-sim", "benchmark") and self.seed is None:
            raise ConfigError(f"{command} requires --seed")
        if self.synthetic is not None:
            if self.synthetic not in ("map", "fork", "join"):
                raise ConfigError(f"synthetic must be map, fork or join, got {self.synthetic!r}")
        elif command != "benchmark":
            needed = ["train", "validation"] + (["test"] if command == "repair-sim" else [])
            for name in needed:
                if getattr(self, name) is None:
                    raise ConfigError(f"--{name} is required unless --synthetic is given")
            if not self.features:
                raise ConfigError("--features is required for CSV inputs")
            if self.dim is not None and (self.fact_key is None or self.dim_key is None):
                raise ConfigError("a dimension table needs --fact-key and --dim-key")
            if self.dim is not None and self.fork:
                raise ConfigError("a pipeline may not both fork and join")
        if self.utility == "eqodds_diff" and self.synthetic is None and self.group is None \
                and command != "benchmark":
            raise ConfigError("eqodds_diff needs --group")
        return self

    def echo(self) -> dict:
        """Plain-data view of every field, for report metadata."""
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            out[f.name] = list(v) if isinstance(v, tuple) else v
        return out


_INT = {"synthetic_size", "synthetic_validation", "synthetic_test", "synthetic_dims", "providers", "k",
        "checkpoints", "repetitions", "seed", "bench_repeats"}
_FLOAT = {"flip_probability", "truncation"}
_BOOL = {"fork", "timing"}
_TUPLE = {"features", "dim_features"}
_INT_TUPLE = {"sizes", "validation_sizes"}


def coerce(name: str, value):
    """Convert a raw string (from a config file) to the field's type."""
    if value is None:
        return None
    try:
        if name in _INT:
            return int(value)
        if name in _FLOAT:
            return float(value)
        if name in _BOOL:
            if isinstance(value, bool):
                return value
            s = str(value).strip().lower()
            if s in ("1", "true", "yes", "on"):
                return True
            if s in ("0", "false", "no", "off"):
                return False
            raise ValueError(value)
        if name in _TUPLE:
            return _split(value)
        if name in _INT_TUPLE:
            return tuple(int(v) for v in _split(value))
    except ValueError:
        raise ConfigError(f"invalid value {value!r} for {name}") from None
    return value


FIELD_NAMES = tuple(f.name for f in fields(ExperimentConfig))


def read_config_file(path: str | Path) -> dict:
    """Parse a flat ``key = value`` file. Blank lines and ``#`` comments are ignored."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc.strerror}") from None
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_").lower()
        if key not in FIELD_NAMES:
            raise ConfigError(f"{path}:{lineno}: unknown option {key!r}")
        out[key] = coerce(key, value)
    return out


def make_config(file_values: dict, flag_values: dict) -> ExperimentConfig:
    """Config file values, overridden by explicitly given flags."""
    merged = {**file_values, **{k: v for k, v in flag_values.items() if v is not None}}
    merged = {k: coerce(k, v) for k, v in merged.items()}
    return dataclasses.replace(ExperimentConfig(), **merged)
