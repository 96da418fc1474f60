"""Runtime scaling of the importance engines on synthetic data."""

from __future__ import annotations

import dataclasses
import time
from dataclasses import dataclass

import numpy as np

from ..knn import make_utility
from .config import ExperimentConfig
from .io import load_dataset
from .methods import compute_importance


@dataclass(frozen=True)
class BenchmarkRow:
    n_train: int
    n_validation: int
    seconds: float | None


@dataclass(frozen=True)
class BenchmarkReport:
    method: str
    pipeline_class: str
    rows: tuple[BenchmarkRow, ...]
    slopes: dict[int, float | None]  # fitted log-log slope in N for each validation size


def fit_slope(sizes, seconds) -> float | None:
    """Least-squares slope of log(seconds) against log(size)."""
    if len(sizes) < 2 or any(s is None or s <= 0 for s in seconds):
        return None
    slope, _ = np.polyfit(np.log(sizes), np.log(seconds), 1)
    return float(slope)


def time_importance(config: ExperimentConfig, n_train: int, n_validation: int, repeats: int) -> float:
    """Best-of-``repeats`` wall time, after one untimed warm-up run."""
    cfg = dataclasses.replace(config, synthetic=config.synthetic or "map", synthetic_size=n_train,
                              synthetic_validation=n_validation, synthetic_test=1)
    problem = load_dataset(cfg)
    ut = make_utility(cfg.utility, problem.validation, problem.train, cfg.k,
                      problem.positive_label, problem.empty_label)

    def once():
        start = time.perf_counter()
        compute_importance(cfg.method, problem.train, problem.validation, cfg.k, ut,
                           seed=cfg.seed or 0, truncation=cfg.truncation)
        return time.perf_counter() - start

    once()
    return min(once() for _ in range(max(1, repeats)))


def benchmark(config: ExperimentConfig) -> BenchmarkReport:
    """Time the configured method over the size ladder (and validation sizes)."""
    val_sizes = config.validation_sizes or (config.synthetic_validation,)
    rows = []
    slopes = {}
    for v in val_sizes:
        secs = []
        for n in config.sizes:
            t = time_importance(config, n, v, config.bench_repeats) if config.timing else None
            secs.append(t)
            rows.append(BenchmarkRow(n, v, t))
        slopes[v] = fit_slope(config.sizes, secs) if config.timing else None
    return BenchmarkReport(config.method, config.synthetic or "map", tuple(rows), slopes)
