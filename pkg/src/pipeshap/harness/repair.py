"""Importance-driven label repair simulation."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError
from ..knn import ValidationTuple, full_metric, make_utility, ranking, vote
from ..provenance import TrackedDataset
from ..shapley.game import BRUTE_FORCE_MAX_VARS
from .config import ExperimentConfig
from .corruption import corrupt_labels, repair_units
from .io import Problem, load_dataset
from .methods import compute_importance, repair_key


@dataclass(frozen=True)
class CheckpointReport:
    fraction: float
    metric_median: float
    metric_p10: float
    metric_p90: float
    importance_seconds: float | None


@dataclass(frozen=True)
class RepairTrace:
    """One repetition: the repair order and the metric at every checkpoint."""

    order: tuple[str, ...]
    metrics: np.ndarray
    seconds: np.ndarray
    labels: np.ndarray
    truth: np.ndarray


def checkpoint_counts(n_units: int, checkpoints: int) -> list[int]:
    """Units repaired by checkpoint c of C, for c = 0..C."""
    return [round(c * n_units / checkpoints) for c in range(checkpoints + 1)]


class HoldoutMetric:
    """Test-set metric of the K-NN model as training labels change.

    Features never change during repair, so each test point's top-K training
    tuples are found once.
    """

    def __init__(self, train: TrackedDataset, test_x: np.ndarray, test_y: np.ndarray, test_groups,
                 k: int, kind: str, positive: int):
        self.n_labels = len(train.labels)
        self.test_y, self.groups = test_y, test_groups
        self.kind, self.positive = kind, positive
        self.top = np.array([ranking(train.feature_matrix, train.rank_array, ValidationTuple(tuple(q), 0))[:k]
                             for q in np.asarray(test_x, dtype=float)], dtype=np.int64)

    def __call__(self, labels: np.ndarray) -> float:
        if len(self.test_y) == 0:
            return 0.0
        votes = np.eye(self.n_labels, dtype=np.int64)[labels[self.top]].sum(axis=1)
        preds = np.array([vote(v) for v in votes], dtype=np.int64)
        return full_metric(self.kind, preds, self.test_y, self.groups, self.positive)


def run_repetition(problem: Problem, config: ExperimentConfig, seq: np.random.SeedSequence,
                   evaluator: HoldoutMetric | None = None) -> RepairTrace:
    corrupt_seq, method_seq = seq.spawn(2)
    noisy, truth = corrupt_labels(problem.train, config.flip_probability,
                                  np.random.default_rng(corrupt_seq), config.provider_bias_mode)
    if evaluator is None:
        evaluator = HoldoutMetric(problem.train, problem.test_x, problem.test_y, problem.test_groups,
                                  config.k, config.utility, problem.positive_label)
    units, owned = repair_units(noisy)
    if config.method == "brute_force" and len(noisy.variables) > BRUTE_FORCE_MAX_VARS:
        raise ConfigError(f"brute_force is capped at {BRUTE_FORCE_MAX_VARS} variables, "
                          f"dataset has {len(noisy.variables)}")
    labels = noisy.label_array.copy()
    tmc_seed = int(method_seq.generate_state(1)[0])
    spent = 0.0

    def importance(current: TrackedDataset) -> dict[str, float]:
        nonlocal spent
        start = time.perf_counter()
        ut = make_utility(config.utility, problem.validation, current, config.k,
                          problem.positive_label, problem.empty_label)
        rep = compute_importance(config.method, current, problem.validation, config.k, ut,
                                 seed=tmc_seed, truncation=config.truncation)
        spent += time.perf_counter() - start
        return repair_key(rep, config.utility)

    counts = checkpoint_counts(len(units), config.checkpoints)
    metrics = np.zeros(len(counts))
    seconds = np.zeros(len(counts))
    if config.method == "random":
        perm = np.random.default_rng(method_seq).permutation(len(units))
        order = [units[i] for i in perm]
    elif config.method == "datascope_interactive":
        order = None
    else:
        key = importance(noisy)
        order = sorted(units, key=lambda u: key[u])  # stable: ties keep variable order
    metrics[0] = evaluator(labels)
    seconds[0] = spent
    done: list[str] = []
    remaining = list(units)
    c = 1
    for step in range(len(units)):
        if order is None:
            key = importance(noisy.with_labels(labels))
            unit = min(remaining, key=lambda u: key[u])
            remaining.remove(unit)
        else:
            unit = order[step]
        ix = owned[unit]
        labels[ix] = truth[ix]
        done.append(unit)
        while c < len(counts) and counts[c] <= step + 1:
            metrics[c] = evaluator(labels)
            seconds[c] = spent
            c += 1
    for c in range(c, len(counts)):
        # more checkpoints than units: later checkpoints repeat the final state
        metrics[c] = evaluator(labels)
        seconds[c] = spent
    return RepairTrace(tuple(done), metrics, seconds, labels, truth)


def summarize(traces: list[RepairTrace], checkpoints: int, timing: bool) -> list[CheckpointReport]:
    metrics = np.array([t.metrics for t in traces])
    seconds = np.array([t.seconds for t in traces])
    p10, med, p90 = np.percentile(metrics, [10, 50, 90], axis=0)
    secs = np.median(seconds, axis=0)
    return [CheckpointReport(c / checkpoints, float(med[c]), float(p10[c]), float(p90[c]),
                             float(secs[c]) if timing else None)
            for c in range(checkpoints + 1)]


def simulate(config: ExperimentConfig, problem: Problem | None = None) -> list[RepairTrace]:
    """All repetitions; repetition r draws from child r of SeedSequence(seed)."""
    if config.seed is None:
        raise ConfigError("the repair simulation requires a seed")
    if problem is None:
        problem = load_dataset(config)
    if len(problem.test_y) == 0:
        raise ConfigError("the repair simulation needs a non-empty test set")
    evaluator = HoldoutMetric(problem.train, problem.test_x, problem.test_y, problem.test_groups,
                              config.k, config.utility, problem.positive_label)
    seqs = np.random.SeedSequence(config.seed).spawn(config.repetitions)
    return [run_repetition(problem, config, s, evaluator) for s in seqs]


def run_repair_simulation(config: ExperimentConfig, problem: Problem | None = None) -> list[CheckpointReport]:
    return summarize(simulate(config, problem), config.checkpoints, config.timing)
