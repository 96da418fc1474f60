"""Truncated Monte Carlo Shapley estimation over variable permutations."""

from __future__ import annotations

import time
from typing import Sequence

import numpy as np

from ..errors import PipeshapError
from ..knn import TupleWiseUtility, ValidationTuple
from ..provenance import TrackedDataset
from .game import SubsetGame
from .report import ShapleyReport

DEFAULT_TRUNCATION = 0.001


def tmc_shapley(d: TrackedDataset, val_set: Sequence[ValidationTuple], k: int, ut: TupleWiseUtility,
                iterations: int, truncation_tolerance: float | None = DEFAULT_TRUNCATION,
                seed: int = 0) -> ShapleyReport:
    """Permutation-sampling estimate of every variable's Shapley value.

    Permutation r is drawn from the r-th child of ``SeedSequence(seed)``, so
    results do not depend on evaluation order. A scan stops early once the
    prefix utility is within ``truncation_tolerance * |u(full)|`` of the full
    utility; remaining marginals count as zero. ``None`` disables truncation.
    """
    if iterations < 0:
        raise PipeshapError("iterations must be non-negative")
    if truncation_tolerance is not None and truncation_tolerance < 0:
        raise PipeshapError("truncation tolerance must be non-negative")
    start = time.perf_counter()
    game = SubsetGame(d, val_set, k, ut)
    n = len(d.variables)
    samples = np.zeros((iterations, n))
    if iterations and n:
        u_empty = game.cached_value(np.zeros(n, dtype=bool))
        u_full = game.cached_value(np.ones(n, dtype=bool))
        if truncation_tolerance is None:
            threshold = None
        else:
            threshold = truncation_tolerance * (abs(u_full) if u_full else 1.0)
        for r, child in enumerate(np.random.SeedSequence(seed).spawn(iterations)):
            perm = np.random.default_rng(child).permutation(n)
            on = np.zeros(n, dtype=bool)
            prev = u_empty
            for var in perm:
                if threshold is not None and abs(u_full - prev) < threshold:
                    break
                on[var] = True
                cur = game.cached_value(on)
                samples[r, var] = cur - prev
                prev = cur
    values = samples.mean(axis=0) if iterations else np.zeros(n)
    if iterations > 1:
        stderr = samples.std(axis=0, ddof=1) / np.sqrt(iterations)
    else:
        stderr = np.full(n, np.inf)
    return ShapleyReport(d.variables.ids, values, f"tmc_{iterations}", k, ut.kind,
                         time.perf_counter() - start, seed=seed, stderr=stderr)
