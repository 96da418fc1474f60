"""Closed-form Shapley values for map-class (and 1-NN fork) pipelines.

In a map pipeline each tuple owns one variable. For a boundary tuple b at
0-based rank j, a target i ranked above it changes the prediction only when
exactly K-1 of the other j-1 tuples above b are present. Summing the Shapley
weights over every choice below b (dummy variables included) gives

    sum_s C(L+Z, s) / (|A| C(|A|-1, K+s)) = 1 / ((j+1) C(j, K)),

independent of the number of tuples below. Coalitions with fewer than K
tuples contribute 1 / (M C(M-1, m)) for m tuples, M being the tuple count.
"""

from __future__ import annotations

import math
import time
from itertools import product
from typing import Sequence

import numpy as np

from ..errors import PipeshapError
from ..knn import TupleWiseUtility, ValidationTuple, ranking, vote
from ..provenance import TrackedDataset
from .report import ShapleyReport


def compositions(total: int, parts: int) -> list[tuple[int, ...]]:
    return [c for c in product(range(total + 1), repeat=parts) if sum(c) == total]


def boundary_weight(j: int, k: int) -> float:
    """Shapley mass of coalitions whose K-th tuple sits at rank j (target above it)."""
    if j < k:
        return 0.0
    return 1.0 / ((j + 1) * math.comb(j, k))


def _require_map(d: TrackedDataset):
    if d.pipeline_class != "map":
        raise PipeshapError(f"this fast path needs a map-class dataset, got {d.pipeline_class!r}")


def _tuple_vars(d: TrackedDataset) -> np.ndarray:
    idx = d.variables.index
    return np.array([idx[next(iter(t.provenance.variables))] for t in d.tuples], dtype=np.int64)


def _u_gamma(ut, t_val, n_labels, k):
    """Lookup u_Gamma over tallies with sum <= k, keyed by tuple."""
    per_label = ut.label_values(t_val)
    empty = ut.empty_value(t_val)
    out = {}
    for c in product(range(k + 1), repeat=n_labels):
        if sum(c) <= k:
            out[c] = per_label[vote(c)] if any(c) else empty
    return out


def _binom_table(n_max: int, k_max: int) -> np.ndarray:
    """tab[n, r] = C(n, r) as floats, for n <= n_max + 1 and r <= k_max."""
    n = np.arange(n_max + 2, dtype=float)
    tab = np.ones((n_max + 2, k_max + 1))
    for r in range(1, k_max + 1):
        tab[:, r] = np.maximum(tab[:, r - 1] * (n - r + 1) / r, 0.0)
    return tab


def _map_fast_one(y_sorted: np.ndarray, ug: dict, k: int, n_labels: int, block: int) -> np.ndarray:
    """Per-rank Shapley values for one validation tuple, general K, O(M^2)."""
    m = len(y_sorted)
    phi = np.zeros(m)
    if m == 0:
        return phi
    onehot = np.eye(n_labels, dtype=np.int64)[y_sorted]  # (m, labels)
    prefix = np.vstack([np.zeros((1, n_labels), dtype=np.int64), np.cumsum(onehot, axis=0)])[:-1]
    binom = _binom_table(m, k)
    w = np.array([boundary_weight(j, k) for j in range(m)])
    e = np.eye(n_labels, dtype=np.int64)

    def plus(c, y):
        return tuple(int(a) for a in np.asarray(c) + e[y])

    comps = compositions(k - 1, n_labels)
    # delta[c][y_i, y_b] = u(c + e_{y_i}) - u(c + e_{y_b})
    deltas = []
    for c in comps:
        dm = np.array([[ug[plus(c, yi)] - ug[plus(c, yb)] for yb in range(n_labels)]
                       for yi in range(n_labels)])
        deltas.append((np.array(c), dm))
    cols = np.arange(m)
    for lo in range(0, m, block):
        rows = np.arange(lo, min(lo + block, m))
        yi = y_sorted[rows]
        # counts of each label above b, excluding the target
        n_above = prefix[None, :, :] - onehot[rows][:, None, :]  # (rows, m, labels)
        above = cols[None, :] > rows[:, None]
        acc = np.zeros((len(rows), m))
        for c, dm in deltas:
            coef = np.ones((len(rows), m))
            for y in range(n_labels):
                if c[y]:
                    coef *= binom[np.maximum(n_above[:, :, y], 0), c[y]]
            acc += coef * dm[yi[:, None], y_sorted[None, :]]
        phi[rows] = (acc * above * w[None, :]).sum(axis=1)
    # coalitions with fewer than K tuples
    totals = onehot.sum(axis=0)
    for size in range(min(k, m)):
        wt = 1.0 / (m * math.comb(m - 1, size))
        for c in compositions(size, n_labels):
            c = np.array(c)
            n_other = totals[None, :] - onehot  # (m, labels)
            coef = np.prod([binom[n_other[:, y], c[y]] for y in range(n_labels)], axis=0)
            base = ug[tuple(int(a) for a in c)]
            gain = np.array([ug[plus(c, y)] for y in range(n_labels)])[y_sorted] - base
            phi += wt * coef * gain
    return phi


def shapley_knn_map_fast(d: TrackedDataset, val_set: Sequence[ValidationTuple], k: int,
                         ut: TupleWiseUtility, block: int = 256) -> ShapleyReport:
    """Exact Shapley values for map pipelines and any K, quadratic in |D|."""
    _require_map(d)
    if k < 1:
        raise PipeshapError("K must be at least 1")
    start = time.perf_counter()
    n_labels = len(d.labels)
    tvar = _tuple_vars(d)
    per_val = np.zeros((len(val_set), len(d.variables)))
    for r, t in enumerate(val_set):
        order = ranking(d.feature_matrix, d.rank_array, t)
        ug = _u_gamma(ut, t, n_labels, k)
        phi_rank = _map_fast_one(d.label_array[order], ug, k, n_labels, block)
        per_val[r, tvar[order]] = phi_rank
    values = ut.w * per_val.sum(axis=0)
    return ShapleyReport(d.variables.ids, values, "map_fast", k, ut.kind,
                         time.perf_counter() - start, per_validation=per_val)


def _onenn_ranked(u_sorted: np.ndarray, u_empty: float) -> np.ndarray:
    """1-NN values by rank: u_j/(j+1) - u_empty/M - sum_{l>j} u_l/(l(l+1))."""
    m = len(u_sorted)
    if m == 0:
        return np.zeros(0)
    ranks = np.arange(m, dtype=float)
    tail = np.zeros(m)
    terms = np.zeros(m)
    terms[1:] = u_sorted[1:] / (ranks[1:] * (ranks[1:] + 1.0))
    # tail[j] = sum of terms strictly after j
    tail[:-1] = np.cumsum(terms[::-1])[::-1][1:]
    return u_sorted / (ranks + 1.0) - u_empty / m - tail


def shapley_1nn_map(d: TrackedDataset, val_set: Sequence[ValidationTuple],
                    ut: TupleWiseUtility) -> ShapleyReport:
    """Exact 1-NN Shapley values for map pipelines in O(|D| log |D|) per validation tuple."""
    _require_map(d)
    start = time.perf_counter()
    tvar = _tuple_vars(d)
    per_val = np.zeros((len(val_set), len(d.variables)))
    labels = d.label_array
    for r, t in enumerate(val_set):
        order = ranking(d.feature_matrix, d.rank_array, t)
        u = ut.label_values(t)[labels[order]]
        per_val[r, tvar[order]] = _onenn_ranked(u, ut.empty_value(t))
    values = ut.w * per_val.sum(axis=0)
    return ShapleyReport(d.variables.ids, values, "1nn_map", 1, ut.kind,
                         time.perf_counter() - start, per_validation=per_val)


def shapley_1nn_fork(d: TrackedDataset, val_set: Sequence[ValidationTuple],
                     ut: TupleWiseUtility) -> ShapleyReport:
    """Exact 1-NN Shapley values for fork pipelines.

    Under 1-NN only the most similar tuple of each variable can ever be the
    prediction, so the fork reduces to a map over those representatives.
    """
    if d.pipeline_class != "fork":
        raise PipeshapError(f"this fast path needs a fork-class dataset, got {d.pipeline_class!r}")
    start = time.perf_counter()
    idx = d.variables.index
    tvar = np.array([idx[next(iter(t.provenance.variables))] for t in d.tuples], dtype=np.int64)
    labels = d.label_array
    per_val = np.zeros((len(val_set), len(d.variables)))
    for r, t in enumerate(val_set):
        order = ranking(d.feature_matrix, d.rank_array, t)
        vars_in_order = tvar[order]
        # first occurrence of each variable in rank order is its representative
        _, first = np.unique(vars_in_order, return_index=True)
        first.sort()
        reps = order[first]
        u = ut.label_values(t)[labels[reps]]
        per_val[r, tvar[reps]] = _onenn_ranked(u, ut.empty_value(t))
    values = ut.w * per_val.sum(axis=0)
    return ShapleyReport(d.variables.ids, values, "1nn_fork", 1, ut.kind,
                         time.perf_counter() - start, per_validation=per_val)
