"""The K-NN utility as a cooperative game over source variables.

``SubsetGame`` evaluates the utility of many assignments at once. It is the
black box behind brute-force enumeration and Monte Carlo sampling.
"""

from __future__ import annotations

import math
import time
from typing import Sequence

import numpy as np

from ..errors import PipeshapError
from ..knn import TupleWiseUtility, ValidationTuple, ranking
from ..provenance import TrackedDataset
from .report import ShapleyReport

BRUTE_FORCE_MAX_VARS = 20


class SubsetGame:
    def __init__(self, d: TrackedDataset, val_set: Sequence[ValidationTuple], k: int,
                 ut: TupleWiseUtility):
        if k < 1:
            raise PipeshapError("K must be at least 1")
        self.d, self.k, self.ut = d, k, ut
        self.val_set = list(val_set)
        self.n_vars = len(d.variables)
        idx = d.variables.index
        width = max((len(t.provenance) for t in d.tuples), default=1)
        # pad with an index that always reads True
        pad = np.full((len(d.tuples), width), self.n_vars, dtype=np.int64)
        for r, t in enumerate(d.tuples):
            for c, var in enumerate(sorted(t.provenance.variables)):
                pad[r, c] = idx[var]
        self._pad = pad
        n_labels = len(d.labels)
        self._orders = np.array(
            [ranking(d.feature_matrix, d.rank_array, t) for t in self.val_set], dtype=np.int64
        ).reshape(len(self.val_set), len(d.tuples))
        self._onehot = np.eye(n_labels, dtype=np.int64)[d.label_array[self._orders]] if len(d.tuples) \
            else np.zeros((len(self.val_set), 0, n_labels), dtype=np.int64)
        self._label_vals = np.array([ut.label_values(t) for t in self.val_set]).reshape(-1, n_labels)
        self._empty_vals = np.array([ut.empty_value(t) for t in self.val_set], dtype=float)
        self._memo: dict[bytes, float] = {}

    def per_validation(self, on: np.ndarray) -> np.ndarray:
        """u_T for every validation tuple, for a batch of assignments.

        ``on`` is a boolean matrix (assignments x variables); the result has
        shape (assignments, validation tuples).
        """
        on = np.atleast_2d(np.asarray(on, dtype=bool))
        b = on.shape[0]
        ext = np.concatenate([on, np.ones((b, 1), dtype=bool)], axis=1)
        present = ext[:, self._pad].all(axis=2)  # (b, tuples)
        n_val = len(self.val_set)
        if self._orders.shape[1] == 0:
            return np.broadcast_to(self._empty_vals, (b, n_val)).copy()
        ps = present[:, self._orders]  # (b, val, sorted tuples)
        csum = np.cumsum(ps, axis=2)
        sel = ps & (csum <= self.k)
        tallies = np.einsum("bvm,vmy->bvy", sel.astype(np.int64), self._onehot)
        pred = tallies.argmax(axis=2)
        vals = np.take_along_axis(
            np.broadcast_to(self._label_vals, (b, n_val, self._label_vals.shape[1])),
            pred[:, :, None], axis=2,
        )[:, :, 0]
        empty = csum[:, :, -1] == 0
        return np.where(empty, self._empty_vals[None, :], vals)

    def value(self, on: np.ndarray) -> float:
        return float(self.ut.w * self.per_validation(on)[0].sum())

    def cached_value(self, on: np.ndarray) -> float:
        key = np.packbits(on).tobytes()
        u = self._memo.get(key)
        if u is None:
            u = self.value(on)
            if len(self._memo) < 1 << 20:
                self._memo[key] = u
        return u


def shapley_weights(n: int) -> np.ndarray:
    """Shapley weight of a coalition of size s drawn from n - 1 other players."""
    return np.array([1.0 / (n * math.comb(n - 1, s)) for s in range(n)])


def brute_force_shapley(d: TrackedDataset, val_set: Sequence[ValidationTuple], k: int,
                        ut: TupleWiseUtility, max_vars: int = BRUTE_FORCE_MAX_VARS) -> ShapleyReport:
    """Exact Shapley values by enumerating every assignment."""
    start = time.perf_counter()
    n = len(d.variables)
    if n > max_vars:
        raise PipeshapError(f"brute force is capped at {max_vars} variables, dataset has {n}")
    game = SubsetGame(d, val_set, k, ut)
    if n == 0:
        return ShapleyReport((), np.zeros(0), "brute_force", k, ut.kind, time.perf_counter() - start,
                             per_validation=np.zeros((len(val_set), 0)))
    masks = np.arange(1 << n, dtype=np.int64)
    bits = ((masks[:, None] >> np.arange(n)) & 1).astype(bool)
    table = np.concatenate(
        [game.per_validation(bits[lo : lo + 4096]) for lo in range(0, len(masks), 4096)], axis=0
    )  # (2^n, val)
    size = bits.sum(axis=1)
    wts = shapley_weights(n)
    per_val = np.zeros((len(val_set), n))
    for i in range(n):
        without = masks[~bits[:, i]]
        diff = table[without | (1 << i)] - table[without]
        per_val[:, i] = wts[size[without]] @ diff
    values = ut.w * per_val.sum(axis=0)
    return ShapleyReport(d.variables.ids, values, "brute_force", k, ut.kind,
                         time.perf_counter() - start, per_validation=per_val)
