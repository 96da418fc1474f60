"""K-nearest-neighbor utilities over candidate datasets.

Similarity is negative squared Euclidean distance. Candidates are ranked by
similarity (descending) with ``tiebreak_rank`` (ascending) breaking ties, so
the ranking is a strict total order.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np

from .errors import EmptyCandidateSet, PipeshapError
from .provenance import Assignment, TrackedDataset, TrackedTuple, candidate_dataset

UTILITY_KINDS = ("accuracy", "fnr", "fpr", "tpr", "tnr", "eqodds_diff")


@dataclass(frozen=True)
class ValidationTuple:
    features: tuple[float, ...]
    label: int
    group: str | None = None


def similarity(x, z) -> float:
    diff = np.asarray(x, dtype=float) - np.asarray(z, dtype=float)
    return -float(diff @ diff)


def ranking(features: np.ndarray, ranks: np.ndarray, t_val: ValidationTuple) -> np.ndarray:
    """Tuple indices sorted from most to least similar to t_val."""
    if len(ranks) == 0:
        return np.zeros(0, dtype=np.int64)
    diff = features - np.asarray(t_val.features, dtype=float)
    sim = -np.einsum("ij,ij->i", diff, diff)
    return np.lexsort((ranks, -sim))


@dataclass(frozen=True)
class ScoredDataset:
    """A dataset together with its similarity ranking for one validation tuple."""

    base: TrackedDataset
    t_val: ValidationTuple
    scores: np.ndarray
    order: np.ndarray

    @cached_property
    def position(self) -> np.ndarray:
        """position[k] is the rank (0 = most similar) of tuple k."""
        pos = np.empty(len(self.order), dtype=np.int64)
        pos[self.order] = np.arange(len(self.order))
        return pos

    def precedes(self, a: int, b: int) -> bool:
        """Whether tuple a ranks at or above tuple b."""
        return self.position[a] <= self.position[b]


def score(d: TrackedDataset, t_val: ValidationTuple) -> ScoredDataset:
    if d.tuples and len(t_val.features) != d.feature_matrix.shape[1]:
        raise PipeshapError(
            f"validation tuple has {len(t_val.features)} features, training tuples have "
            f"{d.feature_matrix.shape[1]}"
        )
    if not d.tuples:
        return ScoredDataset(d, t_val, np.zeros(0), np.zeros(0, dtype=np.int64))
    diff = d.feature_matrix - np.asarray(t_val.features, dtype=float)
    sim = -np.einsum("ij,ij->i", diff, diff)
    order = np.lexsort((d.rank_array, -sim))
    return ScoredDataset(d, t_val, sim, order)


def _ranked_candidates(s: ScoredDataset, v: Assignment) -> list[TrackedTuple]:
    present = {id(t) for t in candidate_dataset(s.base, v)}
    return [s.base.tuples[k] for k in s.order if id(s.base.tuples[k]) in present]


def boundary_top_k(s: ScoredDataset, v: Assignment, k: int) -> TrackedTuple:
    """The candidate at position min(k, |candidates|) in the ranking."""
    if k < 1:
        raise PipeshapError("K must be at least 1")
    ranked = _ranked_candidates(s, v)
    if not ranked:
        raise EmptyCandidateSet("no candidate tuples under this assignment")
    return ranked[min(k, len(ranked)) - 1]


def tally(s: ScoredDataset, v: Assignment, boundary: TrackedTuple) -> tuple[int, ...]:
    """Label histogram of the candidates ranked at or above boundary."""
    counts = [0] * len(s.base.labels)
    for t in _ranked_candidates(s, v):
        counts[t.label] += 1
        if t is boundary:
            break
    else:
        raise PipeshapError("boundary is not a candidate under this assignment")
    return tuple(counts)


def vote(gamma: Sequence[int]) -> int:
    """Majority label; ties go to the smallest label index."""
    return int(np.argmax(np.asarray(gamma)))


@dataclass(frozen=True)
class TupleWiseUtility:
    """Additive utility: w * sum over validation tuples of u_T(prediction, t_val).

    ``fn(pred, t_val)`` gives u_T. When the candidate set is empty the
    prediction is a uniform guess over labels unless ``empty_label`` is set.
    """

    kind: str
    n_labels: int
    fn: Callable[[int, ValidationTuple], float]
    w: float
    empty_label: int | None = None
    params: dict = field(default_factory=dict)

    def __call__(self, pred: int, t_val: ValidationTuple) -> float:
        return self.fn(pred, t_val)

    def label_values(self, t_val: ValidationTuple) -> np.ndarray:
        return np.array([self.fn(y, t_val) for y in range(self.n_labels)], dtype=float)

    def empty_value(self, t_val: ValidationTuple) -> float:
        if self.empty_label is not None:
            return self.fn(self.empty_label, t_val)
        return float(np.mean(self.label_values(t_val)))

    def gamma_values(self, t_val: ValidationTuple, gammas: Sequence[Sequence[int]]) -> np.ndarray:
        """u_Gamma for every tally in gammas; the all-zero tally is the empty set."""
        per_label = self.label_values(t_val)
        empty = self.empty_value(t_val)
        return np.array([per_label[vote(g)] if any(g) else empty for g in gammas], dtype=float)


def knn_utility(s: ScoredDataset, v: Assignment, k: int, ut: TupleWiseUtility) -> float:
    """u_T of the K-NN prediction for s.t_val trained on the candidates under v."""
    try:
        b = boundary_top_k(s, v, k)
    except EmptyCandidateSet:
        return ut.empty_value(s.t_val)
    return ut(vote(tally(s, v, b)), s.t_val)


def aggregate_utility(d: TrackedDataset, v: Assignment, val_set: Sequence[ValidationTuple],
                      k: int, ut: TupleWiseUtility) -> float:
    return ut.w * sum(knn_utility(score(d, t), v, k, ut) for t in val_set)


# -- batch evaluation ------------------------------------------------------


def knn_predict(train_x: np.ndarray, train_y: np.ndarray, ranks: np.ndarray, query_x: np.ndarray,
                k: int, n_labels: int) -> np.ndarray:
    """K-NN predictions for many queries over one fixed training set."""
    if len(train_y) == 0:
        raise EmptyCandidateSet("cannot predict with an empty training set")
    out = np.empty(len(query_x), dtype=np.int64)
    for r, q in enumerate(np.asarray(query_x, dtype=float)):
        top = ranking(train_x, ranks, ValidationTuple(tuple(q), 0))[:k]
        out[r] = vote(np.bincount(train_y[top], minlength=n_labels))
    return out


# -- utility construction --------------------------------------------------


def _positive_split(val_set, positive):
    pos = sum(1 for t in val_set if t.label == positive)
    return pos, len(val_set) - pos


def _freeze_eqodds(val_set, full_training: TrackedDataset, k: int, positive: int):
    """Dominant branch and (G_max, G_min) of the equalized-odds gap on full data."""
    if not full_training.tuples:
        raise PipeshapError("eqodds_diff needs a non-empty training set to freeze its branch")
    x = np.array([t.features for t in val_set], dtype=float)
    preds = knn_predict(full_training.feature_matrix, full_training.label_array,
                        full_training.rank_array, x, k, len(full_training.labels))
    groups = sorted({t.group for t in val_set}, key=lambda g: (g is None, str(g)))
    best = None
    for branch, want in (("tpr", True), ("fpr", False)):
        rates = {}
        for g in groups:
            members = [(p, t) for p, t in zip(preds, val_set)
                       if t.group == g and (t.label == positive) == want]
            if members:
                rates[g] = sum(p == positive for p, _ in members) / len(members)
        if not rates:
            continue
        g_max = max(rates, key=lambda g: (rates[g], -groups.index(g)))
        g_min = min(rates, key=lambda g: (rates[g], groups.index(g)))
        gap = rates[g_max] - rates[g_min]
        # TPR wins ties
        if best is None or gap > best[0]:
            best = (gap, branch, g_max, g_min)
    if best is None:
        raise PipeshapError("eqodds_diff needs labelled groups in the validation set")
    return best


def make_utility(kind: str, val_set: Sequence[ValidationTuple], full_training: TrackedDataset,
                 k: int = 1, positive_label: int = 1, empty_label: int | None = None) -> TupleWiseUtility:
    """Build the additive per-tuple utility of the given kind over val_set.

    eqodds_diff is linearized by freezing the dominant rate branch and the
    extreme groups on the full training set. Its normalizers differ per group,
    so they are folded into u_T and w is 1.
    """
    n_labels = len(full_training.labels)
    if kind not in UTILITY_KINDS:
        raise PipeshapError(f"unknown utility {kind!r}; expected one of {', '.join(UTILITY_KINDS)}")
    if empty_label is not None and not 0 <= empty_label < n_labels:
        raise PipeshapError(f"empty-set default label {empty_label} is out of range")
    if kind == "accuracy":
        w = 1.0 / len(val_set) if val_set else 0.0
        return TupleWiseUtility(kind, n_labels, lambda p, t: float(p == t.label), w, empty_label)
    if not 0 <= positive_label < n_labels:
        raise PipeshapError(f"positive label {positive_label} is out of range")
    pos = positive_label
    n_pos, n_neg = _positive_split(val_set, pos)

    def inv(n):
        return 1.0 / n if n else 0.0

    if kind == "fnr":
        fn, w = (lambda p, t: float(p != pos and t.label == pos)), inv(n_pos)
    elif kind == "tpr":
        fn, w = (lambda p, t: float(p == pos and t.label == pos)), inv(n_pos)
    elif kind == "fpr":
        fn, w = (lambda p, t: float(p == pos and t.label != pos)), inv(n_neg)
    elif kind == "tnr":
        fn, w = (lambda p, t: float(p != pos and t.label != pos)), inv(n_neg)
    else:
        gap, branch, g_max, g_min = _freeze_eqodds(val_set, full_training, k, pos)
        want = branch == "tpr"
        size = {g: sum(1 for t in val_set if t.group == g and (t.label == pos) == want)
                for g in (g_max, g_min)}

        def fn(p, t):
            if p != pos or (t.label == pos) != want or g_max == g_min:
                return 0.0
            if t.group == g_max:
                return 1.0 / size[g_max]
            if t.group == g_min:
                return -1.0 / size[g_min]
            return 0.0

        params = {"branch": branch, "g_max": g_max, "g_min": g_min, "frozen_gap": gap}
        return TupleWiseUtility(kind, n_labels, fn, 1.0, empty_label, params)
    return TupleWiseUtility(kind, n_labels, fn, w, empty_label, {"positive_label": pos})


def full_metric(kind: str, preds: np.ndarray, labels: np.ndarray, groups: Sequence,
                positive_label: int = 1) -> float:
    """Non-linearized metric value on a labelled set, used for test evaluation."""
    preds = np.asarray(preds)
    labels = np.asarray(labels)
    pos = positive_label
    if kind == "accuracy":
        return float(np.mean(preds == labels)) if len(labels) else 0.0

    def rate(mask, hit):
        n = int(mask.sum())
        return float((hit & mask).sum()) / n if n else 0.0

    is_pos, pred_pos = labels == pos, preds == pos
    if kind == "fnr":
        return rate(is_pos, ~pred_pos)
    if kind == "tpr":
        return rate(is_pos, pred_pos)
    if kind == "fpr":
        return rate(~is_pos, pred_pos)
    if kind == "tnr":
        return rate(~is_pos, ~pred_pos)
    if kind == "eqodds_diff":
        groups = np.asarray([str(g) for g in groups])
        gaps = []
        for want in (is_pos, ~is_pos):
            rates = [rate(want & (groups == g), pred_pos) for g in sorted(set(groups))
                     if (want & (groups == g)).any()]
            gaps.append(max(rates) - min(rates) if rates else 0.0)
        return float(max(gaps))
    raise PipeshapError(f"unknown metric {kind!r}")
