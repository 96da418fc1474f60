import itertools

import numpy as np
import pytest

from instances import map_dataset, random_problem
from pipeshap.errors import EmptyCandidateSet
from pipeshap.knn import (
    ValidationTuple,
    aggregate_utility,
    boundary_top_k,
    full_metric,
    knn_predict,
    knn_utility,
    make_utility,
    score,
    tally,
    vote,
)
from pipeshap.provenance import Assignment, ProvenancePolynomial, TrackedDataset, TrackedTuple, VariableSet


def _on(d, *ids):
    return Assignment.from_support(d.variables, ids)


def test_score_example():
    d = map_dataset([1, 2, 3], [0, 0, 0])
    s = score(d, ValidationTuple((0.0,), 0))
    assert s.scores.tolist() == [-1.0, -4.0, -9.0]
    assert s.order.tolist() == [0, 1, 2]


def test_ties_broken_by_rank():
    d = map_dataset([2, 2, 2], [0, 1, 0])
    s = score(d, ValidationTuple((0.0,), 0))
    assert s.order.tolist() == [0, 1, 2]


def test_exact_match_ranks_first():
    d = map_dataset([5, 1, 3], [0, 0, 0])
    assert score(d, ValidationTuple((3.0,), 0)).order[0] == 2


def test_boundary_examples():
    d = map_dataset([1, 2, 3], [1, 0, 1])
    s = score(d, ValidationTuple((0.0,), 1))
    everyone = Assignment.all_ones(d.variables)
    assert boundary_top_k(s, everyone, 2).source_id == "a2"
    assert boundary_top_k(s, _on(d, "a3"), 3).source_id == "a3"
    assert boundary_top_k(s, everyone, 1).source_id == "a1"
    with pytest.raises(EmptyCandidateSet):
        boundary_top_k(s, _on(d), 1)


def test_tally_examples():
    d = map_dataset([1, 2, 3], [1, 0, 1])
    s = score(d, ValidationTuple((0.0,), 1))
    v = Assignment.all_ones(d.variables)
    assert tally(s, v, d.tuples[1]) == (1, 1)
    assert tally(s, v, d.tuples[0]) == (0, 1)
    assert tally(s, v, d.tuples[2]) == (1, 2)


def test_knn_utility_examples():
    d = map_dataset([1, 2, 3], [1, 0, 0])
    acc = make_utility("accuracy", [ValidationTuple((0.0,), 1)], d)
    s = score(d, ValidationTuple((0.0,), 1))
    assert knn_utility(s, Assignment.all_ones(d.variables), 1, acc) == 1.0
    s0 = score(d, ValidationTuple((0.0,), 0))
    # tally (2 zeros, 1 one) with K=3 votes 0
    assert knn_utility(s0, Assignment.all_ones(d.variables), 3, acc) == 1.0
    assert knn_utility(s0, _on(d), 1, acc) == 0.5


def test_vote_ties_to_smallest_label():
    assert vote((1, 1)) == 0
    assert vote((0, 2, 2)) == 1


def test_aggregate_examples():
    d = map_dataset([0, 10], [0, 1])
    val = [ValidationTuple((0.0,), 0), ValidationTuple((10.0,), 1)]
    acc = make_utility("accuracy", val, d)
    assert aggregate_utility(d, Assignment.all_ones(d.variables), val, 1, acc) == 1.0
    empty = make_utility("accuracy", [], d)
    assert aggregate_utility(d, Assignment.all_ones(d.variables), [], 1, empty) == 0.0
    # FNR: one of two positives predicted negative
    d = map_dataset([0, 10], [0, 1])
    val = [ValidationTuple((1.0,), 1), ValidationTuple((9.0,), 1)]
    fnr = make_utility("fnr", val, d, positive_label=1)
    assert aggregate_utility(d, Assignment.all_ones(d.variables), val, 1, fnr) == 0.5


def test_utility_forms():
    d = map_dataset([0], [0])
    t1, t0 = ValidationTuple((0.0,), 1), ValidationTuple((0.0,), 0)
    acc = make_utility("accuracy", [t1, t0], d)
    assert acc(1, t1) == 1.0 and acc(0, t1) == 0.0 and acc.w == 0.5
    fnr = make_utility("fnr", [t1, t0], d)
    assert fnr(0, t1) == 1.0 and fnr(1, t1) == 0.0 and fnr(0, t0) == 0.0


def test_monotone_irrelevance():
    d = map_dataset([1, 2, 3, 9], [1, 0, 1, 0])
    val = [ValidationTuple((0.0,), 1)]
    acc = make_utility("accuracy", val, d)
    s = score(d, val[0])
    for k in (1, 2, 3):
        base = [f"a{j + 1}" for j in range(k)]
        assert knn_utility(s, _on(d, *base), k, acc) == knn_utility(s, _on(d, *base, "a4"), k, acc)


def test_permuting_distinct_scores_keeps_utilities():
    rng = np.random.default_rng(11)
    xs = rng.permutation(8).astype(float)
    ys = rng.integers(0, 2, size=8)
    val = [ValidationTuple((3.3,), 1), ValidationTuple((-1.0,), 0)]
    d = map_dataset(xs, ys)
    perm = rng.permutation(8)
    # same tuples (and variables) in a different input order
    tuples = tuple(TrackedTuple(d.tuples[p].features, d.tuples[p].label, d.tuples[p].provenance,
                                d.tuples[p].source_id, k) for k, p in enumerate(perm))
    d2 = TrackedDataset(tuples, d.variables, "map", d.labels)
    acc = make_utility("accuracy", val, d)
    for bits in itertools.product([0, 1], repeat=8):
        v = Assignment(d.variables, dict(zip(d.variables, bits)))
        for k in (1, 3):
            assert aggregate_utility(d, v, val, k, acc) == aggregate_utility(d2, v, val, k, acc)


@pytest.mark.parametrize("seed", range(10))
def test_additivity(seed):
    d, val, ut = random_problem(seed, "fork", 2, 3, "accuracy")
    v = Assignment.from_support(d.variables, d.variables.ids[::2])
    parts = [knn_utility(score(d, t), v, 2, ut) for t in val]
    assert aggregate_utility(d, v, val, 2, ut) == pytest.approx(ut.w * sum(parts), abs=1e-12)


def test_argmax_invariance_under_scaling():
    rng = np.random.default_rng(4)
    xs, ys = rng.normal(size=7), rng.integers(0, 2, size=7)
    val = [ValidationTuple((0.2,), 1), ValidationTuple((-0.7,), 0)]
    d, d2 = map_dataset(xs, ys), map_dataset(3 * xs, ys)
    val2 = [ValidationTuple((3 * t.features[0],), t.label) for t in val]
    acc = make_utility("accuracy", val, d)
    for bits in itertools.product([0, 1], repeat=7):
        v = Assignment(d.variables, dict(zip(d.variables, bits)))
        assert aggregate_utility(d, v, val, 3, acc) == aggregate_utility(d2, v, val2, 3, acc)


def _eqodds_instance():
    # group "g1" gets every positive right, "g2" gets none; negatives are equal in both groups
    xs = [0.0, 1.0, 10.0, 11.0]
    ys = [1, 1, 0, 0]
    d = map_dataset(xs, ys)
    val = [ValidationTuple((0.0,), 1, "g1"), ValidationTuple((0.5,), 1, "g1"),
           ValidationTuple((10.5,), 1, "g2"), ValidationTuple((11.0,), 1, "g2"),
           ValidationTuple((10.0,), 0, "g1"), ValidationTuple((10.0,), 0, "g2")]
    return d, val


def test_eqodds_freeze_matches_direct_metric():
    d, val = _eqodds_instance()
    ut = make_utility("eqodds_diff", val, d, k=1, positive_label=1)
    assert ut.params["branch"] == "tpr"
    assert (ut.params["g_max"], ut.params["g_min"]) == ("g1", "g2")
    x = np.array([t.features for t in val])
    preds = knn_predict(d.feature_matrix, d.label_array, d.rank_array, x, 1, 2)
    labels = np.array([t.label for t in val])
    groups = [t.group for t in val]
    direct = full_metric("eqodds_diff", preds, labels, groups, 1)
    frozen = aggregate_utility(d, Assignment.all_ones(d.variables), val, 1, ut)
    assert frozen == pytest.approx(direct) == pytest.approx(1.0)
    # on a subset the frozen form is TPR(g1) - TPR(g2), which can go negative
    sub = _on(d, "a3", "a4")
    assert aggregate_utility(d, sub, val, 1, ut) == pytest.approx(0.0)


def test_eqodds_per_tuple_range():
    d, val = _eqodds_instance()
    ut = make_utility("eqodds_diff", val, d)
    for t in val:
        for y in range(2):
            assert ut(y, t) in (0.0, 0.5, -0.5)


def test_knn_predict_matches_utility_path():
    rng = np.random.default_rng(9)
    xs, ys = rng.normal(size=15), rng.integers(0, 3, size=15)
    d = map_dataset(xs, ys, n_labels=3)
    q = rng.normal(size=(6, 1))
    preds = knn_predict(d.feature_matrix, d.label_array, d.rank_array, q, 3, 3)
    v = Assignment.all_ones(d.variables)
    for x, p in zip(q, preds):
        s = score(d, ValidationTuple((float(x[0]),), 0))
        assert p == vote(tally(s, v, boundary_top_k(s, v, 3)))


def test_full_metric_forms():
    preds = np.array([1, 0, 1, 1])
    labels = np.array([1, 1, 0, 0])
    assert full_metric("accuracy", preds, labels, [None] * 4) == 0.25
    assert full_metric("fnr", preds, labels, [None] * 4) == 0.5
    assert full_metric("fpr", preds, labels, [None] * 4) == 1.0
    assert full_metric("tpr", preds, labels, [None] * 4) == 0.5
    assert full_metric("tnr", preds, labels, [None] * 4) == 0.0


def test_join_tuple_needs_both_variables():
    tuples = (TrackedTuple((0.0,), 1, ProvenancePolynomial.of("f1", "d1"), "f1", 0),)
    d = TrackedDataset(tuples, VariableSet(("d1", "f1")), "join", ("0", "1"))
    s = score(d, ValidationTuple((0.0,), 1))
    acc = make_utility("accuracy", [ValidationTuple((0.0,), 1)], d)
    assert knn_utility(s, _on(d, "f1"), 1, acc) == 0.5
    assert knn_utility(s, _on(d, "f1", "d1"), 1, acc) == 1.0
