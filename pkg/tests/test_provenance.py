import itertools
from types import SimpleNamespace

import numpy as np
import pytest

from pipeshap.errors import PipelineError, ProvenanceError
from pipeshap.provenance import (
    Assignment,
    ForkByProvider,
    InputSchema,
    Join,
    LogScaler,
    PipelineSpec,
    ProvenancePolynomial,
    StandardScaler,
    Table,
    TrackedDataset,
    TrackedTuple,
    VariableSet,
    apply_pipeline,
    candidate_dataset,
    eval_polynomial,
    freeze_reduce,
)


def _assign(ids, bits):
    dom = VariableSet(tuple(ids))
    return Assignment(dom, dict(zip(ids, bits)))


@pytest.mark.parametrize("poly, bits, want", [
    ({"a1"}, {"a1": 1, "a2": 0, "a3": 0}, 1),
    ({"a1", "a3"}, {"a1": 1, "a2": 0, "a3": 0}, 0),
    ({"a1", "a2"}, {"a1": 1, "a2": 1, "a3": 0}, 1),
])
def test_eval_polynomial(poly, bits, want):
    v = _assign(["a1", "a2", "a3"], [bits["a1"], bits["a2"], bits["a3"]])
    assert eval_polynomial(ProvenancePolynomial(frozenset(poly)), v) == want


def test_polynomial_outside_domain():
    v = _assign(["a1"], [1])
    with pytest.raises(ProvenanceError):
        eval_polynomial(ProvenancePolynomial.of("a9"), v)


def test_duplicate_variables_collapse():
    assert ProvenancePolynomial.of("a1", "a1") == ProvenancePolynomial.of("a1")


def test_candidate_dataset_example():
    # {a1}, {a2}, {a1, a3} fits no single pipeline class; the semantics do not care
    polys = [{"a1"}, {"a2"}, {"a1", "a3"}]
    tuples = tuple(TrackedTuple((float(k),), 0, ProvenancePolynomial(frozenset(p)), f"t{k + 1}", k)
                   for k, p in enumerate(polys))
    dom = VariableSet(("a1", "a2", "a3"))
    d = SimpleNamespace(tuples=tuples, variables=dom)
    got = candidate_dataset(d, Assignment(dom, {"a1": 1, "a2": 0, "a3": 1}))
    assert [t.source_id for t in got] == ["t1", "t3"]
    assert len(candidate_dataset(d, Assignment.all_ones(dom))) == 3
    assert candidate_dataset(d, Assignment.from_support(dom, [])) == []


def _map_table(xs, ys):
    return Table("train", ("x", "y"), tuple((str(x), str(y)) for x, y in zip(xs, ys)))


def test_map_identity():
    spec = PipelineSpec((), (InputSchema(("x",), "y"),))
    d = apply_pipeline(spec, [_map_table([1, 2, 3], [1, 0, 1])])
    assert d.pipeline_class == "map"
    assert [set(t.provenance.variables) for t in d.tuples] == [{"a1"}, {"a2"}, {"a3"}]
    assert d.labels == ("1", "0")


def test_fork_by_provider():
    spec = PipelineSpec((ForkByProvider(2),), (InputSchema(("x",), "y"),))
    d = apply_pipeline(spec, [_map_table([1, 2, 3, 4], [0, 1, 0, 1])])
    assert d.pipeline_class == "fork"
    polys = [next(iter(t.provenance.variables)) for t in d.tuples]
    assert set(polys) <= {"g1", "g2"}
    assert polys.count("g1") == 2 and polys.count("g2") == 2


def _join_tables(refs=("1", "1", "2")):
    fact = Table("fact", ("x", "k", "y"), tuple((str(r), k, "0") for r, k in enumerate(refs)))
    dim = Table("dim", ("key", "z"), (("1", "10"), ("2", "20")))
    spec = PipelineSpec((Join("k", "key"),), (InputSchema(("x",), "y", "k"), InputSchema(("z",), None, "key")))
    return spec, [fact, dim]


def test_join_polynomials():
    spec, tables = _join_tables()
    d = apply_pipeline(spec, tables)
    assert d.pipeline_class == "join"
    assert [set(t.provenance.variables) for t in d.tuples] == [{"f1", "d1"}, {"f2", "d1"}, {"f3", "d2"}]
    assert d.variables.ids == ("d1", "f1", "f2", "d2", "f3")
    assert d.tuples[2].features == (2.0, 20.0)


def test_join_dangling_key():
    spec, tables = _join_tables(("1", "3"))
    with pytest.raises(PipelineError, match=r"row 2.*'3'"):
        apply_pipeline(spec, tables)


def test_freeze_standard_scaler():
    op = freeze_reduce("standard-scaler", [[2.0], [4.0]])
    assert op.means == (3.0,) and op.stds == (1.0,)
    assert op.apply(np.array([[2.0]])).tolist() == [[-1.0]]


def test_freeze_constant_column():
    op = freeze_reduce("standard-scaler", [[5.0], [5.0], [5.0]])
    assert op.stds == (1.0,)
    assert op.apply(np.array([[5.0], [5.0], [5.0]])).ravel().tolist() == [0.0, 0.0, 0.0]


def test_log_scaler_zero():
    assert np.log1p(0.0) == 0.0
    op = LogScaler(means=(0.0,), stds=(1.0,))
    assert op.apply(np.array([[0.0]])).tolist() == [[0.0]]
    with pytest.raises(PipelineError):
        op.apply(np.array([[-1.0]]))


def test_unfrozen_scaler_refuses():
    with pytest.raises(PipelineError):
        StandardScaler().apply(np.zeros((1, 1)))


def test_frozen_reduce_locality():
    rng = np.random.default_rng(3)
    x = rng.normal(size=(12, 2))
    op = freeze_reduce("standard-scaler", x)
    full = op.apply(x)
    for drop in range(12):
        keep = [r for r in range(12) if r != drop]
        assert np.array_equal(op.apply(x[keep]), full[keep])


def test_candidate_monotonicity():
    rng = np.random.default_rng(7)
    ids = tuple(f"a{k}" for k in range(5))
    dom = VariableSet(ids)
    tuples = tuple(TrackedTuple((float(k),), 0, ProvenancePolynomial(frozenset([ids[k]])), f"t{k}", k)
                   for k in range(5))
    d = TrackedDataset(tuples, dom, "map", ("0",))
    for bits in itertools.product([0, 1], repeat=5):
        v = Assignment(dom, dict(zip(ids, bits)))
        upper = [min(1, b + int(rng.integers(2))) for b in bits]
        w = Assignment(dom, dict(zip(ids, upper)))
        small = {t.source_id for t in candidate_dataset(d, v)}
        big = {t.source_id for t in candidate_dataset(d, w)}
        assert small <= big


@pytest.mark.parametrize("seed", range(20))
def test_class_soundness(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 30))
    xs = rng.normal(size=n)
    ys = rng.integers(0, 3, size=n)
    # map
    d = apply_pipeline(PipelineSpec((StandardScaler(),), (InputSchema(("x",), "y"),)), [_map_table(xs, ys)])
    owners = [next(iter(t.provenance.variables)) for t in d.tuples]
    assert len(set(owners)) == n and all(len(t.provenance) == 1 for t in d.tuples)
    # fork: variables partition the tuples
    g = int(rng.integers(1, 6))
    d = apply_pipeline(PipelineSpec((ForkByProvider(g),), (InputSchema(("x",), "y"),)), [_map_table(xs, ys)])
    parts = d.tuples_of
    assert sorted(i for ix in parts.values() for i in ix) == list(range(n))
    # join: one dimension and one private fact variable per tuple
    refs = [str(int(r) + 1) for r in rng.integers(0, 2, size=n)]
    spec, tables = _join_tables(refs)
    d = apply_pipeline(spec, tables)
    for t in d.tuples:
        facts = [v for v in t.provenance.variables if v.startswith("f")]
        dims = [v for v in t.provenance.variables if v.startswith("d")]
        assert len(facts) == 1 and len(dims) == 1
        assert d.tuples_of[facts[0]] == (d.tuples.index(t),)


def test_map_rejects_shared_variable():
    p = ProvenancePolynomial.of("a1")
    tuples = (TrackedTuple((0.0,), 0, p, "t1", 0), TrackedTuple((1.0,), 0, p, "t2", 1))
    with pytest.raises(ProvenanceError):
        TrackedDataset(tuples, VariableSet(("a1",)), "map", ("0",))


def test_join_rejects_missing_fact_variable():
    tuples = (TrackedTuple((0.0,), 0, ProvenancePolynomial.of("a", "b"), "t1", 0),
              TrackedTuple((1.0,), 0, ProvenancePolynomial.of("a", "b"), "t2", 1))
    with pytest.raises(ProvenanceError):
        TrackedDataset(tuples, VariableSet(("a", "b")), "join", ("0",))
