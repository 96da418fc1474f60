"""Provenance-tracked datasets and the pipelines that produce them.

Every training tuple carries a conjunctive Boolean polynomial over source
variables. A tuple is present under an assignment exactly when all of its
variables are set to 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import PipelineError, ProvenanceError

PIPELINE_CLASSES = ("map", "fork", "join")


@dataclass(frozen=True)
class VariableSet:
    """Ordered, duplicate-free collection of source variable ids.

    The order is the variable ordering used by every decision diagram built
    over a dataset.
    """

    ids: tuple[str, ...]

    def __post_init__(self):
        if len(set(self.ids)) != len(self.ids):
            seen = set()
            dup = next(v for v in self.ids if v in seen or seen.add(v))
            raise ProvenanceError(f"duplicate variable id {dup!r}")

    @cached_property
    def index(self) -> dict[str, int]:
        return {v: k for k, v in enumerate(self.ids)}

    def __len__(self):
        return len(self.ids)

    def __iter__(self):
        return iter(self.ids)

    def __contains__(self, var):
        return var in self.index

    def without(self, var: str) -> "VariableSet":
        return VariableSet(tuple(v for v in self.ids if v != var))


@dataclass(frozen=True)
class ProvenancePolynomial:
    """Conjunction of variables, stored as a set."""

    variables: frozenset[str]

    def __post_init__(self):
        if not self.variables:
            raise ProvenanceError("provenance polynomial must mention at least one variable")
        object.__setattr__(self, "variables", frozenset(self.variables))

    @classmethod
    def of(cls, *variables: str) -> "ProvenancePolynomial":
        return cls(frozenset(variables))

    def __iter__(self):
        return iter(sorted(self.variables))

    def __len__(self):
        return len(self.variables)

    def __contains__(self, var):
        return var in self.variables

    def __str__(self):
        return "*".join(sorted(self.variables))


@dataclass(frozen=True)
class Assignment:
    """Total map from a variable set to {0, 1}."""

    domain: VariableSet
    values: Mapping[str, int]

    def __post_init__(self):
        missing = [v for v in self.domain if v not in self.values]
        if missing:
            raise ProvenanceError(f"assignment is not total, missing {missing[0]!r}")
        extra = [v for v in self.values if v not in self.domain]
        if extra:
            raise ProvenanceError(f"assignment mentions unknown variable {extra[0]!r}")
        for v, b in self.values.items():
            if b not in (0, 1):
                raise ProvenanceError(f"variable {v!r} assigned {b!r}, expected 0 or 1")

    @classmethod
    def from_support(cls, domain: VariableSet, support: Iterable[str]) -> "Assignment":
        on = set(support)
        unknown = on - set(domain.ids)
        if unknown:
            raise ProvenanceError(f"support mentions unknown variable {sorted(unknown)[0]!r}")
        return cls(domain, {v: int(v in on) for v in domain})

    @classmethod
    def all_ones(cls, domain: VariableSet) -> "Assignment":
        return cls.from_support(domain, domain.ids)

    @property
    def support(self) -> frozenset[str]:
        return frozenset(v for v, b in self.values.items() if b)

    def __getitem__(self, var):
        return self.values[var]

    def with_value(self, var: str, bit: int) -> "Assignment":
        values = dict(self.values)
        values[var] = bit
        return Assignment(self.domain, values)


def eval_polynomial(p: ProvenancePolynomial, v: Assignment) -> int:
    """Evaluate a conjunctive polynomial. Every variable must be in v's domain."""
    for var in p.variables:
        if var not in v.domain:
            raise ProvenanceError(f"polynomial variable {var!r} is outside the assignment domain")
    return int(all(v[var] for var in p.variables))


@dataclass(frozen=True)
class TrackedTuple:
    features: tuple[float, ...]
    label: int
    provenance: ProvenancePolynomial
    source_id: str
    tiebreak_rank: int


@dataclass(frozen=True)
class TrackedDataset:
    """Training tuples annotated with provenance, plus the variable universe.

    ``labels`` holds the label names; ``TrackedTuple.label`` indexes into it.
    """

    tuples: tuple[TrackedTuple, ...]
    variables: VariableSet
    pipeline_class: str
    labels: tuple[str, ...]
    sources: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if self.pipeline_class not in PIPELINE_CLASSES:
            raise ProvenanceError(f"unknown pipeline class {self.pipeline_class!r}")
        if not self.labels:
            raise ProvenanceError("label set must be non-empty")
        ranks = [t.tiebreak_rank for t in self.tuples]
        if len(set(ranks)) != len(ranks):
            raise ProvenanceError("tiebreak ranks must be unique")
        dims = {len(t.features) for t in self.tuples}
        if len(dims) > 1:
            raise ProvenanceError("all tuples must have the same feature arity")
        for t in self.tuples:
            for var in t.provenance.variables:
                if var not in self.variables:
                    raise ProvenanceError(
                        f"tuple {t.source_id!r} references undeclared variable {var!r}"
                    )
            if not 0 <= t.label < len(self.labels):
                raise ProvenanceError(f"tuple {t.source_id!r} has label index {t.label} out of range")
        self._check_class()

    def _check_class(self):
        cls = self.pipeline_class
        if cls == "map":
            seen = set()
            for t in self.tuples:
                if len(t.provenance) != 1:
                    raise ProvenanceError("map datasets need exactly one variable per tuple")
                (var,) = t.provenance.variables
                if var in seen:
                    raise ProvenanceError(f"map variable {var!r} is shared by several tuples")
                seen.add(var)
        elif cls == "fork":
            for t in self.tuples:
                if len(t.provenance) != 1:
                    raise ProvenanceError("fork datasets need exactly one variable per tuple")
        else:
            counts: dict[str, int] = {}
            for t in self.tuples:
                if len(t.provenance) != 2:
                    raise ProvenanceError("join datasets need exactly two variables per tuple")
                for var in t.provenance.variables:
                    counts[var] = counts.get(var, 0) + 1
            # every tuple must hold one private (fact) variable
            for t in self.tuples:
                if not any(counts[v] == 1 for v in t.provenance.variables):
                    raise ProvenanceError(f"join tuple {t.source_id!r} has no private fact variable")

    def __len__(self):
        return len(self.tuples)

    @cached_property
    def feature_matrix(self) -> np.ndarray:
        if not self.tuples:
            return np.zeros((0, 0))
        return np.array([t.features for t in self.tuples], dtype=float)

    @cached_property
    def label_array(self) -> np.ndarray:
        return np.array([t.label for t in self.tuples], dtype=np.int64)

    @cached_property
    def rank_array(self) -> np.ndarray:
        return np.array([t.tiebreak_rank for t in self.tuples], dtype=np.int64)

    @cached_property
    def tuples_of(self) -> dict[str, tuple[int, ...]]:
        """Indices of the tuples whose polynomial mentions each variable."""
        out: dict[str, list[int]] = {v: [] for v in self.variables}
        for k, t in enumerate(self.tuples):
            for var in t.provenance.variables:
                out[var].append(k)
        return {v: tuple(ks) for v, ks in out.items()}

    def source_of(self, var: str) -> str:
        return self.sources.get(var, var)

    def with_labels(self, labels: Sequence[int]) -> "TrackedDataset":
        if len(labels) != len(self.tuples):
            raise ProvenanceError("label vector length does not match the dataset")
        tuples = tuple(replace(t, label=int(y)) for t, y in zip(self.tuples, labels))
        return replace(self, tuples=tuples)


def candidate_dataset(d: TrackedDataset, v: Assignment) -> list[TrackedTuple]:
    """Tuples whose polynomial evaluates to 1 under v, in tiebreak order."""
    if set(v.domain.ids) != set(d.variables.ids):
        raise ProvenanceError("assignment domain differs from the dataset variables")
    out = [t for t in d.tuples if eval_polynomial(t.provenance, v)]
    out.sort(key=lambda t: t.tiebreak_rank)
    return out


# -- pipelines -------------------------------------------------------------


@dataclass(frozen=True)
class Table:
    """Named relational input. Rows are tuples aligned with ``header``."""

    name: str
    header: tuple[str, ...]
    rows: tuple[tuple, ...]

    def __post_init__(self):
        if len(set(self.header)) != len(self.header):
            raise PipelineError(f"table {self.name!r} has duplicate column names")
        for k, row in enumerate(self.rows):
            if len(row) != len(self.header):
                raise PipelineError(
                    f"table {self.name!r} row {k + 1} has {len(row)} fields, expected {len(self.header)}"
                )

    def col(self, name: str) -> int:
        try:
            return self.header.index(name)
        except ValueError:
            raise PipelineError(f"table {self.name!r} has no column {name!r}") from None

    def column(self, name: str) -> list:
        k = self.col(name)
        return [row[k] for row in self.rows]

    def __len__(self):
        return len(self.rows)


@dataclass(frozen=True)
class InputSchema:
    """Which columns of an input table play which role."""

    features: tuple[str, ...]
    label: str | None = None
    key: str | None = None
    id: str | None = None
    group: str | None = None


@dataclass(frozen=True)
class Identity:
    kind = "identity"

    def apply(self, x: np.ndarray) -> np.ndarray:
        return x


@dataclass(frozen=True)
class StandardScaler:
    """Column standardization. Unfrozen until ``means``/``stds`` are set."""

    means: tuple[float, ...] | None = None
    stds: tuple[float, ...] | None = None
    kind = "standard-scaler"

    @property
    def frozen(self) -> bool:
        return self.means is not None

    def _pre(self, x):
        return x

    def apply(self, x: np.ndarray) -> np.ndarray:
        if not self.frozen:
            raise PipelineError(f"{self.kind} used before its statistics were frozen")
        x = self._pre(np.asarray(x, dtype=float))
        if x.shape[1] != len(self.means):
            raise PipelineError(
                f"{self.kind} frozen on {len(self.means)} columns, got {x.shape[1]}"
            )
        return (x - np.array(self.means)) / np.array(self.stds)


@dataclass(frozen=True)
class LogScaler(StandardScaler):
    """log1p followed by standardization on the log scale."""

    kind = "log-scaler"

    def _pre(self, x):
        if np.any(x <= -1):
            raise PipelineError("log-scaler needs every feature value to exceed -1")
        return np.log1p(x)


@dataclass(frozen=True)
class ForkByProvider:
    """Assign rows to providers round-robin; each provider is one variable."""

    group_count: int
    kind = "fork-by-provider"

    def __post_init__(self):
        if self.group_count < 1:
            raise PipelineError("fork-by-provider needs group_count >= 1")


@dataclass(frozen=True)
class Join:
    """Star-schema join of a fact table (input 0) with a dimension table (input 1)."""

    fact_key: str
    dim_key: str
    kind = "join"


Operator = Identity | StandardScaler | LogScaler | ForkByProvider | Join
_FEATURE_OPS = (Identity, StandardScaler, LogScaler)


def freeze_reduce(op_kind: str, full_input) -> StandardScaler:
    """Compute reduce statistics once over the full input and freeze them."""
    x = np.asarray(full_input, dtype=float)
    if x.ndim != 2:
        raise PipelineError("reduce input must be a 2-D matrix")
    if op_kind == "standard-scaler":
        cls = StandardScaler
    elif op_kind == "log-scaler":
        cls = LogScaler
        x = LogScaler(means=(0.0,) * x.shape[1], stds=(1.0,) * x.shape[1])._pre(x)
    else:
        raise PipelineError(f"unknown reduce operator {op_kind!r}")
    if x.shape[0] == 0:
        means = np.zeros(x.shape[1])
        stds = np.ones(x.shape[1])
    else:
        means = x.mean(axis=0)
        stds = x.std(axis=0)
        stds[stds == 0] = 1.0
    return cls(means=tuple(float(m) for m in means), stds=tuple(float(s) for s in stds))


@dataclass(frozen=True)
class PipelineSpec:
    operators: tuple = ()
    inputs: tuple[InputSchema, ...] = ()

    @property
    def pipeline_class(self) -> str:
        kinds = [op.kind for op in self.operators]
        if "join" in kinds:
            return "join"
        if "fork-by-provider" in kinds:
            return "fork"
        return "map"

    def _structural(self, kind):
        ops = [op for op in self.operators if op.kind == kind]
        if len(ops) > 1:
            raise PipelineError(f"at most one {kind} operator is supported")
        return ops[0] if ops else None

    def validate(self):
        for op in self.operators:
            if not isinstance(op, (*_FEATURE_OPS, ForkByProvider, Join)):
                raise PipelineError(f"unsupported operator {op!r}")
        if self._structural("join") and self._structural("fork-by-provider"):
            raise PipelineError("a pipeline may not both fork and join")
        need = 2 if self.pipeline_class == "join" else 1
        if len(self.inputs) != need:
            raise PipelineError(f"{self.pipeline_class} pipelines take {need} input(s), got {len(self.inputs)}")
        if self.inputs[0].label is None:
            raise PipelineError("the first input must declare a label column")

    def transform(self, x: np.ndarray) -> np.ndarray:
        """Apply the (frozen) feature operators to a joined feature matrix."""
        x = np.asarray(x, dtype=float)
        for op in self.operators:
            if isinstance(op, _FEATURE_OPS):
                x = op.apply(x)
        return x


@dataclass(frozen=True)
class RelationalRows:
    features: np.ndarray
    raw_labels: list
    groups: list
    provenance: list[frozenset]
    source_ids: list[str]
    variables: tuple[str, ...]


def _float_matrix(table: Table, cols: Sequence[str]) -> np.ndarray:
    idx = [table.col(c) for c in cols]
    out = np.empty((len(table), len(idx)))
    for r, row in enumerate(table.rows):
        for j, k in enumerate(idx):
            try:
                out[r, j] = float(row[k])
            except (TypeError, ValueError):
                raise PipelineError(
                    f"table {table.name!r} row {r + 1}: column {cols[j]!r} value {row[k]!r} is not numeric"
                ) from None
            if not math.isfinite(out[r, j]):
                raise PipelineError(
                    f"table {table.name!r} row {r + 1}: column {cols[j]!r} is not finite"
                )
    return out


def _row_ids(table: Table, schema: InputSchema, prefix: str) -> list[str]:
    if schema.id is None:
        return [f"{prefix}{r + 1}" for r in range(len(table))]
    ids = [str(x) for x in table.column(schema.id)]
    seen = set()
    for r, x in enumerate(ids):
        if x in seen:
            raise PipelineError(f"table {table.name!r} row {r + 1}: duplicate id {x!r}")
        seen.add(x)
    return ids


def relational_stage(spec: PipelineSpec, inputs: Sequence[Table]) -> RelationalRows:
    """Run fork/join structure and gather raw features, labels and provenance."""
    spec.validate()
    if len(inputs) != len(spec.inputs):
        raise PipelineError(f"expected {len(spec.inputs)} input tables, got {len(inputs)}")
    fact, fs = inputs[0], spec.inputs[0]
    x = _float_matrix(fact, fs.features)
    labels = fact.column(fs.label)
    groups = fact.column(fs.group) if fs.group else [None] * len(fact)
    cls = spec.pipeline_class

    if cls == "map":
        ids = _row_ids(fact, fs, "a")
        return RelationalRows(x, labels, groups, [frozenset([i]) for i in ids], ids, tuple(ids))

    if cls == "fork":
        g = spec._structural("fork-by-provider").group_count
        providers = [f"g{k + 1}" for k in range(g)]
        ids = _row_ids(fact, fs, "t")
        prov = [frozenset([providers[r % g]]) for r in range(len(fact))]
        return RelationalRows(x, labels, groups, prov, ids, tuple(providers))

    join = spec._structural("join")
    dim, ds = inputs[1], spec.inputs[1]
    dim_ids = _row_ids(dim, ds, "d")
    dim_x = _float_matrix(dim, ds.features)
    by_key: dict[str, int] = {}
    for r, key in enumerate(dim.column(join.dim_key)):
        key = str(key)
        if key in by_key:
            raise PipelineError(f"table {dim.name!r} row {r + 1}: dimension key {key!r} is not unique")
        by_key[key] = r
    fact_ids = _row_ids(fact, fs, "f")
    clash = set(fact_ids) & set(dim_ids)
    if clash:
        raise PipelineError(f"fact and dimension ids collide: {sorted(clash)[0]!r}")
    dim_rows = []
    for r, key in enumerate(fact.column(join.fact_key)):
        key = str(key)
        if key not in by_key:
            raise PipelineError(f"table {fact.name!r} row {r + 1}: dangling foreign key {key!r}")
        dim_rows.append(by_key[key])
    feats = np.hstack([x, dim_x[dim_rows]]) if len(fact) else np.zeros((0, x.shape[1] + dim_x.shape[1]))
    prov = [frozenset([fact_ids[r], dim_ids[d]]) for r, d in enumerate(dim_rows)]
    # each dimension variable is followed by the facts that reference it
    facts_of: dict[int, list[str]] = {}
    for r, d in enumerate(dim_rows):
        facts_of.setdefault(d, []).append(fact_ids[r])
    order = []
    for d, did in enumerate(dim_ids):
        order.append(did)
        order.extend(facts_of.get(d, []))
    return RelationalRows(feats, labels, groups, prov, fact_ids, tuple(order))


def freeze_pipeline(spec: PipelineSpec, inputs: Sequence[Table]) -> PipelineSpec:
    """Return a copy of spec with every reduce operator frozen on the full input."""
    rows = relational_stage(spec, inputs)
    x = rows.features
    ops = []
    for op in spec.operators:
        if isinstance(op, StandardScaler) and not op.frozen:
            op = freeze_reduce(op.kind, x)
        if isinstance(op, _FEATURE_OPS):
            x = op.apply(x)
        ops.append(op)
    return replace(spec, operators=tuple(ops))


def label_vocabulary(raw_labels: Iterable) -> tuple[str, ...]:
    """Label names in order of first appearance."""
    out = {}
    for y in raw_labels:
        out.setdefault(str(y), None)
    return tuple(out)


def apply_pipeline(
    spec: PipelineSpec, inputs: Sequence[Table], labels: Sequence[str] | None = None
) -> TrackedDataset:
    """Run a pipeline over relational inputs and annotate outputs with provenance."""
    frozen = freeze_pipeline(spec, inputs)
    rows = relational_stage(frozen, inputs)
    x = frozen.transform(rows.features)
    vocab = tuple(labels) if labels is not None else label_vocabulary(rows.raw_labels)
    lookup = {y: k for k, y in enumerate(vocab)}
    tuples = []
    for r in range(len(rows.raw_labels)):
        y = str(rows.raw_labels[r])
        if y not in lookup:
            raise PipelineError(f"row {r + 1}: label {y!r} is not in the label set")
        tuples.append(
            TrackedTuple(
                features=tuple(float(f) for f in x[r]),
                label=lookup[y],
                provenance=ProvenancePolynomial(rows.provenance[r]),
                source_id=rows.source_ids[r],
                tiebreak_rank=r,
            )
        )
    return TrackedDataset(
        tuples=tuple(tuples),
        variables=VariableSet(rows.variables),
        pipeline_class=frozen.pipeline_class,
        labels=vocab,
    )
