"""CSV ingestion and assembly of training, validation and test data."""

from __future__ import annotations

import csv
import dataclasses
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import ConfigError, PipelineError
from ..knn import ValidationTuple
from ..provenance import (
    ForkByProvider,
    InputSchema,
    Join,
    LogScaler,
    PipelineSpec,
    StandardScaler,
    Table,
    TrackedDataset,
    apply_pipeline,
    freeze_pipeline,
    relational_stage,
)
from .config import ExperimentConfig
from .synthetic import synthetic_tables


def read_csv(path: str | Path, name: str | None = None) -> Table:
    """Read a headed CSV file into a Table of strings."""
    path = Path(path)
    name = name or path.name
    try:
        with path.open(newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    except UnicodeDecodeError:
        raise ConfigError(f"{path} is not valid UTF-8") from None
    rows = [r for r in rows if r]
    if not rows:
        raise ConfigError(f"{path} is empty; a header row is required")
    header = tuple(h.strip() for h in rows[0])
    if len(rows) == 1:
        raise ConfigError(f"{path} has a header but no data rows")
    body = []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise ConfigError(f"{path} line {lineno}: {len(row)} fields, header has {len(header)}")
        body.append(tuple(c.strip() for c in row))
    try:
        return Table(name, header, tuple(body))
    except PipelineError as exc:
        raise ConfigError(f"{path}: {exc}") from None


@dataclass(frozen=True)
class Problem:
    """Everything a Shapley run or repair simulation needs."""

    train: TrackedDataset
    validation: tuple[ValidationTuple, ...]
    test_x: np.ndarray
    test_y: np.ndarray
    test_groups: tuple
    spec: PipelineSpec
    positive_label: int
    empty_label: int | None


def pipeline_spec(config: ExperimentConfig, features, dim_features) -> PipelineSpec:
    fact = InputSchema(tuple(features), config.label, config.fact_key, config.id_column, config.group)
    ops = []
    inputs = [fact]
    cls = config.pipeline_class
    if cls == "join":
        ops.append(Join(config.fact_key, config.dim_key))
        inputs.append(InputSchema(tuple(dim_features), None, config.dim_key))
    elif cls == "fork":
        ops.append(ForkByProvider(config.providers))
    if config.scaler == "standard":
        ops.append(StandardScaler())
    elif config.scaler == "log":
        ops.append(LogScaler())
    return PipelineSpec(tuple(ops), tuple(inputs))


def _labelled_rows(spec: PipelineSpec, tables, vocab, what: str):
    rows = relational_stage(spec, tables)
    x = spec.transform(rows.features)
    lookup = {y: k for k, y in enumerate(vocab)}
    y = []
    for r, raw in enumerate(rows.raw_labels):
        if str(raw) not in lookup:
            raise ConfigError(f"{what} row {r + 1}: label {raw!r} does not occur in the training data")
        y.append(lookup[str(raw)])
    return x, np.array(y, dtype=np.int64), tuple(rows.groups)


def _label_index(vocab, name, what):
    if name is None:
        return None
    if name not in vocab:
        raise ConfigError(f"{what} {name!r} is not one of the labels {', '.join(vocab)}")
    return vocab.index(name)


def source_names(d: TrackedDataset, tables) -> dict[str, str]:
    """Human-readable origin of every variable, as ``table:row`` (1-based)."""
    if d.pipeline_class == "fork":
        return {v: f"provider:{k + 1}" for k, v in enumerate(d.variables)}
    fact = tables[0].name
    out = {t.source_id: f"{fact}:{r + 1}" for r, t in enumerate(d.tuples)}
    dims = [v for v in d.variables if v not in out]
    if len(tables) > 1:
        out.update({v: f"{tables[1].name}:{r + 1}" for r, v in enumerate(dims)})
    return out


def load_dataset(config: ExperimentConfig, seed: int | None = None) -> Problem:
    """Load (or generate) the inputs, run the pipeline and attach provenance."""
    if config.synthetic:
        tables = synthetic_tables(config, config.seed if seed is None else seed)
        features, dim_features = tables.features, tables.dim_features
        config = dataclasses.replace(config, label="y", group=config.group or "g",
                                     fact_key=tables.fact_key, dim_key=tables.dim_key)
        train_tables, val_table, test_table = tables.train, tables.validation, tables.test
    else:
        features, dim_features = config.features, config.dim_features
        train_tables = [read_csv(config.train, "train")]
        if config.dim:
            train_tables.append(read_csv(config.dim, "dim"))
        val_table = read_csv(config.validation, "validation")
        test_table = read_csv(config.test, "test") if config.test else None
    spec = pipeline_spec(config, features, dim_features)
    try:
        frozen = freeze_pipeline(spec, train_tables)
        train = apply_pipeline(frozen, train_tables)
        train = dataclasses.replace(train, sources=source_names(train, train_tables))
        vocab = train.labels
        extra = train_tables[1:]
        vx, vy, vg = _labelled_rows(frozen, [val_table, *extra], vocab, "validation")
        if test_table is not None:
            tx, ty, tg = _labelled_rows(frozen, [test_table, *extra], vocab, "test")
        else:
            tx, ty, tg = np.zeros((0, vx.shape[1])), np.zeros(0, dtype=np.int64), ()
    except PipelineError as exc:
        raise ConfigError(str(exc)) from None
    validation = tuple(ValidationTuple(tuple(float(f) for f in x), int(y), None if g is None else str(g))
                       for x, y, g in zip(vx, vy, vg))
    positive = _label_index(vocab, config.positive_label, "positive label")
    if positive is None:
        positive = vocab.index("1") if "1" in vocab else min(1, len(vocab) - 1)
    empty = _label_index(vocab, config.empty_label, "empty-set label")
    return Problem(train, validation, tx, ty, tg, frozen, positive, empty)
