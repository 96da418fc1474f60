"""Seeded synthetic tables for experiments that do not bring their own CSVs."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..provenance import Table
from .config import ExperimentConfig

SEPARATION = 2.0  # distance between the two class means


@dataclass(frozen=True)
class SyntheticTables:
    train: list[Table]
    validation: Table
    test: Table
    features: tuple[str, ...]
    dim_features: tuple[str, ...]
    fact_key: str | None
    dim_key: str | None


def _fmt(v: float) -> str:
    return repr(float(v))


def _blobs(rng: np.random.Generator, n: int, dim: int, shift=None):
    y = rng.integers(0, 2, size=n)
    centre = (y[:, None] - 0.5) * SEPARATION / np.sqrt(dim)
    x = rng.normal(size=(n, dim)) + centre
    if shift is not None:
        x = x + shift
    groups = rng.choice(np.array(["a", "b"]), size=n)
    return x, y, groups


def synthetic_tables(config: ExperimentConfig, seed: int | None) -> SyntheticTables:
    """Two-class Gaussian blobs with a group column.

    For join instances every fact row carries a foreign key into a dimension
    table with one extra feature that nudges the class boundary.
    """
    rng = np.random.default_rng(0 if seed is None else seed)
    sizes = {"train": config.synthetic_size, "validation": config.synthetic_validation,
             "test": config.synthetic_test}
    if config.synthetic != "join":
        tables = {}
        for name, n in sizes.items():
            x, y, g = _blobs(rng, n, 2)
            rows = tuple((_fmt(a), _fmt(b), str(c), str(grp)) for (a, b), c, grp in zip(x, y, g))
            tables[name] = Table(name, ("x1", "x2", "y", "g"), rows)
        return SyntheticTables([tables["train"]], tables["validation"], tables["test"],
                               ("x1", "x2"), (), None, None)

    n_dims = config.synthetic_dims or max(1, config.synthetic_size // 10)
    z = rng.normal(size=n_dims)
    dim_rows = tuple((f"k{j + 1}", _fmt(z[j])) for j in range(n_dims))
    dim = Table("dim", ("key", "z1"), dim_rows)
    tables = {}
    for name, n in sizes.items():
        fk = rng.integers(0, n_dims, size=n)
        x, y, g = _blobs(rng, n, 1)
        # the dimension feature leans towards the label so joins matter
        flip = rng.random(n) < 1.0 / (1.0 + np.exp(-z[fk]))
        y = np.where(rng.random(n) < 0.2, flip.astype(int), y)
        rows = tuple((_fmt(a[0]), f"k{k + 1}", str(c), str(grp)) for a, k, c, grp in zip(x, fk, y, g))
        tables[name] = Table(name, ("x1", "fk", "y", "g"), rows)
    return SyntheticTables([tables["train"], dim], tables["validation"], tables["test"],
                           ("x1",), ("z1",), "fk", "key")
