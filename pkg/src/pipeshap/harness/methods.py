"""Dispatch from method names to importance engines."""

from __future__ import annotations

from typing import Sequence

from ..errors import ConfigError, PipeshapError
from ..knn import TupleWiseUtility, ValidationTuple
from ..provenance import TrackedDataset
from ..shapley import (
    ShapleyReport,
    brute_force_shapley,
    shapley_1nn_fork,
    shapley_1nn_map,
    shapley_knn_general,
    shapley_knn_map_fast,
    tmc_shapley,
)

TMC_ITERATIONS = {"tmc_x10": 10, "tmc_x100": 100}
LOWER_IS_BETTER = {"fnr", "fpr", "eqodds_diff"}


def datascope_engine(d: TrackedDataset, k: int) -> str:
    """The fastest exact engine that applies to this dataset."""
    if k == 1 and d.pipeline_class == "map":
        return "1nn_map"
    if k == 1 and d.pipeline_class == "fork":
        return "1nn_fork"
    if d.pipeline_class == "map":
        return "map_fast"
    return "general"


def compute_importance(method: str, d: TrackedDataset, val_set: Sequence[ValidationTuple], k: int,
                       ut: TupleWiseUtility, seed: int = 0, truncation: float | None = 0.001) -> ShapleyReport:
    if method in ("datascope", "datascope_interactive"):
        method = datascope_engine(d, k)
    try:
        if method == "general":
            return shapley_knn_general(d, val_set, k, ut)
        if method == "general_pairwise":
            return shapley_knn_general(d, val_set, k, ut, engine="pairwise")
        if method == "map_fast":
            return shapley_knn_map_fast(d, val_set, k, ut)
        if method in ("1nn_map", "1nn_fork"):
            if k != 1:
                raise ConfigError(f"{method} only supports K = 1, got K = {k}")
            fn = shapley_1nn_map if method == "1nn_map" else shapley_1nn_fork
            return fn(d, val_set, ut)
        if method in TMC_ITERATIONS:
            return tmc_shapley(d, val_set, k, ut, TMC_ITERATIONS[method], truncation, seed)
        if method == "brute_force":
            return brute_force_shapley(d, val_set, k, ut)
    except ConfigError:
        raise
    except PipeshapError as exc:
        raise ConfigError(str(exc)) from None
    raise ConfigError(f"unknown importance method {method!r}")


def repair_key(report: ShapleyReport, utility: str) -> dict[str, float]:
    """Per-variable sort key: repair the smallest first.

    For loss-like utilities a large value means the variable makes the
    metric worse, so the sign is flipped.
    """
    sign = -1.0 if utility in LOWER_IS_BETTER else 1.0
    return {v: sign * float(x) for v, x in zip(report.variables, report.values)}
