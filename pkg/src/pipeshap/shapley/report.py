from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ShapleyReport:
    """Per-variable importance values, aligned with ``variables``.

    ``per_validation`` holds the unweighted per-validation-tuple values when
    the method computes them, ``stderr`` the standard error for sampled
    estimates.
    """

    variables: tuple[str, ...]
    values: np.ndarray
    method: str
    k: int
    utility: str
    wall_time: float
    seed: int | None = None
    stderr: np.ndarray | None = None
    per_validation: np.ndarray | None = None

    def __getitem__(self, var: str) -> float:
        return float(self.values[self.variables.index(var)])

    def as_dict(self) -> dict[str, float]:
        return {v: float(x) for v, x in zip(self.variables, self.values)}

    def ascending(self) -> list[tuple[str, float]]:
        """(variable, value) sorted by value, ties by variable order."""
        idx = sorted(range(len(self.variables)), key=lambda k: (self.values[k], k))
        return [(self.variables[k], float(self.values[k])) for k in idx]
