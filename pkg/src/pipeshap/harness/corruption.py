"""Label corruption for the repair simulation."""

from __future__ import annotations

import numpy as np

from ..errors import ConfigError
from ..provenance import TrackedDataset


def repair_units(d: TrackedDataset) -> tuple[tuple[str, ...], dict[str, np.ndarray]]:
    """Repair units in variable order and the tuple indices each one owns.

    A unit is a provider variable for fork pipelines and a tuple's own
    (fact) variable otherwise.
    """
    if d.pipeline_class == "fork":
        owned = {v: np.array(ix, dtype=np.int64) for v, ix in d.tuples_of.items() if ix}
    else:
        owned = {}
        for r, t in enumerate(d.tuples):
            owned.setdefault(t.source_id, []).append(r)
        owned = {v: np.array(ix, dtype=np.int64) for v, ix in owned.items()}
    units = tuple(v for v in d.variables if v in owned)
    return units, owned


def _flip(labels: np.ndarray, mask: np.ndarray, n_labels: int, rng: np.random.Generator) -> np.ndarray:
    out = labels.copy()
    if n_labels < 2:
        return out
    # a uniform draw among the other labels
    step = rng.integers(1, n_labels, size=len(labels))
    out[mask] = (labels[mask] + step[mask]) % n_labels
    return out


def provider_rates(n_providers: int, bias_mode: str, rng: np.random.Generator) -> np.ndarray:
    rates = np.linspace(0.0, 1.0, n_providers) if n_providers > 1 else np.zeros(n_providers)
    if bias_mode == "shuffled":
        rates = rng.permutation(rates)
    elif bias_mode != "linear":
        raise ConfigError(f"unknown provider bias mode {bias_mode!r}")
    return rates


def corrupt_labels(d: TrackedDataset, flip_probability: float, rng: np.random.Generator,
                   bias_mode: str = "linear") -> tuple[TrackedDataset, np.ndarray]:
    """Return the corrupted dataset and the ground-truth label vector.

    Fork datasets ignore ``flip_probability``: provider k of G flips each of
    its labels with probability k / (G - 1), in variable order.
    """
    if not 0.0 <= flip_probability <= 1.0:
        raise ConfigError(f"flip_probability must be in [0, 1], got {flip_probability}")
    truth = d.label_array.copy()
    n = len(truth)
    if d.pipeline_class == "fork":
        providers = [v for v in d.variables]
        rates = dict(zip(providers, provider_rates(len(providers), bias_mode, rng)))
        p = np.array([rates[next(iter(t.provenance.variables))] for t in d.tuples])
    else:
        p = np.full(n, flip_probability)
    mask = rng.random(n) < p
    noisy = _flip(truth, mask, len(d.labels), rng)
    return d.with_labels(noisy), truth
