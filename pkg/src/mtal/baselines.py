"""Reference imputers: nearest-neighbor matching and group means.

Both fill the full (n, k) outcome matrix for every unit of a dataset from
training-split units only. Cell (i, t) of the nearest-neighbor imputer is
the mean observed outcome of the closest training units in group t
(factual cells included, for a uniform evaluation); the group-mean imputer
is its degenerate limit with the neighborhood spanning the whole group.
"""

from __future__ import annotations

from dataclasses import dataclass
import warnings

import numpy as np

from .data_model import Dataset, Split
from .errors import ConfigError, DataError


@dataclass(frozen=True)
class KnnConfig:
    neighbor_count: int = 5
    distance: str = "euclidean"
    standardize_inputs: bool = True

    def __post_init__(self):
        if self.neighbor_count < 1:
            raise ConfigError(f"neighbor_count must be >= 1, got {self.neighbor_count}")
        if self.distance != "euclidean":
            raise ConfigError(f"unsupported distance {self.distance!r}")


def knn_impute(dataset: Dataset, split: Split, config: KnnConfig) -> np.ndarray:
    """Fill every cell from the nearest training units of the target group.

    Distance ties break toward the lowest unit index; neighbor outcomes
    are averaged in unit-index order. Groups with fewer training units
    than requested neighbors fall back to all available with a warning.
    """
    x = dataset.covariates
    if config.standardize_inputs:
        train_x = x[split.train]
        std = np.maximum(train_x.std(axis=0), 1e-8)
        x = (x - train_x.mean(axis=0)) / std

    imputed = np.empty((dataset.n_units, dataset.group_count))
    for t in range(dataset.group_count):
        members = split.train[dataset.group[split.train] == t]
        if members.size == 0:
            raise DataError(f"group {t} has no training units")
        k_eff = config.neighbor_count
        if members.size < k_eff:
            warnings.warn(
                f"group {t} has {members.size} training units < "
                f"neighbor_count={config.neighbor_count}; using all",
                stacklevel=2,
            )
            k_eff = members.size
        diffs = x[:, None, :] - x[members][None, :, :]
        dists = np.sqrt(np.sum(diffs * diffs, axis=2))
        # stable argsort keeps ascending unit index among equal distances
        order = np.argsort(dists, axis=1, kind="stable")[:, :k_eff]
        neighbor_units = members[order]
        neighbor_units.sort(axis=1)  # average in unit-index order
        imputed[:, t] = dataset.factual_outcome[neighbor_units].mean(axis=1)
    return imputed


def mean_impute(dataset: Dataset, split: Split) -> np.ndarray:
    """Every cell of column t is the training mean outcome of group t."""
    imputed = np.empty((dataset.n_units, dataset.group_count))
    for t in range(dataset.group_count):
        members = split.train[dataset.group[split.train] == t]
        if members.size == 0:
            raise DataError(f"group {t} has no training units")
        imputed[:, t] = np.mean(dataset.factual_outcome[members])
    return imputed
