"""Evaluation metrics for potential-outcome estimates.

Binary-group effect errors (squared error of unit-level effect estimates
and absolute error of the average effect), their multi-group pairwise
averages, full-matrix mean squared error for synthetic ground truth, and
group response-rate summaries. All functions are pure and operate on
(n, k) outcome matrices sharing the dataset's column convention.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .data_model import Dataset
from .errors import DataError, ShapeError


def _check_same_shape(true_po, est_po, cols=None):
    true_po = np.asarray(true_po, dtype=np.float64)
    est_po = np.asarray(est_po, dtype=np.float64)
    if true_po.shape != est_po.shape:
        raise ShapeError(f"shape mismatch: {true_po.shape} vs {est_po.shape}")
    if true_po.ndim != 2:
        raise ShapeError(f"expected (n, k) matrices, got ndim={true_po.ndim}")
    if cols is not None and true_po.shape[1] != cols:
        raise ShapeError(f"expected {cols} columns, got {true_po.shape[1]}")
    return true_po, est_po


def pehe(true_po, est_po):
    """Unit-level effect error for two groups: (epsilon, sqrt(epsilon)).

    epsilon is the mean squared difference between true and estimated
    per-unit effects (column 1 minus column 0 of each matrix).
    """
    true_po, est_po = _check_same_shape(true_po, est_po, cols=2)
    ite_true = true_po[:, 1] - true_po[:, 0]
    ite_est = est_po[:, 1] - est_po[:, 0]
    eps = float(np.mean((ite_true - ite_est) ** 2))
    return eps, float(np.sqrt(eps))


def ate_error(true_po, est_po) -> float:
    """Absolute difference between true and estimated average effects."""
    true_po, est_po = _check_same_shape(true_po, est_po, cols=2)
    ate_true = float(np.mean(true_po[:, 1] - true_po[:, 0]))
    ate_est = float(np.mean(est_po[:, 1] - est_po[:, 0]))
    return abs(ate_true - ate_est)


def multi_metric(true_po, est_po, which: str) -> float:
    """Pairwise average of a binary metric over all unordered group pairs.

    ``which`` is "pehe" (returns the squared-error epsilon) or "ate". At
    k = 2 this equals the binary metric bit-exactly (single pair).
    """
    true_po, est_po = _check_same_shape(true_po, est_po)
    k = true_po.shape[1]
    if k < 2:
        raise DataError(f"pairwise metrics need k >= 2 groups, got {k}")
    values = []
    for j, t in combinations(range(k), 2):
        pair_true = true_po[:, [j, t]]
        pair_est = est_po[:, [j, t]]
        if which == "pehe":
            values.append(pehe(pair_true, pair_est)[0])
        elif which == "ate":
            values.append(ate_error(pair_true, pair_est))
        else:
            raise DataError(f"unknown pairwise metric {which!r}")
    if len(values) == 1:
        return values[0]
    return float(np.sum(values) / len(values))


def mse_potential(true_po, est_po) -> float:
    """Mean squared error over every cell of the full (n, K) matrices."""
    true_po, est_po = _check_same_shape(true_po, est_po)
    return float(np.mean((true_po - est_po) ** 2))


def tgor(outcomes, dataset: Dataset, group: int | None = None) -> float:
    """Group response-rate summary.

    With ``group=None`` (mutation-level): the mean over all n*K cells of
    the full outcome matrix, which must be fully populated (impute
    counterfactuals first for observational data). With ``group=t``
    (tumor-level): the mean observed outcome of that group's units; the
    matrix argument is ignored and may be None.
    """
    if group is not None:
        members = dataset.group == group
        n_c = int(np.sum(members))
        if n_c == 0:
            raise DataError(f"group {group} has no units")
        return float(np.mean(dataset.factual_outcome[members]))
    if outcomes is None:
        raise DataError(
            "mutation-level response rate needs the full potential-outcome "
            "matrix; impute counterfactuals first"
        )
    outcomes = np.asarray(outcomes, dtype=np.float64)
    if outcomes.shape != (dataset.n_units, dataset.group_count):
        raise ShapeError(
            f"expected a full ({dataset.n_units}, {dataset.group_count}) matrix, "
            f"got {outcomes.shape}"
        )
    if not np.all(np.isfinite(outcomes)):
        raise DataError(
            "mutation-level response rate needs a fully populated outcome "
            "matrix with finite entries"
        )
    return float(np.mean(outcomes))


def summarize(reports: list["MetricsReport"]) -> list[dict]:
    """Mean and standard deviation per (dataset, model, metric) over replicates.

    One output row per distinct key, carrying the replicate count; this is
    the presentation format for tables aggregated over replicates/seeds.
    """
    grouped: dict[tuple, list[float]] = {}
    for report in reports:
        for name, value in report.metrics.items():
            grouped.setdefault((report.dataset_id, report.model_id, name), []).append(value)
    rows = []
    for (dataset_id, model_id, name), values in grouped.items():
        arr = np.asarray(values, dtype=np.float64)
        rows.append({
            "dataset_id": dataset_id,
            "model_id": model_id,
            "metric": name,
            "mean": float(arr.mean()),
            "std": float(arr.std()),
            "count": int(arr.size),
        })
    return rows


@dataclass
class MetricsReport:
    """Named scalar metrics plus identifying metadata for one evaluation."""

    dataset_id: str
    model_id: str
    metrics: dict[str, float] = field(default_factory=dict)
    replicate: int | None = None
    seed: int | None = None

    def rows(self) -> list[dict]:
        """Flat rows, one per metric, in insertion order."""
        return [
            {
                "dataset_id": self.dataset_id,
                "model_id": self.model_id,
                "replicate": self.replicate,
                "seed": self.seed,
                "metric": name,
                "value": value,
            }
            for name, value in self.metrics.items()
        ]
