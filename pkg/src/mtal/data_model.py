"""Canonical dataset, split, and standardization containers.

A dataset is n units with d covariates each; every unit belongs to one of
k groups and carries the outcome observed under its own group. When the
data is synthetic or semi-synthetic, the full n-by-k matrix of outcomes
under every group is known and rides along as ``potential_outcomes``
(and, for benchmarks that provide them, noise-free conditional means as
``noiseless_means``). Imputed outcome matrices produced by models are
plain (n, k) float arrays with the same column convention.

Datasets are treated as immutable after construction and are safe to
share across concurrent readers.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError, ValidationError


@dataclass(frozen=True)
class Dataset:
    covariates: np.ndarray  # (n, d)
    group: np.ndarray  # (n,) ints in 0..group_count-1
    factual_outcome: np.ndarray  # (n,)
    group_count: int
    potential_outcomes: np.ndarray | None = None  # (n, k) when ground truth is known
    noiseless_means: np.ndarray | None = None  # (n, k) noise-free outcome surfaces
    feature_names: tuple[str, ...] | None = None
    group_labels: tuple[str, ...] | None = None  # original labels, index = internal id

    def __post_init__(self):
        object.__setattr__(self, "covariates", np.asarray(self.covariates, dtype=np.float64))
        object.__setattr__(self, "group", np.asarray(self.group, dtype=np.int64))
        object.__setattr__(
            self, "factual_outcome", np.asarray(self.factual_outcome, dtype=np.float64)
        )
        for name in ("potential_outcomes", "noiseless_means"):
            val = getattr(self, name)
            if val is not None:
                object.__setattr__(self, name, np.asarray(val, dtype=np.float64))

    @property
    def n_units(self) -> int:
        return self.covariates.shape[0]

    @property
    def n_features(self) -> int:
        return self.covariates.shape[1]

    def group_sizes(self) -> np.ndarray:
        return np.bincount(self.group, minlength=self.group_count)


@dataclass(frozen=True)
class Batch:
    """A slice of dataset rows, as passed to losses and training steps."""

    covariates: np.ndarray
    group: np.ndarray
    outcome: np.ndarray

    @property
    def n_units(self) -> int:
        return self.covariates.shape[0]

    @classmethod
    def from_indices(cls, dataset: Dataset, indices) -> "Batch":
        idx = np.asarray(indices, dtype=np.int64)
        return cls(
            covariates=dataset.covariates[idx],
            group=dataset.group[idx],
            outcome=dataset.factual_outcome[idx],
        )


@dataclass(frozen=True)
class Split:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray


@dataclass
class ValidationReport:
    ok: bool
    warnings: list[str] = field(default_factory=list)


def validate(dataset: Dataset, min_group_size: int = 5) -> ValidationReport:
    """Check dataset invariants; warn on thin groups; never mutate.

    Raises ValidationError naming the offending field on any invariant
    violation; groups with fewer than ``min_group_size`` units produce a
    positivity warning in the returned report.
    """
    x, g, y = dataset.covariates, dataset.group, dataset.factual_outcome
    n = x.shape[0]
    if n == 0 or x.ndim != 2 or x.shape[1] == 0:
        raise ValidationError("covariates: need a non-empty (n, d) matrix")
    if g.shape != (n,):
        raise ValidationError(f"group: expected shape ({n},), got {g.shape}")
    if y.shape != (n,):
        raise ValidationError(f"factual_outcome: expected shape ({n},), got {y.shape}")
    if dataset.group_count <= 0:
        raise ValidationError("group_count: must be positive")
    if not np.all(np.isfinite(x)):
        raise ValidationError("covariates: non-finite entries")
    if not np.all(np.isfinite(y)):
        raise ValidationError("factual_outcome: non-finite entries")
    if g.min() < 0 or g.max() >= dataset.group_count:
        raise ValidationError(
            f"group: values must lie in 0..{dataset.group_count - 1}, "
            f"found range [{g.min()}, {g.max()}]"
        )
    po = dataset.potential_outcomes
    if po is not None:
        if po.shape != (n, dataset.group_count):
            raise ValidationError(
                f"potential_outcomes: expected shape ({n}, {dataset.group_count}), got {po.shape}"
            )
        if not np.all(np.isfinite(po)):
            raise ValidationError("potential_outcomes: non-finite entries")
        factual_col = po[np.arange(n), g]
        if not np.array_equal(factual_col, y):
            bad = int(np.nonzero(factual_col != y)[0][0])
            raise ValidationError(
                "potential_outcomes: consistency violation at unit "
                f"{bad}: matrix entry {factual_col[bad]!r} != factual outcome {y[bad]!r}"
            )
    nm = dataset.noiseless_means
    if nm is not None and nm.shape != (n, dataset.group_count):
        raise ValidationError(
            f"noiseless_means: expected shape ({n}, {dataset.group_count}), got {nm.shape}"
        )

    report = ValidationReport(ok=True)
    sizes = dataset.group_sizes()
    for t, size in enumerate(sizes):
        if size < min_group_size:
            report.warnings.append(
                f"positivity: group {t} has {size} units (< {min_group_size})"
            )
    return report


def stratified_split(dataset: Dataset, fractions, rng: np.random.Generator) -> Split:
    """Per-group train/val/test split in the given proportions.

    Proportions are realized per group by largest-remainder rounding;
    every group keeps at least one training unit when it has any units. A
    group smaller than the number of requested parts goes entirely to the
    training set with a warning.
    """
    fractions = tuple(float(f) for f in fractions)
    if len(fractions) != 3 or any(f < 0 for f in fractions):
        raise ConfigError(f"fractions must be three non-negative numbers, got {fractions}")
    if not np.isclose(sum(fractions), 1.0):
        raise ConfigError(f"fractions must sum to 1, got {fractions}")

    parts_wanted = sum(1 for f in fractions if f > 0)
    buckets = ([], [], [])
    for t in range(dataset.group_count):
        members = np.nonzero(dataset.group == t)[0]
        if members.size == 0:
            continue
        members = members[rng.permutation(members.size)]
        if members.size < parts_wanted:
            warnings.warn(
                f"group {t} has only {members.size} units; assigning all to train",
                stacklevel=2,
            )
            buckets[0].extend(members.tolist())
            continue
        counts = _largest_remainder(members.size, fractions)
        if counts[0] == 0:
            # steal one unit for train from the fullest other bucket
            donor = int(np.argmax(counts[1:])) + 1
            counts[donor] -= 1
            counts[0] += 1
        start = 0
        for b, c in enumerate(counts):
            buckets[b].extend(members[start : start + c].tolist())
            start += c
    return Split(
        train=np.array(sorted(buckets[0]), dtype=np.int64),
        val=np.array(sorted(buckets[1]), dtype=np.int64),
        test=np.array(sorted(buckets[2]), dtype=np.int64),
    )


def _largest_remainder(total: int, fractions) -> list[int]:
    raw = [f * total for f in fractions]
    counts = [int(np.floor(r)) for r in raw]
    remainders = [r - c for r, c in zip(raw, counts)]
    shortfall = total - sum(counts)
    # break remainder ties toward earlier buckets (train first) for determinism
    order = sorted(range(len(fractions)), key=lambda i: (-remainders[i], i))
    for i in order[:shortfall]:
        counts[i] += 1
    return counts


@dataclass(frozen=True)
class Scaler:
    """Affine standardization fitted on the training split; invertible."""

    x_mean: np.ndarray
    x_std: np.ndarray
    y_mean: float
    y_std: float

    def transform_x(self, x: np.ndarray) -> np.ndarray:
        return (x - self.x_mean) / self.x_std

    def invert_x(self, x: np.ndarray) -> np.ndarray:
        return x * self.x_std + self.x_mean

    def transform_y(self, y: np.ndarray) -> np.ndarray:
        return (y - self.y_mean) / self.y_std

    def invert_y(self, y: np.ndarray) -> np.ndarray:
        return y * self.y_std + self.y_mean

    def to_dict(self) -> dict:
        return {
            "x_mean": self.x_mean.tolist(),
            "x_std": self.x_std.tolist(),
            "y_mean": self.y_mean,
            "y_std": self.y_std,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Scaler":
        return cls(
            x_mean=np.asarray(d["x_mean"], dtype=np.float64),
            x_std=np.asarray(d["x_std"], dtype=np.float64),
            y_mean=float(d["y_mean"]),
            y_std=float(d["y_std"]),
        )

    @classmethod
    def identity(cls, d: int) -> "Scaler":
        return cls(x_mean=np.zeros(d), x_std=np.ones(d), y_mean=0.0, y_std=1.0)


STD_FLOOR = 1e-8


def standardize(dataset: Dataset, split: Split):
    """Shift/scale covariates and outcomes by train-split statistics.

    Standard deviations are floored at 1e-8 so constant columns stay
    finite. Returns (transformed dataset, scaler); metrics are always
    computed back on the original scale via the scaler.
    """
    if split.train.size == 0:
        raise DataError("standardize requires a non-empty training split")
    x_train = dataset.covariates[split.train]
    y_train = dataset.factual_outcome[split.train]
    scaler = Scaler(
        x_mean=x_train.mean(axis=0),
        x_std=np.maximum(x_train.std(axis=0), STD_FLOOR),
        y_mean=float(y_train.mean()),
        y_std=float(max(y_train.std(), STD_FLOOR)),
    )
    transformed = Dataset(
        covariates=scaler.transform_x(dataset.covariates),
        group=dataset.group,
        factual_outcome=scaler.transform_y(dataset.factual_outcome),
        group_count=dataset.group_count,
        potential_outcomes=(
            scaler.transform_y(dataset.potential_outcomes)
            if dataset.potential_outcomes is not None
            else None
        ),
        noiseless_means=(
            scaler.transform_y(dataset.noiseless_means)
            if dataset.noiseless_means is not None
            else None
        ),
        feature_names=dataset.feature_names,
        group_labels=dataset.group_labels,
    )
    return transformed, scaler
