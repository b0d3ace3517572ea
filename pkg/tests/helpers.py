"""Shared test fixtures: benchmark-layout semi-synthetic replicates.

Real benchmark files are not shipped with the repository, so tests that
exercise the two-group replicate pipeline generate files with the same
layout and difficulty profile: 747 units, 25 covariates (6 continuous,
19 binary), 608 control / 139 treated with confounded assignment, a
nonlinear control surface and a linear treated surface (noiseless means
kept alongside noisy draws), mean effect around 4.
"""

from pathlib import Path

import numpy as np

N_UNITS = 747
N_TREATED = 139
N_COVARIATES = 25
N_CONTINUOUS = 6


def make_replicate(seed: int):
    """One replicate: (x, t, y_factual, y_cfactual, mu0, mu1)."""
    rng = np.random.default_rng(90_000 + seed)
    x_cont = rng.normal(size=(N_UNITS, N_CONTINUOUS))
    probs = rng.uniform(0.2, 0.8, size=N_COVARIATES - N_CONTINUOUS)
    x_bin = (rng.random((N_UNITS, N_COVARIATES - N_CONTINUOUS)) < probs).astype(float)
    x = np.column_stack([x_cont, x_bin])

    beta = rng.choice([0.0, 0.1, 0.2, 0.3, 0.4], size=N_COVARIATES,
                      p=[0.6, 0.1, 0.1, 0.1, 0.1])
    xs = (x - x.mean(axis=0)) / np.maximum(x.std(axis=0), 1e-8)
    mu0 = np.exp((xs + 0.5) @ beta)
    mu1 = xs @ beta
    mu1 = mu1 - np.mean(mu1 - mu0) + 4.0  # mean effect pinned at 4

    # confounded assignment: high-propensity units get treated
    gamma = rng.normal(scale=0.4, size=N_COVARIATES)
    score = xs @ gamma + rng.normal(scale=0.5, size=N_UNITS)
    treated_idx = np.argsort(score)[-N_TREATED:]
    t = np.zeros(N_UNITS, dtype=int)
    t[treated_idx] = 1

    y0 = mu0 + rng.normal(size=N_UNITS)
    y1 = mu1 + rng.normal(size=N_UNITS)
    y_factual = np.where(t == 1, y1, y0)
    y_cfactual = np.where(t == 1, y0, y1)
    return x, t, y_factual, y_cfactual, mu0, mu1


def write_replicate_csv(path, seed: int) -> None:
    x, t, yf, ycf, mu0, mu1 = make_replicate(seed)
    rows = np.column_stack([t.astype(float), yf, ycf, mu0, mu1, x])
    with Path(path).open("w") as fh:
        for row in rows:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def write_replicate_dir(directory, count: int) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for i in range(count):
        write_replicate_csv(directory / f"replicate_{i + 1}.csv", seed=i)
    return directory
