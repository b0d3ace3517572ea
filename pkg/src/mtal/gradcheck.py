"""Backprop verification against the central finite-difference oracle.

Builds small random generator/discriminator pairs and random balanced
batches, then compares analytic gradients of both training losses with
central differences, parameter by parameter. Relative error per entry is
|bp - fd| / max(floor, |bp| + |fd|) with a small floor so that near-zero
gradients are judged on the finite-difference noise scale.

Finite differences are invalid within h of a relu kink or an L1 kink (the
loss is not differentiable there), so candidate configurations whose relu
pre-activations or penalized weights sit inside a safety margin of zero
are redrawn; the check then runs at points where the losses are smooth.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import discriminator as disc_mod
from . import generator as gen_mod
from .data_model import Batch
from .diffcore import finite_diff_gradients

KINK_MARGIN = 1e-3
ERROR_FLOOR = 1e-4


@dataclass
class GradcheckCase:
    seed: int
    d: int
    k: int
    generator_error: float
    discriminator_error: float
    passed: bool


@dataclass
class GradcheckResult:
    cases: list[GradcheckCase] = field(default_factory=list)
    tolerance: float = ERROR_FLOOR

    @property
    def max_error(self) -> float:
        if not self.cases:
            return float("nan")
        return max(max(c.generator_error, c.discriminator_error) for c in self.cases)

    @property
    def passed(self) -> bool:
        return bool(self.cases) and all(c.passed for c in self.cases)


def relative_errors(bp, fd, floor: float = ERROR_FLOOR) -> float:
    worst = 0.0
    for b, f in zip(bp, fd):
        rel = np.abs(b - f) / np.maximum(floor, np.abs(b) + np.abs(f))
        worst = max(worst, float(rel.max()))
    return worst


def _draw_case(rng: np.random.Generator):
    d = int(rng.integers(2, 9))
    k = int(rng.integers(2, 5))
    m = int(rng.integers(2, 4))
    gen_layers = int(rng.integers(1, 3))
    width = int(rng.integers(3, 7))
    top_width = int(rng.integers(4, 7))
    lam = float(10.0 ** rng.uniform(-3, -1))
    alpha = float(10.0 ** rng.uniform(-3, -1))
    gen = gen_mod.build_generator(d, k, gen_layers, width, lam, alpha, rng,
                                  dropout_rate=0.0)
    disc = disc_mod.build_discriminator(d, k, 2, top_width, lam, alpha, rng,
                                        dropout_rate=0.0)
    batch = Batch(
        covariates=rng.normal(size=(m * k, d)),
        group=np.repeat(np.arange(k), m),
        outcome=rng.normal(size=m * k),
    )
    return gen, disc, batch


def _min_kink_distance(gen, disc, batch) -> float:
    """Smallest |relu pre-activation| or |penalized weight| in the losses."""
    smallest = np.inf
    for t, head in enumerate(gen.heads):
        _, cache = gen_mod.head_forward_cached(head, batch.covariates)
        for _, pre, _ in cache["layers"]:
            smallest = min(smallest, float(np.abs(pre).min()))
    for t in range(disc.group_count):
        own = batch.group == t
        cf_pred = gen_mod.head_forward(gen.heads[t], batch.covariates[~own])
        x_head = np.vstack((batch.covariates[own], batch.covariates[~own]))
        y_cand = np.concatenate((batch.outcome[own], cf_pred))
        _, cache = disc_mod.head_forward_cached(disc.heads[t], x_head, y_cand)
        for _, pre, _ in cache["layers"]:
            smallest = min(smallest, float(np.abs(pre).min()))
    for w in gen.penalized_weights() + disc.penalized_weights():
        smallest = min(smallest, float(np.abs(w).min()))
    return smallest


def check_one(seed: int, h: float = 1e-5, corrupt: bool = False) -> GradcheckCase:
    """Gradcheck one random configuration (redrawn away from kinks)."""
    for attempt in range(64):
        rng = np.random.default_rng(1_000_000 * (attempt + 1) + seed)
        gen, disc, batch = _draw_case(rng)
        if _min_kink_distance(gen, disc, batch) >= KINK_MARGIN:
            break
    else:
        raise RuntimeError(f"seed {seed}: no kink-free configuration found")

    gen_params = gen.parameters()
    disc_params = disc.parameters()

    _, bp_gen = gen_mod.generator_loss_and_grads(gen, batch)
    if corrupt:
        bp_gen[0] = bp_gen[0] + 1e-2
    fd_gen = finite_diff_gradients(
        lambda: gen_mod.generator_factual_loss(gen, batch), gen_params, h=h
    )
    gen_err = relative_errors(bp_gen, fd_gen)

    _, bp_disc, bp_gen_through = disc_mod.discriminator_loss_and_grads(disc, gen, batch)
    fd_all = finite_diff_gradients(
        lambda: disc_mod.discriminator_loss(disc, gen, batch),
        disc_params + gen_params, h=h,
    )
    disc_err = relative_errors(bp_disc + bp_gen_through, fd_all)

    return GradcheckCase(
        seed=seed, d=gen.input_dim, k=gen.group_count,
        generator_error=gen_err, discriminator_error=disc_err,
        passed=max(gen_err, disc_err) < ERROR_FLOOR,
    )


def run_gradcheck(seed_count: int = 20, base_seed: int = 0, h: float = 1e-5,
                  tolerance: float = ERROR_FLOOR, corrupt: bool = False) -> GradcheckResult:
    result = GradcheckResult(tolerance=tolerance)
    for i in range(seed_count):
        case = check_one(base_seed + i, h=h, corrupt=corrupt)
        case.passed = max(case.generator_error, case.discriminator_error) < tolerance
        result.cases.append(case)
    return result
