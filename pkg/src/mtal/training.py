"""Adversarial minimax training loop.

Each step draws a group-balanced batch, takes one discriminator update
(ascent on -beta * discriminator loss, i.e. descent scaled by beta), then
several generator updates on (factual loss - beta * discriminator loss)
against the frozen discriminator. Epochs are monitored by validation
factual MSE on the original outcome scale; the generator snapshot with the
best validation score is restored at the end, and training stops early
after ``patience`` epochs without improvement.

A single run is sequential and deterministic given (seed, config, data);
parallelism belongs at the level of independent runs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import discriminator as disc_mod
from . import generator as gen_mod
from .data_model import Batch, Dataset, Split, standardize, stratified_split, validate
from .diffcore import AdamState, adam_step, init_adam
from .errors import ConfigError, DataError
from .generator import OutcomeGenerator
from .discriminator import TFDiscriminator


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters; the searched ranges mirror the reference grid."""

    beta: float = 1e-2  # adversarial trade-off
    lam: float = 1e-3  # L2 penalty weight
    alpha: float = 1e-3  # L1 penalty weight
    layers: int = 2  # hidden layers per head (both networks)
    width: int = 50  # generator width; discriminator widths halve from here
    units_per_group: int = 50  # m: batch rows per group
    gen_steps: int = 3  # generator updates per discriminator update
    max_epochs: int = 300
    patience: int = 30
    learning_rate: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8
    dropout: float = 0.1
    split_fractions: tuple[float, float, float] = (0.63, 0.27, 0.10)
    seed: int = 0

    def validate(self) -> None:
        if self.beta < 0:
            raise ConfigError(f"beta must be >= 0, got {self.beta}")
        if self.units_per_group < 1:
            raise ConfigError(f"units_per_group must be >= 1, got {self.units_per_group}")
        if self.gen_steps < 1:
            raise ConfigError(f"gen_steps must be >= 1, got {self.gen_steps}")
        if self.max_epochs < 0:
            raise ConfigError(f"max_epochs must be >= 0, got {self.max_epochs}")
        if self.patience < 1:
            raise ConfigError(f"patience must be >= 1, got {self.patience}")

    def to_dict(self) -> dict:
        return {
            "beta": self.beta,
            "lam": self.lam,
            "alpha": self.alpha,
            "layers": self.layers,
            "width": self.width,
            "units_per_group": self.units_per_group,
            "gen_steps": self.gen_steps,
            "max_epochs": self.max_epochs,
            "patience": self.patience,
            "learning_rate": self.learning_rate,
            "adam_beta1": self.adam_beta1,
            "adam_beta2": self.adam_beta2,
            "adam_epsilon": self.adam_epsilon,
            "dropout": self.dropout,
            "split_fractions": list(self.split_fractions),
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        d["split_fractions"] = tuple(d.get("split_fractions", (0.63, 0.27, 0.10)))
        return cls(**d)


@dataclass
class TrainHistory:
    """One record per completed epoch."""

    epoch: list[int] = field(default_factory=list)
    gen_loss: list[float] = field(default_factory=list)
    disc_loss: list[float] = field(default_factory=list)
    val_mse: list[float] = field(default_factory=list)
    disc_balanced_accuracy: list[float] = field(default_factory=list)
    best_epoch: int = -1

    def append(self, epoch, gen_loss, disc_loss, val_mse, acc):
        self.epoch.append(epoch)
        self.gen_loss.append(gen_loss)
        self.disc_loss.append(disc_loss)
        self.val_mse.append(val_mse)
        self.disc_balanced_accuracy.append(acc)

    def as_rows(self) -> list[dict]:
        return [
            {
                "epoch": e,
                "gen_loss": gl,
                "disc_loss": dl,
                "val_mse": vm,
                "disc_balanced_accuracy": acc,
            }
            for e, gl, dl, vm, acc in zip(
                self.epoch, self.gen_loss, self.disc_loss, self.val_mse,
                self.disc_balanced_accuracy,
            )
        ]


def balanced_batch(dataset: Dataset, split: Split, m: int, rng: np.random.Generator) -> Batch:
    """m training units per group, sampled uniformly with replacement."""
    return _balanced_from_indices(dataset, split.train, m, rng)


def _balanced_from_indices(dataset, indices, m, rng) -> Batch:
    indices = np.asarray(indices)
    picked = []
    for t in range(dataset.group_count):
        members = indices[dataset.group[indices] == t]
        if members.size == 0:
            raise DataError(f"group {t} has no units to sample from (positivity failure)")
        picked.append(members[rng.integers(0, members.size, size=m)])
    return Batch.from_indices(dataset, np.concatenate(picked))


def adversarial_step(
    gen: OutcomeGenerator,
    disc: TFDiscriminator,
    batch: Batch,
    config: TrainConfig,
    gen_opt: AdamState,
    disc_opt: AdamState,
    rng: np.random.Generator,
):
    """One discriminator update then ``gen_steps`` generator updates.

    The discriminator's objective is the beta-scaled minimax term, so at
    beta = 0 its parameters do not move; the generator descends
    (factual loss - beta * discriminator loss), recomputing its candidate
    outcomes each sub-step while the discriminator stays frozen. The same
    batch is reused for all sub-steps. Returns the post-step values
    (generator objective, discriminator loss) evaluated without dropout.
    """
    beta = config.beta
    _, d_grads, _ = disc_mod.discriminator_loss_and_grads(
        disc, gen, batch, training=True, rng=rng, want_gen=False
    )
    adam_step(
        disc.parameters(), [beta * g for g in d_grads], disc_opt, disc.parameter_names()
    )

    for _ in range(config.gen_steps):
        _, g_factual = gen_mod.generator_loss_and_grads(gen, batch, training=True, rng=rng)
        if beta != 0.0:
            _, _, g_adv = disc_mod.discriminator_loss_and_grads(
                disc, gen, batch, training=True, rng=rng, want_disc=False
            )
            total = [gf - beta * ga for gf, ga in zip(g_factual, g_adv)]
        else:
            total = g_factual
        adam_step(gen.parameters(), total, gen_opt, gen.parameter_names())

    g_loss = gen_mod.generator_factual_loss(gen, batch)
    d_loss = disc_mod.discriminator_loss(disc, gen, batch)
    return g_loss - beta * d_loss, d_loss


def build_models(d: int, k: int, config: TrainConfig, rng: np.random.Generator):
    gen = gen_mod.build_generator(
        d, k, config.layers, config.width, config.lam, config.alpha, rng,
        dropout_rate=config.dropout,
    )
    disc = disc_mod.build_discriminator(
        d, k, max(2, config.layers), config.width, config.lam, config.alpha, rng,
        dropout_rate=config.dropout,
    )
    return gen, disc


def train(dataset: Dataset, config: TrainConfig, split: Split | None = None):
    """Full training run; returns (generator, discriminator, history).

    The returned generator carries the fitted scaler and the parameters of
    the epoch with the lowest validation factual MSE (original scale).
    """
    config.validate()
    validate(dataset)
    rng = np.random.default_rng(config.seed)
    if split is None:
        split = stratified_split(dataset, config.split_fractions, rng)
    if split.val.size == 0:
        raise ConfigError("training requires a non-empty validation split")
    std_ds, scaler = standardize(dataset, split)

    gen, disc = build_models(dataset.n_features, dataset.group_count, config, rng)
    gen.scaler = scaler
    gen_opt = init_adam(
        gen.parameters(), config.learning_rate, config.adam_beta1, config.adam_beta2,
        config.adam_epsilon,
    )
    disc_opt = init_adam(
        disc.parameters(), config.learning_rate, config.adam_beta1, config.adam_beta2,
        config.adam_epsilon,
    )

    history = TrainHistory()
    y_val = dataset.factual_outcome[split.val]
    steps_per_epoch = max(
        1, math.ceil(split.train.size / (config.units_per_group * dataset.group_count))
    )
    best_val = np.inf
    best_params = [p.copy() for p in gen.parameters()]
    stale = 0

    for epoch in range(config.max_epochs):
        g_sum = d_sum = 0.0
        for _ in range(steps_per_epoch):
            batch = balanced_batch(std_ds, split, config.units_per_group, rng)
            g_loss, d_loss = adversarial_step(gen, disc, batch, config, gen_opt, disc_opt, rng)
            g_sum += g_loss
            d_sum += d_loss

        val_pred_std = _factual_predictions(gen, std_ds, split.val)
        val_pred = scaler.invert_y(val_pred_std)
        val_mse = float(np.mean((val_pred - y_val) ** 2))
        acc_batch = _balanced_from_indices(std_ds, split.val, config.units_per_group, rng)
        acc = disc_mod.balanced_accuracy(disc, gen, acc_batch)
        history.append(epoch, g_sum / steps_per_epoch, d_sum / steps_per_epoch, val_mse, acc)

        if val_mse < best_val:
            best_val = val_mse
            best_params = [p.copy() for p in gen.parameters()]
            history.best_epoch = epoch
            stale = 0
        else:
            stale += 1
            if stale >= config.patience:
                break

    for p, best in zip(gen.parameters(), best_params):
        p[...] = best
    return gen, disc, history


def _factual_predictions(gen, dataset, indices) -> np.ndarray:
    preds = gen_mod.predict_potential_outcomes(gen, dataset.covariates[indices])
    return preds[np.arange(indices.size), dataset.group[indices]]


def impute_counterfactuals(gen: OutcomeGenerator, dataset: Dataset) -> np.ndarray:
    """Full (n, k) outcome matrix on the original scale, dropout disabled.

    ``dataset`` is on the original scale; covariates pass through the
    generator's fitted scaler and predictions are mapped back.
    """
    scaler = gen.scaler
    x = dataset.covariates if scaler is None else scaler.transform_x(dataset.covariates)
    preds = gen_mod.predict_potential_outcomes(gen, x)
    return preds if scaler is None else scaler.invert_y(preds)
