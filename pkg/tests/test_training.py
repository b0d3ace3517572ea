import numpy as np
import pytest

from mtal import discriminator as D
from mtal import generator as G
from mtal import training as T
from mtal.data_model import Dataset, Split
from mtal.diffcore import init_adam
from mtal.errors import ConfigError, DataError


def toy_dataset(n_per_group=60, k=2, d=4, seed=0):
    """Learnable synthetic data: group outcomes are distinct linear maps."""
    rng = np.random.default_rng(seed)
    n = n_per_group * k
    x = rng.normal(size=(n, d))
    group = np.repeat(np.arange(k), n_per_group)
    coefs = rng.uniform(-1, 1, size=(k, d))
    po = x @ coefs.T
    y = po[np.arange(n), group]
    return Dataset(
        covariates=x, group=group, factual_outcome=y, group_count=k, potential_outcomes=po
    )


def small_config(**overrides):
    base = dict(
        beta=1e-2, lam=1e-4, alpha=1e-4, layers=2, width=8, units_per_group=10,
        gen_steps=2, max_epochs=5, patience=3, dropout=0.0, seed=0,
    )
    base.update(overrides)
    return T.TrainConfig(**base)


class TestBalancedBatch:
    def test_counts_per_group(self):
        ds = toy_dataset(n_per_group=100, k=2)
        split = Split(train=np.arange(ds.n_units), val=np.array([], int), test=np.array([], int))
        batch = T.balanced_batch(ds, split, 50, np.random.default_rng(0))
        assert batch.n_units == 100
        assert np.sum(batch.group == 0) == 50 and np.sum(batch.group == 1) == 50

    def test_minimal_batch(self):
        ds = toy_dataset(n_per_group=5, k=3)
        split = Split(train=np.arange(ds.n_units), val=np.array([], int), test=np.array([], int))
        batch = T.balanced_batch(ds, split, 1, np.random.default_rng(1))
        assert batch.n_units == 3
        np.testing.assert_array_equal(np.sort(batch.group), [0, 1, 2])

    def test_single_unit_group_repeats(self):
        rng = np.random.default_rng(2)
        x = rng.normal(size=(6, 2))
        group = np.array([0, 0, 0, 0, 0, 1])
        ds = Dataset(covariates=x, group=group, factual_outcome=rng.normal(size=6), group_count=2)
        split = Split(train=np.arange(6), val=np.array([], int), test=np.array([], int))
        batch = T.balanced_batch(ds, split, 5, np.random.default_rng(3))
        rows_g1 = batch.covariates[batch.group == 1]
        np.testing.assert_array_equal(rows_g1, np.tile(x[5], (5, 1)))

    def test_empty_group_fails(self):
        ds = toy_dataset(n_per_group=10, k=2)
        train = np.nonzero(ds.group == 0)[0]  # group 1 missing from train
        split = Split(train=train, val=np.array([], int), test=np.array([], int))
        with pytest.raises(DataError, match="positivity"):
            T.balanced_batch(ds, split, 5, np.random.default_rng(4))

    def test_samples_only_from_split(self):
        ds = toy_dataset(n_per_group=50, k=2)
        train = np.concatenate([np.arange(0, 10), np.arange(50, 60)])
        split = Split(train=train, val=np.array([], int), test=np.array([], int))
        batch = T.balanced_batch(ds, split, 30, np.random.default_rng(5))
        train_rows = {tuple(r) for r in ds.covariates[train]}
        assert all(tuple(r) in train_rows for r in batch.covariates)


class TestAdversarialStep:
    def _setup(self, beta, seed=0):
        rng = np.random.default_rng(seed)
        config = small_config(beta=beta)
        gen, disc = T.build_models(4, 2, config, rng)
        ds = toy_dataset()
        split = Split(train=np.arange(ds.n_units), val=np.array([], int), test=np.array([], int))
        batch = T.balanced_batch(ds, split, 10, rng)
        gen_opt = init_adam(gen.parameters())
        disc_opt = init_adam(disc.parameters())
        return gen, disc, batch, config, gen_opt, disc_opt, rng

    def test_beta_zero_decouples(self):
        gen, disc, batch, config, gen_opt, disc_opt, rng = self._setup(beta=0.0, seed=1)
        disc_before = [p.copy() for p in disc.parameters()]

        # clone generator state for a pure factual-loss step comparison
        rng2 = np.random.default_rng(1)
        gen2, _ = T.build_models(4, 2, small_config(beta=0.0), rng2)
        for p2, p in zip(gen2.parameters(), gen.parameters()):
            p2[...] = p
        gen2_opt = init_adam(gen2.parameters())

        T.adversarial_step(gen, disc, batch, config, gen_opt, disc_opt, rng)
        for p, before in zip(disc.parameters(), disc_before):
            np.testing.assert_array_equal(p, before)  # beta=0: discriminator frozen

        from mtal.diffcore import adam_step
        from mtal.generator import generator_loss_and_grads

        for _ in range(config.gen_steps):
            _, grads = generator_loss_and_grads(gen2, batch)
            adam_step(gen2.parameters(), grads, gen2_opt)
        for p, p2 in zip(gen.parameters(), gen2.parameters()):
            np.testing.assert_array_equal(p, p2)

    def test_zero_sum_accounting(self):
        # discriminator step moves only disc params; generator steps only gen params
        gen, disc, batch, config, gen_opt, disc_opt, rng = self._setup(beta=0.1, seed=2)
        gen_before = [p.copy() for p in gen.parameters()]
        disc_before = [p.copy() for p in disc.parameters()]
        T.adversarial_step(gen, disc, batch, config, gen_opt, disc_opt, rng)
        assert any(not np.array_equal(p, b) for p, b in zip(gen.parameters(), gen_before))
        assert any(not np.array_equal(p, b) for p, b in zip(disc.parameters(), disc_before))
        # within-step freezing is structural: the discriminator optimizer ran once
        assert disc_opt.step == 1
        assert gen_opt.step == config.gen_steps

    def test_alternation_schedule(self, monkeypatch):
        # exactly one optimizer call on disc params, then G calls on gen params
        gen, disc, batch, config, gen_opt, disc_opt, rng = self._setup(beta=0.1, seed=4)
        calls = []
        import mtal.training as training_module
        real_adam_step = training_module.adam_step

        def recording_adam_step(params, grads, state, names=None):
            calls.append(id(params[0]))
            real_adam_step(params, grads, state, names)

        monkeypatch.setattr(training_module, "adam_step", recording_adam_step)
        T.adversarial_step(gen, disc, batch, config, gen_opt, disc_opt, rng)
        disc_first = id(disc.parameters()[0])
        gen_first = id(gen.parameters()[0])
        assert calls == [disc_first] + [gen_first] * config.gen_steps

    def test_returns_finite_losses(self):
        gen, disc, batch, config, gen_opt, disc_opt, rng = self._setup(beta=0.01, seed=3)
        g_loss, d_loss = T.adversarial_step(gen, disc, batch, config, gen_opt, disc_opt, rng)
        assert np.isfinite(g_loss) and np.isfinite(d_loss)


class TestTrain:
    def test_max_epochs_zero(self):
        ds = toy_dataset()
        gen, disc, history = T.train(ds, small_config(max_epochs=0))
        assert history.epoch == []
        assert gen.group_count == 2 and disc.group_count == 2

    def test_deterministic_history(self):
        ds = toy_dataset()
        _, _, h1 = T.train(ds, small_config(max_epochs=4))
        _, _, h2 = T.train(ds, small_config(max_epochs=4))
        assert h1.gen_loss == h2.gen_loss
        assert h1.disc_loss == h2.disc_loss
        assert h1.val_mse == h2.val_mse
        assert h1.disc_balanced_accuracy == h2.disc_balanced_accuracy

    def test_beats_mean_predictor(self):
        ds = toy_dataset(n_per_group=150, k=2, d=4, seed=5)
        config = small_config(max_epochs=60, patience=60, width=16, units_per_group=25, seed=5)
        gen, _, history = T.train(ds, config)
        split = T.stratified_split(ds, config.split_fractions, np.random.default_rng(5))
        y_train, y_val = ds.factual_outcome[split.train], ds.factual_outcome[split.val]
        baseline_rmse = float(np.sqrt(np.mean((y_val - y_train.mean()) ** 2)))
        model_rmse = float(np.sqrt(min(history.val_mse)))
        assert model_rmse < baseline_rmse

    def test_early_stopping_restores_best_epoch(self):
        ds = toy_dataset(n_per_group=80, seed=6)
        config = small_config(max_epochs=25, patience=5, seed=6)
        gen, _, history = T.train(ds, config)
        assert history.best_epoch == int(np.argmin(history.val_mse))
        # returned generator reproduces the best recorded validation MSE
        split = T.stratified_split(ds, config.split_fractions, np.random.default_rng(6))
        imputed = T.impute_counterfactuals(gen, ds)
        val_pred = imputed[split.val, ds.group[split.val]]
        val_mse = float(np.mean((val_pred - ds.factual_outcome[split.val]) ** 2))
        assert val_mse == pytest.approx(min(history.val_mse), rel=1e-12)

    def test_stops_after_patience(self):
        ds = toy_dataset(seed=7)
        _, _, history = T.train(ds, small_config(max_epochs=200, patience=2, seed=7))
        assert len(history.epoch) < 200

    def test_empty_validation_rejected(self):
        ds = toy_dataset()
        with pytest.raises(ConfigError, match="validation"):
            T.train(ds, small_config(split_fractions=(1.0, 0.0, 0.0)))


class TestImpute:
    def test_constant_generator(self):
        rng = np.random.default_rng(8)
        gen = G.build_generator(3, 2, 2, 4, 0.0, 0.0, rng)
        for t, head in enumerate(gen.heads):
            for layer in head.representation_layers:
                layer.weights[...] = 0.0
            head.output.weights[...] = 0.0
            head.output.bias[...] = float(t) + 0.5
        ds = toy_dataset(d=3, seed=8)
        imputed = T.impute_counterfactuals(gen, ds)
        np.testing.assert_array_equal(imputed[:, 0], np.full(ds.n_units, 0.5))
        np.testing.assert_array_equal(imputed[:, 1], np.full(ds.n_units, 1.5))

    def test_matches_direct_forward_passes(self):
        ds = toy_dataset(seed=9)
        gen, _, _ = T.train(ds, small_config(max_epochs=2, seed=9))
        imputed = T.impute_counterfactuals(gen, ds)
        x_std = gen.scaler.transform_x(ds.covariates)
        for t, head in enumerate(gen.heads):
            direct = gen.scaler.invert_y(G.head_forward(head, x_std))
            np.testing.assert_allclose(imputed[:, t], direct, rtol=0, atol=1e-12)

    def test_original_scale(self):
        ds = toy_dataset(seed=10)
        gen, _, history = T.train(ds, small_config(max_epochs=8, seed=10))
        imputed = T.impute_counterfactuals(gen, ds)
        # imputations live on the outcome's original scale, not the z-scale
        assert abs(np.mean(imputed) - np.mean(ds.factual_outcome)) < 5 * np.std(
            ds.factual_outcome
        )
