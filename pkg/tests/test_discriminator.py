import numpy as np
import pytest

from mtal import discriminator as D
from mtal import generator as G
from mtal.data_model import Batch
from mtal.diffcore import finite_diff_gradients
from mtal.errors import ConfigError, DataError
from test_generator import balanced_batch


def small_models(rng, d=4, k=2, lam=0.0, alpha=0.0):
    gen = G.build_generator(d, k, layers=2, width=5, lam=lam, alpha=alpha, rng=rng)
    disc = D.build_discriminator(d, k, layers=2, top_width=6, lam=lam, alpha=alpha, rng=rng)
    return gen, disc


class TestBuild:
    def test_halving_widths(self):
        assert D.halving_widths(100, 3) == [100, 50, 25]

    def test_impossible_schedule_rejected(self):
        with pytest.raises(ConfigError, match="strictly"):
            D.halving_widths(2, 3)  # 2, 1, 1

    def test_min_layers(self):
        with pytest.raises(ConfigError):
            D.build_discriminator(4, 2, layers=1, top_width=8, lam=0.0, alpha=0.0,
                                  rng=np.random.default_rng(0))

    def test_head_shapes(self):
        disc = D.build_discriminator(25, 2, layers=3, top_width=100, lam=0.0, alpha=0.0,
                                     rng=np.random.default_rng(0))
        assert disc.group_count == 2
        head = disc.heads[0]
        assert head.selection.diag_weights.shape == (25,)
        # every hidden layer input carries the candidate outcome column
        assert [l.weights.shape for l in head.hidden_layers] == [(26, 100), (101, 50), (51, 25)]
        assert head.output.weights.shape == (25, 1)
        assert head.output.activation == "sigmoid"

    def test_class_weights(self):
        disc = D.build_discriminator(4, 4, 2, 8, 0.0, 0.0, np.random.default_rng(0))
        assert disc.class_weight_factual == pytest.approx(3 / 4)
        assert disc.class_weight_generated == pytest.approx(1 / 4)

    def test_same_seed_identical(self):
        a = D.build_discriminator(5, 3, 2, 8, 0.0, 0.0, np.random.default_rng(4))
        b = D.build_discriminator(5, 3, 2, 8, 0.0, 0.0, np.random.default_rng(4))
        for pa, pb in zip(a.parameters(), b.parameters()):
            np.testing.assert_array_equal(pa, pb)


def hand_judge(head, x_row, y):
    """Independent scalar-probability oracle with explicit loops."""
    vec = [x_row[j] * head.selection.diag_weights[j] for j in range(len(x_row))]
    for layer in head.hidden_layers:
        inp = list(vec) + [y]
        nxt = []
        for c in range(layer.weights.shape[1]):
            acc = layer.bias[c]
            for r in range(layer.weights.shape[0]):
                acc += inp[r] * layer.weights[r, c]
            nxt.append(acc if acc > 0 else 0.0)
        vec = nxt
    acc = head.output.bias[0]
    for r in range(head.output.weights.shape[0]):
        acc += vec[r] * head.output.weights[r, 0]
    return 1.0 / (1.0 + np.exp(-acc))


class TestJudge:
    def test_zero_weights_gives_half(self):
        disc = D.build_discriminator(3, 2, 2, 6, 0.0, 0.0, np.random.default_rng(0))
        for p in disc.parameters():
            p[...] = 0.0
        assert D.judge(disc, np.ones(3), 0, 1.5) == 0.5

    def test_large_bias_saturates(self):
        disc = D.build_discriminator(3, 2, 2, 6, 0.0, 0.0, np.random.default_rng(1))
        disc.heads[0].output.bias[...] = 50.0
        assert D.judge(disc, np.ones(3), 0, 0.0) > 1.0 - 1e-12

    def test_matches_hand_rolled_oracle(self):
        rng = np.random.default_rng(2)
        disc = D.build_discriminator(4, 3, 2, 6, 0.0, 0.0, rng)
        x = rng.normal(size=(5, 4))
        y = rng.normal(size=5)
        for t in range(3):
            probs = D.judge(disc, x, t, y)
            expected = [hand_judge(disc.heads[t], x[i], y[i]) for i in range(5)]
            np.testing.assert_allclose(probs, expected, rtol=0, atol=1e-12)

    def test_monotone_in_output_bias(self):
        rng = np.random.default_rng(3)
        disc = D.build_discriminator(4, 2, 2, 6, 0.0, 0.0, rng)
        x, y = rng.normal(size=4), 0.3
        probs = []
        for bias in (-2.0, 0.0, 2.0):
            disc.heads[0].output.bias[...] = bias
            probs.append(D.judge(disc, x, 0, y))
        assert probs[0] < probs[1] < probs[2]

    def test_group_out_of_range(self):
        disc = D.build_discriminator(3, 2, 2, 6, 0.0, 0.0, np.random.default_rng(0))
        with pytest.raises(Exception):
            D.judge(disc, np.ones(3), 5, 0.0)


class TestLoss:
    def test_perfect_probabilities_zero_ce(self):
        truth = np.array([1.0, 1.0, 0.0, 0.0])
        ce = D.weighted_cross_entropy(truth, truth, 0.5, 0.5)
        # p clamps to 1-1e-7 / 1e-7, so the cross entropy is ~1e-7, not exactly 0
        assert abs(ce) < 1e-6

    def test_k2_reduces_to_even_weights(self):
        rng = np.random.default_rng(4)
        gen, disc = small_models(rng, d=3, k=2)
        assert disc.class_weight_factual == 0.5 == disc.class_weight_generated
        batch = balanced_batch(rng, 3, 2, 3)
        loss = D.discriminator_loss(disc, gen, batch)
        # independently: evenly weighted cross-entropy, normalized per head input count
        total = 0.0
        for t in range(2):
            own = batch.group == t
            other = ~own
            gen_pred = G.head_forward(gen.heads[t], batch.covariates[other])
            p_own = D.judge(disc, batch.covariates[own], t, batch.outcome[own])
            p_gen = D.judge(disc, batch.covariates[other], t, gen_pred)
            total += -0.5 * np.sum(np.log(np.clip(p_own, 1e-7, 1 - 1e-7)))
            total += -0.5 * np.sum(np.log(1.0 - np.clip(p_gen, 1e-7, 1 - 1e-7)))
        assert loss == pytest.approx(total / (3 * 2 * 2), rel=1e-12)

    def test_hand_enumerated_k4_m2(self):
        # every one of the 8 factual and 24 generated terms enumerated explicitly
        rng = np.random.default_rng(5)
        k, m, d = 4, 2, 3
        gen = G.build_generator(d, k, layers=2, width=4, lam=1e-3, alpha=1e-2, rng=rng)
        disc = D.build_discriminator(d, k, layers=2, top_width=5, lam=1e-3, alpha=1e-2, rng=rng)
        batch = balanced_batch(rng, m, k, d)
        w1, w0 = 1.0 / k, (k - 1) / k

        terms = []
        for t in range(k):
            head = disc.heads[t]
            for i in range(batch.n_units):
                if batch.group[i] == t:  # factual: observed outcome, truth 1
                    p = hand_judge(head, batch.covariates[i], batch.outcome[i])
                    terms.append(-w0 * np.log(np.clip(p, 1e-7, 1 - 1e-7)))
                else:  # counterfactual: generated outcome, truth 0
                    y_hat = G.head_forward(gen.heads[t], batch.covariates[i][None, :])[0]
                    p = hand_judge(head, batch.covariates[i], y_hat)
                    terms.append(-w1 * np.log(1.0 - np.clip(p, 1e-7, 1 - 1e-7)))
        assert len(terms) == 32  # 8 factual + 24 counterfactual
        penalty = sum(
            1e-3 * np.sum(w**2) + 1e-2 * np.sum(np.abs(w)) for w in disc.penalized_weights()
        )
        expected = sum(terms) / (m * k * k) + penalty
        assert D.discriminator_loss(disc, gen, batch) == pytest.approx(expected, abs=1e-10)

    def test_unbalanced_batch_rejected(self):
        rng = np.random.default_rng(6)
        gen, disc = small_models(rng)
        bad = Batch(
            covariates=rng.normal(size=(3, 4)),
            group=np.array([0, 0, 1]),
            outcome=rng.normal(size=3),
        )
        with pytest.raises(DataError, match="balanced"):
            D.discriminator_loss(disc, gen, bad)

    def test_head_input_composition(self):
        # per head: m factual and (k-1)*m generated inputs
        rng = np.random.default_rng(7)
        k, m = 3, 4
        batch = balanced_batch(rng, m, k, 2)
        for t in range(k):
            assert np.sum(batch.group == t) == m
            assert np.sum(batch.group != t) == (k - 1) * m


class TestLossGradients:
    def test_disc_gradients_match_finite_differences(self):
        rng = np.random.default_rng(8)
        gen, disc = small_models(rng, d=4, k=3, lam=1e-2, alpha=1e-2)
        batch = balanced_batch(rng, 2, 3, 4)
        _, bp, _ = D.discriminator_loss_and_grads(disc, gen, batch, want_gen=False)
        fd = finite_diff_gradients(
            lambda: D.discriminator_loss(disc, gen, batch), disc.parameters(), h=1e-5
        )
        for b, f in zip(bp, fd):
            rel = np.abs(b - f) / np.maximum(1e-4, np.abs(b) + np.abs(f))
            assert rel.max() < 1e-4

    def test_gen_gradients_flow_through_candidates(self):
        rng = np.random.default_rng(9)
        gen, disc = small_models(rng, d=4, k=2, lam=1e-3, alpha=1e-3)
        batch = balanced_batch(rng, 3, 2, 4)
        _, _, bp = D.discriminator_loss_and_grads(disc, gen, batch, want_disc=False)
        fd = finite_diff_gradients(
            lambda: D.discriminator_loss(disc, gen, batch), gen.parameters(), h=1e-5
        )
        assert any(np.any(g != 0) for g in bp)
        for b, f in zip(bp, fd):
            rel = np.abs(b - f) / np.maximum(1e-4, np.abs(b) + np.abs(f))
            assert rel.max() < 1e-4


class TestBalancedAccuracy:
    def test_fooled_discriminator_scores_half(self):
        rng = np.random.default_rng(10)
        gen, disc = small_models(rng)
        for p in disc.parameters():
            p[...] = 0.0  # constant 0.5 judgement: factual hit, generated miss
        batch = balanced_batch(rng, 5, 2, 4)
        assert D.balanced_accuracy(disc, gen, batch) == 0.5

    def test_perfect_discriminator_scores_one(self):
        # a head that keys purely on the candidate value separates observed
        # outcomes (here all > 0) from generated ones (constant 0 network)
        rng = np.random.default_rng(11)
        gen, disc = small_models(rng)
        for p in gen.parameters():
            p[...] = 0.0  # generator emits 0 for every unit
        for head in disc.heads:
            for p in (head.selection.diag_weights,):
                p[...] = 0.0
            for layer in head.hidden_layers:
                layer.weights[...] = 0.0
                layer.bias[...] = 0.0
            head.hidden_layers[0].weights[-1, 0] = 1.0  # pass the candidate through
            head.hidden_layers[1].weights[0, 0] = 1.0
            head.output.weights[...] = 0.0
            head.output.weights[0, 0] = 100.0
            head.output.bias[...] = -1.0
        batch = Batch(
            covariates=rng.normal(size=(6, 4)),
            group=np.array([0, 0, 0, 1, 1, 1]),
            outcome=np.full(6, 2.0),  # judge: sigmoid(200-1)~1 factual, sigmoid(-1)<0.5 generated
        )
        assert D.balanced_accuracy(disc, gen, batch) == 1.0
