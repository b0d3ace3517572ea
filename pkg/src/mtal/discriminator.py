"""True/false discriminator: scores whether an outcome is the observed one.

One head per group. A head receives a unit's covariates through its own
diagonal gating layer plus a candidate outcome value, and emits the
probability that the candidate is the unit's observed (rather than
generated) outcome. The candidate scalar is concatenated onto the input
of every hidden layer so its influence survives depth; hidden widths halve
layer by layer. Heads are trained with class-weighted cross-entropy:
in a group-balanced batch of m units per group, each head sees m observed
outcomes against (k-1)*m generated ones, so the minority observed class is
upweighted by (k-1)/k and the generated class downweighted by 1/k.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import diffcore, generator as gen_mod
from .data_model import Batch
from .diffcore import DenseLayer, OneToOneLayer
from .errors import ConfigError, DataError, ShapeError

PROB_CLAMP = 1e-7


@dataclass
class DiscriminatorHead:
    selection: OneToOneLayer
    hidden_layers: list[DenseLayer]  # strictly decreasing widths; input gets +1 outcome col
    output: DenseLayer  # sigmoid, scalar


@dataclass
class TFDiscriminator:
    heads: list[DiscriminatorHead]
    lam: float
    alpha: float
    class_weight_factual: float  # multiplies the observed-outcome term
    class_weight_generated: float  # multiplies the generated-outcome term
    dropout_rate: float = 0.1

    @property
    def group_count(self) -> int:
        return len(self.heads)

    @property
    def input_dim(self) -> int:
        return self.heads[0].selection.diag_weights.shape[0]

    def parameters(self) -> list[np.ndarray]:
        out = []
        for head in self.heads:
            out.append(head.selection.diag_weights)
            for layer in head.hidden_layers:
                out.extend((layer.weights, layer.bias))
            out.extend((head.output.weights, head.output.bias))
        return out

    def parameter_names(self) -> list[str]:
        names = []
        for t, head in enumerate(self.heads):
            names.append(f"disc.head{t}.selection")
            for s in range(len(head.hidden_layers)):
                names.extend((f"disc.head{t}.hid{s}.weights", f"disc.head{t}.hid{s}.bias"))
            names.extend((f"disc.head{t}.out.weights", f"disc.head{t}.out.bias"))
        return names

    def penalized_weights(self) -> list[np.ndarray]:
        out = []
        for head in self.heads:
            out.append(head.selection.diag_weights)
            out.extend(layer.weights for layer in head.hidden_layers)
        return out

    def penalized_mask(self) -> list[bool]:
        mask = []
        for head in self.heads:
            mask.append(True)
            for _ in head.hidden_layers:
                mask.extend((True, False))
            mask.extend((False, False))
        return mask


def halving_widths(top_width: int, layers: int) -> list[int]:
    """Hidden widths halving from top_width (floor), e.g. 100 -> 100, 50, 25."""
    widths = [max(1, top_width // (2 ** j)) for j in range(layers)]
    for a, b in zip(widths, widths[1:]):
        if b >= a:
            raise ConfigError(
                f"width schedule {widths} from top_width={top_width} is not strictly "
                f"decreasing; increase top_width or reduce layers"
            )
    return widths


def build_discriminator(
    input_dim: int,
    group_count: int,
    layers: int,
    top_width: int,
    lam: float,
    alpha: float,
    rng: np.random.Generator,
    dropout_rate: float = 0.1,
) -> TFDiscriminator:
    if input_dim <= 0 or group_count <= 0 or top_width <= 0:
        raise ConfigError(
            "discriminator dims must be positive, got "
            f"d={input_dim}, k={group_count}, top_width={top_width}"
        )
    if layers < 2:
        raise ConfigError(f"discriminator needs at least 2 hidden layers, got {layers}")
    if lam < 0 or alpha < 0:
        raise ConfigError(f"penalty weights must be >= 0, got lam={lam}, alpha={alpha}")
    widths = halving_widths(top_width, layers)
    heads = []
    for _ in range(group_count):
        hidden = []
        d_in = input_dim
        for w in widths:
            hidden.append(diffcore.init_dense(d_in + 1, w, "relu", rng))  # +1 outcome column
            d_in = w
        heads.append(
            DiscriminatorHead(
                selection=diffcore.init_one_to_one(input_dim),
                hidden_layers=hidden,
                output=diffcore.init_dense(d_in, 1, "sigmoid", rng),
            )
        )
    k = group_count
    return TFDiscriminator(
        heads=heads,
        lam=lam,
        alpha=alpha,
        class_weight_factual=(k - 1) / k,
        class_weight_generated=1.0 / k,
        dropout_rate=dropout_rate,
    )


def head_forward_cached(
    head: DiscriminatorHead,
    x: np.ndarray,
    y_candidate: np.ndarray,
    training: bool = False,
    dropout_rate: float = 0.0,
    rng: np.random.Generator | None = None,
):
    """Probabilities (n,) that each (row, candidate outcome) pair is observed."""
    x = diffcore.as_matrix(x)
    y_col = np.asarray(y_candidate, dtype=np.float64).reshape(-1, 1)
    if y_col.shape[0] != x.shape[0]:
        raise ShapeError("one candidate outcome per row required")
    act = diffcore.one_to_one_forward(head.selection, x)
    layer_caches = []
    for layer in head.hidden_layers:
        inp = np.hstack((act, y_col))
        act, pre = diffcore.dense_forward_cached(layer, inp)
        mask = None
        if training and dropout_rate > 0.0:
            mask = diffcore.dropout_mask(layer.out_dim, dropout_rate, rng)
            act = act * mask
        layer_caches.append((inp, pre, mask))
    pre_out = act @ head.output.weights + head.output.bias
    prob = diffcore.sigmoid(pre_out).ravel()
    cache = {"x": x, "layers": layer_caches, "out_in": act, "prob": prob}
    return prob, cache


def head_backward(head: DiscriminatorHead, cache: dict, dprob: np.ndarray):
    """Gradients w.r.t. head parameters and the injected candidate outcomes.

    Returns (param_grads, dy_candidate) where dy_candidate has one entry
    per row and collects the gradient flowing through every hidden layer's
    outcome column.
    """
    prob = cache["prob"]
    dz = dprob * prob * (1.0 - prob)
    out_in = cache["out_in"]
    d_out_w = out_in.T @ dz[:, None]
    d_out_b = np.array([dz.sum()])
    grad = dz[:, None] @ head.output.weights.T
    dy = np.zeros(prob.shape[0])
    hidden_grads = []
    for layer, (inp, pre, mask) in zip(
        reversed(head.hidden_layers), reversed(cache["layers"])
    ):
        if mask is not None:
            grad = grad * mask
        grad_pre = diffcore.activation_grad(layer.activation, pre, None, grad)
        hidden_grads.append((inp.T @ grad_pre, grad_pre.sum(axis=0)))
        grad_inp = grad_pre @ layer.weights.T
        dy += grad_inp[:, -1]
        grad = np.ascontiguousarray(grad_inp[:, :-1])
    hidden_grads.reverse()
    d_sel = (grad * cache["x"]).sum(axis=0)
    flat = [d_sel]
    for dw, db in hidden_grads:
        flat.extend((dw, db))
    flat.extend((d_out_w, d_out_b))
    return flat, dy


def judge(
    disc: TFDiscriminator,
    x,
    t: int,
    y_candidate,
    training: bool = False,
    rng: np.random.Generator | None = None,
):
    """Head t's probability that the candidate outcome is the observed one.

    Accepts a single row (returns a float) or a matrix with one candidate
    per row (returns an array).
    """
    if not 0 <= t < disc.group_count:
        raise ShapeError(f"group {t} out of range for {disc.group_count} heads")
    x_arr = np.asarray(x, dtype=np.float64)
    single = x_arr.ndim == 1
    y_arr = np.atleast_1d(np.asarray(y_candidate, dtype=np.float64))
    prob, _ = head_forward_cached(
        disc.heads[t],
        x_arr,
        y_arr,
        training=training,
        dropout_rate=disc.dropout_rate,
        rng=rng,
    )
    return float(prob[0]) if single else prob


def check_balanced(batch: Batch, group_count: int) -> int:
    """Units per group of a balanced batch; raises if counts differ."""
    counts = np.bincount(batch.group, minlength=group_count)
    if counts.min() != counts.max() or counts.min() == 0:
        raise DataError(
            f"discriminator loss requires a group-balanced batch, got counts {counts.tolist()}"
        )
    return int(counts[0])


def weighted_cross_entropy(prob: np.ndarray, truth: np.ndarray, w_factual: float, w_generated: float) -> float:
    """Sum over inputs of -(w_f * truth * log p + w_g * (1-truth) * log(1-p)).

    Probabilities are clamped to [PROB_CLAMP, 1-PROB_CLAMP] before the logs.
    """
    p = np.clip(prob, PROB_CLAMP, 1.0 - PROB_CLAMP)
    return float(
        -np.sum(w_factual * truth * np.log(p) + w_generated * (1.0 - truth) * np.log(1.0 - p))
    )


def discriminator_loss(
    disc: TFDiscriminator,
    gen: "gen_mod.OutcomeGenerator",
    batch: Batch,
    training: bool = False,
    rng: np.random.Generator | None = None,
) -> float:
    loss, _, _ = discriminator_loss_and_grads(
        disc, gen, batch, training=training, rng=rng, want_disc=False, want_gen=False
    )
    return loss


def discriminator_loss_and_grads(
    disc: TFDiscriminator,
    gen: "gen_mod.OutcomeGenerator",
    batch: Batch,
    training: bool = False,
    rng: np.random.Generator | None = None,
    want_disc: bool = True,
    want_gen: bool = True,
):
    """Class-weighted cross-entropy over all heads plus the elastic net.

    Head t scores the observed outcomes of its own group's units (truth 1)
    and generator head t's predictions for every other unit (truth 0). The
    cross-entropy sum is normalized per head by its input count (m*k) and
    averaged over the k heads. Gradients flow to the discriminator and,
    through the generated candidates, to the generator.

    Returns (loss, disc_grads | None, gen_grads | None).
    """
    if disc.input_dim != gen.input_dim or disc.group_count != gen.group_count:
        raise ShapeError("discriminator and generator disagree on input dim or group count")
    k = disc.group_count
    m = check_balanced(batch, k)
    denom = m * k * k
    w_f, w_g = disc.class_weight_factual, disc.class_weight_generated

    ce_sum = 0.0
    disc_grads = [np.zeros_like(p) for p in disc.parameters()] if want_disc else None
    gen_grads = [np.zeros_like(p) for p in gen.parameters()] if want_gen else None
    disc_slices = _head_param_slices(disc)
    gen_slices = gen_mod._head_param_slices(gen)

    for t in range(k):
        own = np.nonzero(batch.group == t)[0]
        other = np.nonzero(batch.group != t)[0]
        gen_pred, gen_cache = gen_mod.head_forward_cached(
            gen.heads[t],
            batch.covariates[other],
            training=training,
            dropout_rate=gen.dropout_rate,
            rng=rng,
        )
        x_head = np.vstack((batch.covariates[own], batch.covariates[other]))
        y_cand = np.concatenate((batch.outcome[own], gen_pred))
        truth = np.concatenate((np.ones(own.size), np.zeros(other.size)))
        prob, cache = head_forward_cached(
            disc.heads[t],
            x_head,
            y_cand,
            training=training,
            dropout_rate=disc.dropout_rate,
            rng=rng,
        )
        ce_sum += weighted_cross_entropy(prob, truth, w_f, w_g)
        if want_disc or want_gen:
            p = np.clip(prob, PROB_CLAMP, 1.0 - PROB_CLAMP)
            dprob = -(w_f * truth / p - w_g * (1.0 - truth) / (1.0 - p)) / denom
            dprob[(prob < PROB_CLAMP) | (prob > 1.0 - PROB_CLAMP)] = 0.0  # clamp is flat
            param_grads, dy_cand = head_backward(disc.heads[t], cache, dprob)
            if want_disc:
                for slot, g in zip(disc_slices[t], param_grads):
                    disc_grads[slot] += g
            if want_gen:
                dy_generated = dy_cand[own.size :]
                for slot, g in zip(
                    gen_slices[t], gen_mod.head_backward(gen.heads[t], gen_cache, dy_generated)
                ):
                    gen_grads[slot] += g

    penalty, subgrads = diffcore.elastic_net(disc.penalized_weights(), disc.lam, disc.alpha)
    if want_disc:
        sub_iter = iter(subgrads)
        for i, penalized in enumerate(disc.penalized_mask()):
            if penalized:
                disc_grads[i] += next(sub_iter)
    return ce_sum / denom + penalty, disc_grads, gen_grads


def balanced_accuracy(
    disc: TFDiscriminator, gen: "gen_mod.OutcomeGenerator", batch: Batch
) -> float:
    """Mean of observed-outcome and generated-outcome recall at threshold 0.5.

    Evaluation-mode diagnostic of how well the discriminator still
    separates observed from generated outcomes; 0.5 means fully fooled.
    """
    k = disc.group_count
    check_balanced(batch, k)
    hits_factual = total_factual = 0
    hits_generated = total_generated = 0
    for t in range(k):
        own = np.nonzero(batch.group == t)[0]
        other = np.nonzero(batch.group != t)[0]
        p_own = judge(disc, batch.covariates[own], t, batch.outcome[own])
        gen_pred = gen_mod.head_forward(gen.heads[t], batch.covariates[other])
        p_gen = judge(disc, batch.covariates[other], t, gen_pred)
        hits_factual += int(np.sum(p_own >= 0.5))
        total_factual += own.size
        hits_generated += int(np.sum(p_gen < 0.5))
        total_generated += other.size
    return 0.5 * (hits_factual / total_factual + hits_generated / total_generated)


def _head_param_slices(disc: TFDiscriminator) -> list[list[int]]:
    per_head = 1 + 2 * len(disc.heads[0].hidden_layers) + 2
    return [list(range(t * per_head, (t + 1) * per_head)) for t in range(disc.group_count)]
