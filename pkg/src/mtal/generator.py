"""Multi-head outcome generator with per-feature gating layers.

One independent head per group: a diagonal gating layer over the d input
features, a stack of equal-width relu layers, and a linear scalar output.
Head t predicts the outcome a unit would have under group t, so the
stacked head outputs form the full n-by-k potential-outcome matrix. The
training loss is the mean squared error on factual predictions (each unit
scored only by the head of its own group) plus an elastic-net penalty
over gating and representation weights.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import diffcore
from .data_model import Batch, Scaler
from .diffcore import DenseLayer, OneToOneLayer
from .errors import ConfigError, DataError, ShapeError


@dataclass
class GeneratorHead:
    selection: OneToOneLayer
    representation_layers: list[DenseLayer]
    output: DenseLayer


@dataclass
class OutcomeGenerator:
    heads: list[GeneratorHead]
    lam: float  # L2 penalty weight
    alpha: float  # L1 penalty weight
    dropout_rate: float = 0.1
    scaler: Scaler | None = field(default=None, repr=False)  # set by training

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
            for layer in head.representation_layers:
                out.extend((layer.weights, layer.bias))
            out.extend((head.output.weights, head.output.bias))
        return out

    def parameter_names(self) -> list[str]:
        names = []
        for t, head in enumerate(self.heads):
            names.append(f"gen.head{t}.selection")
            for s in range(len(head.representation_layers)):
                names.extend((f"gen.head{t}.rep{s}.weights", f"gen.head{t}.rep{s}.bias"))
            names.extend((f"gen.head{t}.out.weights", f"gen.head{t}.out.bias"))
        return names

    def penalized_weights(self) -> list[np.ndarray]:
        """Arrays covered by the elastic net: gating + representation weights.

        Output-layer weights and all biases are exempt (penalizing them
        would distort calibration without aiding feature selection).
        """
        out = []
        for head in self.heads:
            out.append(head.selection.diag_weights)
            out.extend(layer.weights for layer in head.representation_layers)
        return out

    def penalized_mask(self) -> list[bool]:
        """Per-parameter flags aligned with parameters(): True if penalized."""
        mask = []
        for head in self.heads:
            mask.append(True)
            for _ in head.representation_layers:
                mask.extend((True, False))
            mask.extend((False, False))
        return mask


def build_generator(
    input_dim: int,
    group_count: int,
    layers: int,
    width: int,
    lam: float,
    alpha: float,
    rng: np.random.Generator,
    dropout_rate: float = 0.1,
) -> OutcomeGenerator:
    """Build k structurally identical, independently initialized heads."""
    if input_dim <= 0 or group_count <= 0 or width <= 0 or layers <= 0:
        raise ConfigError(
            "generator dims must be positive, got "
            f"d={input_dim}, k={group_count}, layers={layers}, width={width}"
        )
    if lam < 0 or alpha < 0:
        raise ConfigError(f"penalty weights must be >= 0, got lam={lam}, alpha={alpha}")
    heads = []
    for _ in range(group_count):
        rep = []
        d_in = input_dim
        for _ in range(layers):
            rep.append(diffcore.init_dense(d_in, width, "relu", rng))
            d_in = width
        heads.append(
            GeneratorHead(
                selection=diffcore.init_one_to_one(input_dim),
                representation_layers=rep,
                output=diffcore.init_dense(d_in, 1, "linear", rng),
            )
        )
    return OutcomeGenerator(heads=heads, lam=lam, alpha=alpha, dropout_rate=dropout_rate)


def head_forward(
    head: GeneratorHead,
    x: np.ndarray,
    training: bool = False,
    dropout_rate: float = 0.0,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Predictions of one head for every row of x; shape (n,)."""
    y, _ = head_forward_cached(head, x, training=training, dropout_rate=dropout_rate, rng=rng)
    return y


def head_forward_cached(
    head: GeneratorHead,
    x: np.ndarray,
    training: bool = False,
    dropout_rate: float = 0.0,
    rng: np.random.Generator | None = None,
):
    x = diffcore.as_matrix(x)
    gated = diffcore.one_to_one_forward(head.selection, x)
    layer_caches = []
    act = gated
    for layer in head.representation_layers:
        inp = act
        act, pre = diffcore.dense_forward_cached(layer, inp)
        mask = None
        if training and dropout_rate > 0.0:
            mask = diffcore.dropout_mask(layer.out_dim, dropout_rate, rng)
            act = act * mask
        layer_caches.append((inp, pre, mask))
    pred = (act @ head.output.weights + head.output.bias).ravel()
    cache = {"x": x, "layers": layer_caches, "out_in": act}
    return pred, cache


def head_backward(head: GeneratorHead, cache: dict, dy: np.ndarray) -> list[np.ndarray]:
    """Gradients of a scalar loss w.r.t. one head's parameters.

    ``dy`` is dLoss/dprediction per row. Returns arrays in the head's
    parameter order: selection, (weights, bias) per representation layer,
    output weights, output bias.
    """
    out_in = cache["out_in"]
    d_out_w = out_in.T @ dy[:, None]
    d_out_b = np.array([dy.sum()])
    grad = dy[:, None] @ head.output.weights.T
    rep_grads = []
    for layer, (inp, pre, mask) in zip(
        reversed(head.representation_layers), reversed(cache["layers"])
    ):
        if mask is not None:
            grad = grad * mask
        grad_pre = diffcore.activation_grad(layer.activation, pre, None, grad)
        rep_grads.append((inp.T @ grad_pre, grad_pre.sum(axis=0)))
        grad = grad_pre @ layer.weights.T
    rep_grads.reverse()
    d_sel = (grad * cache["x"]).sum(axis=0)
    flat = [d_sel]
    for dw, db in rep_grads:
        flat.extend((dw, db))
    flat.extend((d_out_w, d_out_b))
    return flat


def predict_potential_outcomes(
    gen: OutcomeGenerator,
    x: np.ndarray,
    training: bool = False,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Full (n, k) outcome matrix: column t is head t applied to every row."""
    x = diffcore.as_matrix(x)
    if x.shape[1] != gen.input_dim:
        raise ShapeError(f"input has {x.shape[1]} columns, generator expects {gen.input_dim}")
    out = np.empty((x.shape[0], gen.group_count))
    for t, head in enumerate(gen.heads):
        out[:, t] = head_forward(
            head, x, training=training, dropout_rate=gen.dropout_rate, rng=rng
        )
    return out


def generator_factual_loss(
    gen: OutcomeGenerator,
    batch: Batch,
    training: bool = False,
    rng: np.random.Generator | None = None,
) -> float:
    """Mean squared factual-prediction error plus the elastic-net penalty."""
    loss, _ = _factual_mse(gen, batch, training, rng, want_grads=False)
    penalty, _ = diffcore.elastic_net(gen.penalized_weights(), gen.lam, gen.alpha)
    return loss + penalty


def generator_loss_and_grads(
    gen: OutcomeGenerator,
    batch: Batch,
    training: bool = False,
    rng: np.random.Generator | None = None,
):
    """Loss value and gradients aligned with gen.parameters()."""
    loss, grads = _factual_mse(gen, batch, training, rng, want_grads=True)
    penalty, subgrads = diffcore.elastic_net(gen.penalized_weights(), gen.lam, gen.alpha)
    sub_iter = iter(subgrads)
    for i, penalized in enumerate(gen.penalized_mask()):
        if penalized:
            grads[i] += next(sub_iter)
    return loss + penalty, grads


def _factual_mse(gen, batch, training, rng, want_grads):
    if batch.n_units == 0:
        raise DataError("generator loss needs a non-empty batch")
    if batch.group.max() >= gen.group_count:
        raise ShapeError(
            f"batch contains group {batch.group.max()} but generator has "
            f"{gen.group_count} heads"
        )
    n = batch.n_units
    sq_sum = 0.0
    grads = [np.zeros_like(p) for p in gen.parameters()] if want_grads else None
    per_head = _head_param_slices(gen)
    for t, head in enumerate(gen.heads):
        rows = np.nonzero(batch.group == t)[0]
        if rows.size == 0:
            continue
        x_t = batch.covariates[rows]
        y_t = batch.outcome[rows]
        pred, cache = head_forward_cached(
            head, x_t, training=training, dropout_rate=gen.dropout_rate, rng=rng
        )
        resid = pred - y_t
        sq_sum += float(np.sum(resid * resid))
        if want_grads:
            dy = (2.0 / n) * resid
            for slot, g in zip(per_head[t], head_backward(head, cache, dy)):
                grads[slot] += g
    return sq_sum / n, grads


def _head_param_slices(gen: OutcomeGenerator) -> list[list[int]]:
    """Indices into gen.parameters() owned by each head, in head order."""
    per_head = 1 + 2 * len(gen.heads[0].representation_layers) + 2
    return [list(range(t * per_head, (t + 1) * per_head)) for t in range(gen.group_count)]
