"""Minimal deterministic differentiable-computation core.

Dense layers, a diagonal (one-to-one) gating layer, dropout, elastic-net
penalties, Adam, and a central finite-difference gradient oracle. Arrays
are plain float64 ndarrays; parameter collections are lists of arrays in
a fixed order so gradients can be carried as parallel lists. Double
precision throughout: the gradient-oracle tolerances depend on it.

All randomness flows through injected ``numpy.random.Generator`` objects;
nothing here touches global random state.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import ConfigError, NumericError, ShapeError

ACTIVATIONS = ("linear", "relu", "sigmoid")


def as_matrix(x) -> np.ndarray:
    """Coerce to a 2-d float64 array, treating a single row as shape (1, d)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2:
        raise ShapeError(f"expected a matrix, got ndim={x.ndim}")
    return x


def sigmoid(z):
    """Numerically stable logistic function (shared by both kernel backends)."""
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


@dataclass
class DenseLayer:
    """Affine map with an elementwise activation: act(x @ weights + bias)."""

    weights: np.ndarray  # (d_in, d_out)
    bias: np.ndarray  # (d_out,)
    activation: str = "linear"

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weights.ndim != 2 or self.bias.ndim != 1:
            raise ShapeError("dense layer expects 2-d weights and 1-d bias")
        if self.weights.shape[1] != self.bias.shape[0]:
            raise ShapeError(
                f"bias length {self.bias.shape[0]} != output width {self.weights.shape[1]}"
            )
        if self.activation not in ACTIVATIONS:
            raise ConfigError(f"unknown activation {self.activation!r}")

    @property
    def in_dim(self) -> int:
        return self.weights.shape[0]

    @property
    def out_dim(self) -> int:
        return self.weights.shape[1]


@dataclass
class OneToOneLayer:
    """Diagonal gating layer: each input coordinate scaled by its own weight."""

    diag_weights: np.ndarray  # (d,)

    def __post_init__(self):
        self.diag_weights = np.asarray(self.diag_weights, dtype=np.float64)
        if self.diag_weights.ndim != 1:
            raise ShapeError("one-to-one layer expects a 1-d weight vector")


def init_dense(d_in: int, d_out: int, activation: str, rng: np.random.Generator) -> DenseLayer:
    """Uniform init in +-sqrt(6/(fan_in+fan_out)); biases start at zero."""
    if d_in <= 0 or d_out <= 0:
        raise ConfigError(f"dense layer dims must be positive, got ({d_in}, {d_out})")
    limit = np.sqrt(6.0 / (d_in + d_out))
    weights = rng.uniform(-limit, limit, size=(d_in, d_out))
    return DenseLayer(weights=weights, bias=np.zeros(d_out), activation=activation)


def init_one_to_one(d: int) -> OneToOneLayer:
    """All-ones start: gating begins as the identity."""
    if d <= 0:
        raise ConfigError(f"one-to-one layer dim must be positive, got {d}")
    return OneToOneLayer(diag_weights=np.ones(d))


def activate(name: str, pre: np.ndarray) -> np.ndarray:
    if name == "linear":
        return pre
    if name == "relu":
        return kernels.relu(pre)
    if name == "sigmoid":
        return sigmoid(pre)
    raise ConfigError(f"unknown activation {name!r}")


def activation_grad(name: str, pre: np.ndarray, act, grad_out: np.ndarray) -> np.ndarray:
    """Gradient through the activation given pre-activations (and outputs if cached)."""
    if name == "linear":
        return grad_out
    if name == "relu":
        return kernels.relu_grad(grad_out, pre)
    if name == "sigmoid":
        if act is None:
            act = sigmoid(pre)
        return grad_out * act * (1.0 - act)
    raise ConfigError(f"unknown activation {name!r}")


def dense_forward(layer: DenseLayer, x) -> np.ndarray:
    """act(x @ W + b); pure, row count preserved."""
    x = as_matrix(x)
    if x.shape[1] != layer.in_dim:
        raise ShapeError(f"input has {x.shape[1]} columns, layer expects {layer.in_dim}")
    return activate(layer.activation, x @ layer.weights + layer.bias)


def dense_forward_cached(layer: DenseLayer, x: np.ndarray):
    """Forward pass keeping pre-activations for the backward pass."""
    pre = x @ layer.weights + layer.bias
    return activate(layer.activation, pre), pre


def one_to_one_forward(layer: OneToOneLayer, x) -> np.ndarray:
    x = as_matrix(x)
    if x.shape[1] != layer.diag_weights.shape[0]:
        raise ShapeError(
            f"input has {x.shape[1]} columns, gate expects {layer.diag_weights.shape[0]}"
        )
    return x * layer.diag_weights


def dropout_mask(dim: int, rate: float, rng: np.random.Generator) -> np.ndarray:
    """Inverted-scaling dropout mask: 0 with probability rate, else 1/(1-rate)."""
    if not 0.0 <= rate < 1.0:
        raise ConfigError(f"dropout rate must lie in [0, 1), got {rate}")
    keep = rng.random(dim) >= rate
    return np.where(keep, 1.0 / (1.0 - rate), 0.0)


def elastic_net(weight_groups, lam: float, alpha: float):
    """Combined L2/L1 penalty and subgradient over a list of weight arrays.

    penalty = lam * sum ||w||_2^2 + alpha * sum ||w||_1, subgradient
    2*lam*w + alpha*sign(w) with sign(0) = 0. Returns (penalty, subgrads)
    where subgrads is a list parallel to ``weight_groups``.
    """
    if lam < 0 or alpha < 0:
        raise ConfigError(f"elastic-net weights must be >= 0, got lam={lam}, alpha={alpha}")
    penalty = 0.0
    subgrads = []
    for w in weight_groups:
        g = np.empty_like(w)
        kernels.elastic_net_subgrad(w, lam, alpha, g)
        penalty += lam * float(np.sum(w * w)) + alpha * float(np.sum(np.abs(w)))
        subgrads.append(g)
    return penalty, subgrads


@dataclass
class AdamState:
    """Per-parameter adaptive-moment state; shapes mirror the owning network."""

    step: int
    first_moment: list = field(repr=False, default_factory=list)
    second_moment: list = field(repr=False, default_factory=list)
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8


def init_adam(params, learning_rate=1e-3, beta1=0.9, beta2=0.999, epsilon=1e-8) -> AdamState:
    return AdamState(
        step=0,
        first_moment=[np.zeros_like(p) for p in params],
        second_moment=[np.zeros_like(p) for p in params],
        learning_rate=learning_rate,
        beta1=beta1,
        beta2=beta2,
        epsilon=epsilon,
    )


def adam_step(params, grads, state: AdamState, names=None) -> None:
    """Bias-corrected adaptive-moment update, in place on ``params``."""
    if len(params) != len(grads) or len(params) != len(state.first_moment):
        raise ShapeError("params, grads and optimizer state must have equal length")
    for i, (p, g) in enumerate(zip(params, grads)):
        if p.shape != g.shape:
            raise ShapeError(f"gradient shape {g.shape} != parameter shape {p.shape}")
        if not np.all(np.isfinite(g)):
            label = names[i] if names is not None else f"param[{i}]"
            raise NumericError(f"non-finite gradient in parameter group '{label}'")
    state.step += 1
    bc1 = 1.0 - state.beta1 ** state.step
    bc2 = 1.0 - state.beta2 ** state.step
    for p, g, m, v in zip(params, grads, state.first_moment, state.second_moment):
        kernels.adam_update(
            p, g, m, v, state.learning_rate, state.beta1, state.beta2, state.epsilon, bc1, bc2
        )


def finite_diff_gradients(loss_fn, params, h: float = 1e-5):
    """Central-difference gradient oracle: (f(p+h) - f(p-h)) / (2h) per entry.

    ``loss_fn`` takes no arguments and must read the current values of
    ``params`` (which are perturbed in place and restored); it must be
    deterministic: dropout disabled, batch fixed.
    """
    if h <= 0:
        raise ConfigError(f"finite-difference step must be positive, got {h}")
    grads = []
    for p in params:
        g = np.zeros_like(p)
        flat_p = p.reshape(-1)
        flat_g = g.reshape(-1)
        for j in range(flat_p.size):
            orig = flat_p[j]
            flat_p[j] = orig + h
            f_plus = loss_fn()
            flat_p[j] = orig - h
            f_minus = loss_fn()
            flat_p[j] = orig
            if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
                raise NumericError("non-finite loss during finite differencing")
            flat_g[j] = (f_plus - f_minus) / (2.0 * h)
        grads.append(g)
    return grads
