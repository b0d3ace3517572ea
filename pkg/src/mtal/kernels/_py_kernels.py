"""Pure-numpy kernel backend.

Every function here has a compiled twin in ``_fastkern.pyx``. Both perform
the same IEEE-754 operations in the same order so that training runs are
numerically identical regardless of which backend is active. Keep the two
files in sync when changing anything.
"""

import numpy as np

NAME = "python"


def relu(z):
    """Elementwise max(z, 0)."""
    return np.maximum(z, 0.0)


def relu_grad(grad_out, z):
    """Upstream gradient gated by the relu mask: grad_out where z > 0, else 0."""
    return np.where(z > 0.0, grad_out, 0.0)


def adam_update(param, grad, m, v, lr, beta1, beta2, eps, bias_corr1, bias_corr2):
    """One fused adaptive-moment update, in place.

    ``bias_corr1``/``bias_corr2`` are the precomputed 1 - beta**step factors;
    they are computed once per step by the caller so both backends see
    identical scalars.
    """
    m *= beta1
    m += (1.0 - beta1) * grad
    v *= beta2
    v += (1.0 - beta2) * (grad * grad)
    param -= (lr * (m / bias_corr1)) / (np.sqrt(v / bias_corr2) + eps)


def elastic_net_subgrad(w, lam, alpha, out):
    """Write 2*lam*w + alpha*sign(w) into ``out`` (sign(0) = 0)."""
    out[...] = (2.0 * lam) * w + alpha * np.sign(w)
