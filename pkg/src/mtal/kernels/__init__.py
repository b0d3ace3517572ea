"""Elementwise hot kernels: compiled fast path with a pure-numpy fallback.

The training loop spends most of its non-BLAS time in a handful of
elementwise operations: relu forward/backward, fused Adam updates, and
elastic-net subgradients. Each is implemented twice, in Cython
(``_fastkern``, built at install time) and in numpy (``_py_kernels``),
and a backend is selected once at import time:

* ``MTAL_KERNELS=auto`` (default): compiled if available, else numpy
* ``MTAL_KERNELS=compiled``: require the extension, fail loudly if absent
* ``MTAL_KERNELS=python``: force the numpy fallback

Both backends perform the same floating-point operations in the same
order; matrix products and reductions live in shared numpy code. Results
are therefore numerically identical across backends.

``benchmarks/bench_kernels.py`` compares the two backends.
"""

import os
from contextlib import contextmanager

from . import _py_kernels

try:
    from . import _fastkern
except ImportError:
    _fastkern = None

_BACKENDS = {"python": _py_kernels}
if _fastkern is not None:
    _BACKENDS["compiled"] = _fastkern


def available_backends():
    return sorted(_BACKENDS)


def get_backend(name):
    try:
        return _BACKENDS[name]
    except KeyError:
        raise KeyError(
            f"unknown kernel backend {name!r}; available: {available_backends()}"
        ) from None


def _select_initial():
    requested = os.environ.get("MTAL_KERNELS", "auto").strip().lower()
    if requested == "auto":
        return _BACKENDS.get("compiled", _py_kernels)
    if requested in _BACKENDS:
        return _BACKENDS[requested]
    raise ImportError(
        f"MTAL_KERNELS={requested!r} but available backends are "
        f"{available_backends()} (build the extension or unset the variable)"
    )


_active = _select_initial()


def backend_name():
    """Name of the currently active backend ('python' or 'compiled')."""
    return _active.NAME


@contextmanager
def use_backend(name):
    """Temporarily switch the active backend (benchmarks and tests)."""
    global _active
    previous = _active
    _active = get_backend(name)
    try:
        yield _active
    finally:
        _active = previous


def relu(z):
    return _active.relu(z)


def relu_grad(grad_out, z):
    return _active.relu_grad(grad_out, z)


def adam_update(param, grad, m, v, lr, beta1, beta2, eps, bias_corr1, bias_corr2):
    _active.adam_update(param, grad, m, v, lr, beta1, beta2, eps, bias_corr1, bias_corr2)


def elastic_net_subgrad(w, lam, alpha, out):
    _active.elastic_net_subgrad(w, lam, alpha, out)
