# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernel backend; mirrors ``_py_kernels`` operation for operation.

The loops are written so the per-element floating-point operation order is
identical to the numpy expressions in the fallback (no reassociation, no
fused multiply-add: the build uses plain -O3 without -ffast-math).
"""

from libc.math cimport sqrt

import numpy as np

NAME = "compiled"


cdef void _relu(const double[::1] z, double[::1] out) noexcept:
    cdef Py_ssize_t i, n = z.shape[0]
    for i in range(n):
        out[i] = z[i] if z[i] > 0.0 else 0.0


cdef void _relu_grad(const double[::1] g, const double[::1] z, double[::1] out) noexcept:
    cdef Py_ssize_t i, n = z.shape[0]
    for i in range(n):
        out[i] = g[i] if z[i] > 0.0 else 0.0


cdef void _adam(double[::1] p, const double[::1] g, double[::1] m, double[::1] v,
                double lr, double b1, double b2, double eps,
                double bc1, double bc2) noexcept:
    cdef Py_ssize_t i, n = p.shape[0]
    cdef double omb1 = 1.0 - b1
    cdef double omb2 = 1.0 - b2
    for i in range(n):
        m[i] = b1 * m[i] + omb1 * g[i]
        v[i] = b2 * v[i] + omb2 * (g[i] * g[i])
        p[i] = p[i] - (lr * (m[i] / bc1)) / (sqrt(v[i] / bc2) + eps)


cdef void _en_subgrad(const double[::1] w, double twolam, double alpha, double[::1] out) noexcept:
    cdef Py_ssize_t i, n = w.shape[0]
    cdef double s
    for i in range(n):
        s = 1.0 if w[i] > 0.0 else (-1.0 if w[i] < 0.0 else 0.0)
        out[i] = twolam * w[i] + alpha * s


def _flat(a):
    if not a.flags.c_contiguous:
        raise ValueError("kernel inputs must be C-contiguous")
    return a.reshape(-1)


def relu(z):
    out = np.empty_like(z)
    _relu(_flat(z), _flat(out))
    return out


def relu_grad(grad_out, z):
    out = np.empty_like(z)
    _relu_grad(_flat(grad_out), _flat(z), _flat(out))
    return out


def adam_update(param, grad, m, v, lr, beta1, beta2, eps, bias_corr1, bias_corr2):
    _adam(_flat(param), _flat(grad), _flat(m), _flat(v),
          lr, beta1, beta2, eps, bias_corr1, bias_corr2)


def elastic_net_subgrad(w, lam, alpha, out):
    _en_subgrad(_flat(w), 2.0 * lam, alpha, _flat(out))
