# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels for the elementwise hot loops of training.

Mirrors ``_kernels_py``; selected at import time by
``advdebias.numkit.backend``. Only the loops where fusing operations beats
numpy's vectorized primitives are compiled: the AdamW update (one pass instead
of eight temporaries) and the tanh backward (one pass instead of three). For
the remaining activations numpy's SIMD ufuncs are already optimal, so those
cases delegate to the same expressions the fallback uses.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport sqrt, pow

cnp.import_array()

ACT_IDENTITY = 0
ACT_TANH = 1
ACT_RELU = 2


def adamw_update(double[::1] param, double[::1] grad,
                 double[::1] m, double[::1] v,
                 long step, double lr, double beta1, double beta2,
                 double eps, double weight_decay):
    """Fused bias-corrected Adam update with decoupled weight decay, in place.

    ``step`` is the 1-based step count after incrementing.
    """
    cdef Py_ssize_t i, n = param.shape[0]
    cdef double g, m_hat, v_hat, p
    cdef double c1 = 1.0 - pow(beta1, step)
    cdef double c2 = 1.0 - pow(beta2, step)
    for i in range(n):
        g = grad[i]
        m[i] = beta1 * m[i] + (1.0 - beta1) * g
        v[i] = beta2 * v[i] + (1.0 - beta2) * g * g
        m_hat = m[i] / c1
        v_hat = v[i] / c2
        p = param[i] - lr * m_hat / (sqrt(v_hat) + eps)
        if weight_decay != 0.0:
            p = p - lr * weight_decay * p
        param[i] = p


def act_forward(long kind, cnp.ndarray z):
    """Apply the activation to pre-activations ``z``; returns a new array."""
    if kind == ACT_IDENTITY:
        return z.copy()
    if kind == ACT_TANH:
        return np.tanh(z)
    if kind == ACT_RELU:
        return np.maximum(z, 0.0)
    raise ValueError(f"unknown activation kind {kind}")


def act_backward(long kind, cnp.ndarray z, cnp.ndarray out, cnp.ndarray upstream):
    """Gradient through the activation: returns d(loss)/d(z)."""
    cdef cnp.ndarray dz
    cdef double[::1] of, uf, df
    cdef Py_ssize_t i, n
    if kind == ACT_IDENTITY:
        return upstream.copy()
    if kind == ACT_TANH:
        dz = np.empty_like(upstream)
        of = out.ravel()
        uf = upstream.ravel()
        df = dz.ravel()
        n = uf.shape[0]
        for i in range(n):
            df[i] = uf[i] * (1.0 - of[i] * of[i])
        return dz
    if kind == ACT_RELU:
        return upstream * (z > 0.0)
    raise ValueError(f"unknown activation kind {kind}")
