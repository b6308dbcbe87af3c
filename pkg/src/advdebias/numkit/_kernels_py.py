"""Pure-numpy kernel implementations.

Fallback for the compiled extension in ``_kernels.pyx``; signatures must stay
in sync. All arrays are float64 and C-contiguous.
"""

import numpy as np

ACT_IDENTITY = 0
ACT_TANH = 1
ACT_RELU = 2


def adamw_update(param, grad, m, v, step, lr, beta1, beta2, eps, weight_decay):
    """Fused bias-corrected Adam update with decoupled weight decay, in place.

    ``step`` is the 1-based step count after incrementing.
    """
    m *= beta1
    m += (1.0 - beta1) * grad
    v *= beta2
    v += (1.0 - beta2) * grad * grad
    m_hat = m / (1.0 - beta1**step)
    v_hat = v / (1.0 - beta2**step)
    param -= lr * m_hat / (np.sqrt(v_hat) + eps)
    if weight_decay != 0.0:
        param -= lr * weight_decay * param


def act_forward(kind, z):
    """Apply the activation to pre-activations ``z``; returns a new array."""
    if kind == ACT_IDENTITY:
        return z.copy()
    if kind == ACT_TANH:
        return np.tanh(z)
    if kind == ACT_RELU:
        return np.maximum(z, 0.0)
    raise ValueError(f"unknown activation kind {kind}")


def act_backward(kind, z, out, upstream):
    """Gradient through the activation: returns d(loss)/d(z)."""
    if kind == ACT_IDENTITY:
        return upstream.copy()
    if kind == ACT_TANH:
        return upstream * (1.0 - out * out)
    if kind == ACT_RELU:
        return upstream * (z > 0.0)
    raise ValueError(f"unknown activation kind {kind}")
