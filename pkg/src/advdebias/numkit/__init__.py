"""Dense linear algebra, manually differentiated layers, and AdamW.

Everything is float64. Layers cache their forward pass so ``backward`` can be
called (possibly more than once, accumulating) until the next forward.
"""

import numpy as np

from ..errors import NumericError, ShapeError, StateError, ValidationError
from .backend import (
    ACT_IDENTITY,
    ACT_RELU,
    ACT_TANH,
    KERNEL_BACKEND,
    act_backward,
    act_forward,
    adamw_update,
)

__all__ = [
    "KERNEL_BACKEND",
    "ACTIVATIONS",
    "AdamState",
    "DenseLayer",
    "adam_step",
    "finite_diff_check",
    "glorot_uniform",
    "layer_rng",
    "matmul",
    "softmax_xent",
]

ACTIVATIONS = {"identity": ACT_IDENTITY, "tanh": ACT_TANH, "relu": ACT_RELU}


def matmul(a, b):
    """Matrix product with an explicit shape check."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul expects 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    return a @ b


def layer_rng(*key):
    """Deterministic per-layer generator from an integer key tuple.

    Philox is counter-based, so streams are identical across platforms.
    """
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(list(key))))


def glorot_uniform(rng, out_dim, in_dim):
    limit = np.sqrt(6.0 / (in_dim + out_dim))
    return rng.uniform(-limit, limit, size=(out_dim, in_dim))


class AdamState:
    """Adam moments plus hyperparameters for one layer's weight and bias."""

    def __init__(self, weight_shape, bias_shape, learning_rate,
                 beta1=0.9, beta2=0.999, epsilon=1e-8, weight_decay=0.0):
        if weight_decay < 0.0:
            raise ValidationError(f"weight_decay must be >= 0, got {weight_decay}")
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.weight_decay = weight_decay
        self.step_count = 0
        self.m_weight = np.zeros(weight_shape)
        self.v_weight = np.zeros(weight_shape)
        self.m_bias = np.zeros(bias_shape)
        self.v_bias = np.zeros(bias_shape)


class DenseLayer:
    """Affine transform plus activation, with gradient accumulators.

    forward: ``activation(x @ W.T + b)`` for x of shape (n, in_dim).
    backward accumulates into ``weight_grad``/``bias_grad`` and returns the
    gradient w.r.t. x.
    """

    def __init__(self, in_dim, out_dim, activation="tanh", rng=None):
        if activation not in ACTIVATIONS:
            raise ValidationError(f"unknown activation {activation!r}")
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.activation = activation
        self._act = ACTIVATIONS[activation]
        if rng is None:
            self.weight = np.zeros((out_dim, in_dim))
        else:
            self.weight = glorot_uniform(rng, out_dim, in_dim)
        self.bias = np.zeros(out_dim)
        self.weight_grad = np.zeros_like(self.weight)
        self.bias_grad = np.zeros_like(self.bias)
        self.adam = None
        self._cache = None

    def configure_adam(self, learning_rate, weight_decay=0.0, **kwargs):
        self.adam = AdamState(self.weight.shape, self.bias.shape,
                              learning_rate, weight_decay=weight_decay, **kwargs)

    def forward(self, x):
        x = np.ascontiguousarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.in_dim:
            raise ShapeError(
                f"dense forward: input {x.shape} incompatible with in_dim {self.in_dim}")
        z = x @ self.weight.T + self.bias
        out = act_forward(self._act, z)
        self._cache = (x, z, out)
        return out

    def backward(self, upstream):
        if self._cache is None:
            raise StateError("dense backward called before forward")
        x, z, out = self._cache
        upstream = np.ascontiguousarray(upstream, dtype=np.float64)
        if upstream.shape != out.shape:
            raise ShapeError(
                f"dense backward: upstream {upstream.shape} != output {out.shape}")
        dz = act_backward(self._act, z, out, upstream)
        self.weight_grad += dz.T @ x
        self.bias_grad += dz.sum(axis=0)
        return dz @ self.weight

    def zero_grads(self):
        self.weight_grad[:] = 0.0
        self.bias_grad[:] = 0.0

    def clear_cache(self):
        self._cache = None


def softmax_xent(logits, labels):
    """Mean softmax cross-entropy and its gradient w.r.t. the logits.

    Returns ``(loss, grad)`` with ``grad = (softmax - onehot) / n``.
    """
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels)
    n, k = logits.shape
    if n < 1:
        raise ValidationError("softmax_xent needs at least one row")
    if labels.shape != (n,):
        raise ShapeError(f"labels shape {labels.shape} != ({n},)")
    if labels.min() < 0 or labels.max() >= k:
        raise ValidationError(f"labels must lie in [0, {k}), got range "
                              f"[{labels.min()}, {labels.max()}]")
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    total = exp.sum(axis=1, keepdims=True)
    log_probs = shifted - np.log(total)
    rows = np.arange(n)
    loss = -log_probs[rows, labels].mean()
    grad = exp / total
    grad[rows, labels] -= 1.0
    grad /= n
    return loss, grad


def adam_step(layers):
    """One AdamW step over a set of DenseLayers; zeroes their gradients.

    Each layer carries its own AdamState (see ``configure_adam``). No-op on an
    empty set.
    """
    for layer in layers:
        st = layer.adam
        if st is None:
            raise StateError("adam_step on a layer without configure_adam")
        st.step_count += 1
        adamw_update(layer.weight.reshape(-1), layer.weight_grad.reshape(-1),
                     st.m_weight.reshape(-1), st.v_weight.reshape(-1),
                     st.step_count, st.learning_rate, st.beta1, st.beta2,
                     st.epsilon, st.weight_decay)
        adamw_update(layer.bias, layer.bias_grad, st.m_bias, st.v_bias,
                     st.step_count, st.learning_rate, st.beta1, st.beta2,
                     st.epsilon, st.weight_decay)
        layer.zero_grads()


def finite_diff_check(loss_fn, params_and_grads, h=1e-5):
    """Max relative error between analytic gradients and central differences.

    ``params_and_grads`` is a list of (parameter array, analytic gradient
    array) pairs; ``loss_fn()`` recomputes the scalar loss from the current
    parameter values. Parameters are perturbed in place and restored.
    """
    worst = 0.0
    for param, grad in params_and_grads:
        flat_p = param.reshape(-1)
        flat_g = grad.reshape(-1)
        for i in range(flat_p.size):
            orig = flat_p[i]
            flat_p[i] = orig + h
            up = loss_fn()
            flat_p[i] = orig - h
            down = loss_fn()
            flat_p[i] = orig
            if not (np.isfinite(up) and np.isfinite(down)):
                raise NumericError("non-finite loss during finite differencing")
            central = (up - down) / (2.0 * h)
            analytic = flat_g[i]
            err = abs(analytic - central) / (abs(analytic) + abs(central) + 1e-12)
            worst = max(worst, err)
    return worst
