"""Iterative null-space projection over fixed representations.

A linear hinge-loss probe is trained for the protected attribute, its weight
direction is removed by projecting onto the probe's null-space, and the loop
repeats until the probe can no longer beat the majority class.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .numkit import layer_rng

_STREAM_PROBE = 7


@dataclass
class LinearProbe:
    """Binary linear classifier; sign of the decision score is the label."""

    weight: np.ndarray  # (d,)
    bias: float

    def scores(self, x):
        return np.asarray(x) @ self.weight + self.bias

    def predict(self, x):
        return (self.scores(x) > 0).astype(np.int64)

    def accuracy(self, x, labels):
        return float((self.predict(x) == np.asarray(labels)).mean())


def train_linear_probe(x, labels, epochs=100, reg=1e-4, seed=0, batch_size=64):
    """Linear-SVM probe via Pegasos-style subgradient descent on the
    L2-regularized hinge loss. Returns the average of the iterates from the
    second half of training (tail averaging), which is far less noisy than
    the final iterate. Deterministic given the seed."""
    x = np.asarray(x, dtype=np.float64)
    labels = np.asarray(labels)
    n, d = x.shape
    if n < 2:
        raise ValidationError("probe needs at least two samples")
    classes = np.unique(labels)
    if len(classes) < 2:
        raise ValidationError("probe needs both classes present")
    y = np.where(labels == classes.max(), 1.0, -1.0)

    w = np.zeros(d)
    b = 0.0
    w_sum = np.zeros(d)
    b_sum = 0.0
    n_avg = 0
    avg_from = epochs // 2
    rng = layer_rng(seed, _STREAM_PROBE)
    t = 0
    for epoch in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            t += 1
            eta = 1.0 / (reg * (t + 1))
            margins = y[idx] * (x[idx] @ w + b)
            viol = margins < 1.0
            w *= 1.0 - eta * reg
            if viol.any():
                yv = y[idx][viol]
                w += (eta / len(idx)) * (yv @ x[idx][viol])
                b += (eta / len(idx)) * yv.sum()
            if epoch >= avg_from:
                w_sum += w
                b_sum += b
                n_avg += 1
    if n_avg == 0:
        return LinearProbe(w, float(b))
    return LinearProbe(w_sum / n_avg, float(b_sum / n_avg))


def nullspace_projection(basis):
    """Projector onto the orthogonal complement of the given row span.

    Rows are orthonormalized by modified Gram-Schmidt; rows that vanish (norm
    < 1e-10 after orthogonalization) are dropped. Returns P = I - B^T B.
    """
    basis = np.asarray(basis, dtype=np.float64)
    if basis.ndim != 2:
        raise ValidationError(f"basis must be 2-D (rows x d), got shape {basis.shape}")
    m, d = basis.shape
    if m > d:
        raise ValidationError(f"basis has {m} rows in dimension {d}")
    rows = _orthonormalize(basis)
    p = np.eye(d)
    if len(rows) > 0:
        b = np.array(rows)
        p -= b.T @ b
    return p


def _orthonormalize(basis, tol=1e-10):
    rows = []
    for v in basis:
        v = v.astype(np.float64).copy()
        for u in rows:
            v -= (u @ v) * u
        norm = np.linalg.norm(v)
        if norm > tol:
            rows.append(v / norm)
    return rows


@dataclass
class ProjectionState:
    basis: np.ndarray  # (m, d) orthonormal removed directions
    projector: np.ndarray  # (d, d)
    iteration_log: list = field(default_factory=list)  # dev probe accuracies


@dataclass
class InlpResult:
    state: ProjectionState
    x_projected: np.ndarray  # projected training representations
    main_classifier: LinearProbe  # post-hoc main-task classifier on X*


def run_inlp(x_train, g_train, x_dev, g_dev, y_train=None, max_iterations=64,
             probe_epochs=100, probe_reg=1e-4, seed=0, chance_margin=0.01):
    """INLP loop plus a post-hoc linear main-task classifier.

    Stops once the dev accuracy of a fresh probe on the projected features
    falls to the majority-class fraction + ``chance_margin``, or after
    ``max_iterations``. ``y_train``, when given, is used to fit the post-hoc
    main classifier on the projected representations.
    """
    x_train = np.asarray(x_train, dtype=np.float64)
    x_dev = np.asarray(x_dev, dtype=np.float64)
    g_train = np.asarray(g_train)
    g_dev = np.asarray(g_dev)
    d = x_train.shape[1]
    max_iterations = min(max_iterations, d)
    majority = max(np.mean(g_dev == c) for c in np.unique(g_dev))

    rows = []
    p = np.eye(d)
    log = []
    for it in range(max_iterations + 1):
        xp = x_train @ p
        probe = train_linear_probe(xp, g_train, epochs=probe_epochs,
                                   reg=probe_reg, seed=seed * 1000 + it)
        acc = probe.accuracy(x_dev @ p, g_dev)
        log.append(acc)
        if acc <= majority + chance_margin or it == max_iterations:
            break
        norm = np.linalg.norm(probe.weight)
        if norm == 0.0:
            break
        rows.append(probe.weight / norm)
        p = nullspace_projection(np.array(rows)) if rows else np.eye(d)

    basis = np.array(_orthonormalize(np.array(rows))) if rows else np.zeros((0, d))
    state = ProjectionState(basis, p, log)
    x_star = x_train @ p

    main_clf = None
    if y_train is not None:
        main_clf = train_linear_probe(x_star, np.asarray(y_train),
                                      epochs=probe_epochs, reg=probe_reg,
                                      seed=seed * 1000 + 999)
    return InlpResult(state, x_star, main_clf)


def iteration_log_csv(state):
    """Per-iteration probe accuracies as comma-separated text."""
    lines = ["iteration,probe_dev_accuracy"]
    lines += [f"{i},{a:.6f}" for i, a in enumerate(state.iteration_log)]
    return "\n".join(lines) + "\n"
