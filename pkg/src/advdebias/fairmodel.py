"""Main task model, discriminator ensemble, adversarial losses, and training.

The minimax game is trained jointly through gradient reversal: a single
backward pass per minibatch updates the main model and every sub-discriminator
with their own Adam groups.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    NumericDivergenceError,
    ShapeError,
    StateError,
    ValidationError,
)
from .numkit import DenseLayer, adam_step, layer_rng, softmax_xent

METHODS = ("standard_no_adv", "adv_single", "adv_ensemble", "diff_ensemble")

# SeedSequence stream tags, so main-model init, discriminator init, and batch
# shuffling never share a stream (keeps the standard and adversarial
# trajectories bit-comparable).
_STREAM_MAIN = 0
_STREAM_DISC = 1
_STREAM_SHUFFLE = 2


@dataclass
class AdversarialConfig:
    method: str = "diff_ensemble"
    k: int = 3
    lambda_adv: float = 0.8
    lambda_diff: float = 10**3.7
    epochs: int = 60
    batch_size: int = 1024
    lr_main: float = 3e-5
    lr_disc: float = 3e-6
    seed: int = 0
    hidden_main: int = 300
    hidden_disc: int = 256
    num_classes: int = 2
    num_protected: int = 2
    weight_decay: float = 1e-5
    diff_into_main: bool = False

    def validate(self):
        if self.method not in METHODS:
            raise ValidationError(f"unknown method {self.method!r}")
        if self.k < 1:
            raise ValidationError("k must be >= 1")
        if self.lambda_adv < 0 or self.lambda_diff < 0:
            raise ValidationError("lambda_adv and lambda_diff must be >= 0")
        if self.method == "adv_single" and (self.k != 1 or self.lambda_diff != 0):
            raise ValidationError("adv_single requires k=1 and lambda_diff=0")
        if self.method == "adv_ensemble" and self.lambda_diff != 0:
            raise ValidationError("adv_ensemble requires lambda_diff=0")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValidationError("epochs and batch_size must be >= 1")
        return self


class MainModel:
    """Two-layer encoder (input -> hidden -> hidden) plus a linear classifier."""

    def __init__(self, input_dim, hidden=300, num_classes=2, seed=0):
        self.input_dim = input_dim
        self.hidden = hidden
        self.num_classes = num_classes
        self.enc1 = DenseLayer(input_dim, hidden, "tanh",
                               layer_rng(seed, _STREAM_MAIN, 0))
        self.enc2 = DenseLayer(hidden, hidden, "tanh",
                               layer_rng(seed, _STREAM_MAIN, 1))
        self.cls = DenseLayer(hidden, num_classes, "identity",
                              layer_rng(seed, _STREAM_MAIN, 2))

    @property
    def layers(self):
        return [self.enc1, self.enc2, self.cls]

    def forward(self, x):
        """Returns (h, logits); h is the post-activation encoder output."""
        h = self.enc2.forward(self.enc1.forward(x))
        return h, self.cls.forward(h)

    def backward(self, d_logits, d_h_extra=None):
        dh = self.cls.backward(d_logits)
        if d_h_extra is not None:
            dh = dh + d_h_extra
        self.enc1.backward(self.enc2.backward(dh))

    def predict(self, x):
        _, logits = self.forward(x)
        return logits.argmax(axis=1)

    def accuracy(self, x, y):
        return float((self.predict(x) == np.asarray(y)).mean())


class Discriminator:
    """Three-layer MLP adversary: two-layer encoder plus linear output."""

    def __init__(self, input_dim, hidden=256, num_protected=2, seed=0, index=0):
        self.input_dim = input_dim
        self.hidden = hidden
        self.enc1 = DenseLayer(input_dim, hidden, "tanh",
                               layer_rng(seed, _STREAM_DISC, index, 0))
        self.enc2 = DenseLayer(hidden, hidden, "tanh",
                               layer_rng(seed, _STREAM_DISC, index, 1))
        self.cls = DenseLayer(hidden, num_protected, "identity",
                              layer_rng(seed, _STREAM_DISC, index, 2))

    @property
    def layers(self):
        return [self.enc1, self.enc2, self.cls]

    def forward(self, h_m):
        """Returns (h_a, g_logits); h_a is kept for the difference loss."""
        h_a = self.enc2.forward(self.enc1.forward(h_m))
        return h_a, self.cls.forward(h_a)


def main_forward(model, x):
    return model.forward(x)


def disc_forward(disc, h_m):
    return disc.forward(h_m)


def grl_backward(upstream_grad):
    """Gradient reversal: identity forward, exact negation backward."""
    return -np.asarray(upstream_grad)


def ensemble_adv_loss(discs, h_m, g):
    """Unweighted average adversary cross-entropy over the ensemble.

    Returns (average, per-discriminator losses). Sign and lambda weighting are
    applied by the caller through the gradient-reversal path.
    """
    if len(discs) == 0:
        raise ValidationError("ensemble_adv_loss needs at least one discriminator")
    losses = []
    for disc in discs:
        _, g_logits = disc.forward(h_m)
        loss, _ = softmax_xent(g_logits, g)
        losses.append(loss)
    return float(np.mean(losses)), losses


def difference_loss(h_as):
    """Sum over ordered pairs i != j of the squared Frobenius norm of the
    cross-Gram matrix h_i.T @ h_j. The lambda weight is the caller's."""
    _check_same_shapes(h_as)
    total = 0.0
    for i, hi in enumerate(h_as):
        for j, hj in enumerate(h_as):
            if i != j:
                total += float(np.sum((hi.T @ hj) ** 2))
    return total


def difference_loss_grads(h_as):
    """Gradients of difference_loss w.r.t. each h_i."""
    _check_same_shapes(h_as)
    grads = []
    for i, hi in enumerate(h_as):
        g = np.zeros_like(hi)
        for j, hj in enumerate(h_as):
            if i != j:
                # ordered pairs (i,j) and (j,i) each contribute 2*Hj Hj^T Hi
                g += 4.0 * (hj @ (hj.T @ hi))
        grads.append(g)
    return grads


def _check_same_shapes(h_as):
    if len(h_as) == 0:
        raise ValidationError("difference loss needs at least one matrix")
    shape = h_as[0].shape
    for h in h_as[1:]:
        if h.shape != shape:
            raise ShapeError(f"difference loss shape disagreement: {h.shape} vs {shape}")


@dataclass
class StepLosses:
    main_loss: float
    adv_loss: float
    diff_loss: float


def _guard(term, value):
    if not np.isfinite(value):
        raise NumericDivergenceError(term, value)
    return value


def compute_gradients(model, discs, x, y, g, cfg):
    """Forward + backward for one minibatch, leaving gradients accumulated.

    Main-model parameters receive the gradient of
    X(y, y_hat) - (lambda_adv / k) * sum_j X(g, g_hat_j); each discriminator
    receives the gradient of its own X(g, g_hat_j) plus, for diff_ensemble,
    lambda_diff times the difference loss (encoder layers only, with h_M held
    constant). No parameters are updated.
    """
    h, logits = model.forward(x)
    main_loss, d_logits = softmax_xent(logits, y)
    _guard("main task cross-entropy", main_loss)

    adv_loss = 0.0
    diff_loss = 0.0
    d_h_adv = None

    if cfg.method != "standard_no_adv":
        k = len(discs)
        disc_losses = []
        d_h_sum = np.zeros_like(h)
        h_as = []
        for disc in discs:
            h_a, g_logits = disc.forward(h)
            loss_j, d_gl = softmax_xent(g_logits, g)
            _guard("adversary cross-entropy", loss_j)
            disc_losses.append(loss_j)
            h_as.append(h_a)
            # minimization pass for the discriminator's own parameters; the
            # input-side gradient is reused for the reversed main-model path
            d_ha = disc.cls.backward(d_gl)
            d_h_sum += disc.enc1.backward(disc.enc2.backward(d_ha))
        adv_loss = float(np.mean(disc_losses))

        scale = cfg.lambda_adv / k
        if scale != 0.0:
            d_h_adv = grl_backward(scale * d_h_sum)

        if cfg.method == "diff_ensemble" and cfg.lambda_diff > 0.0 and k >= 2:
            diff_loss = _guard("difference loss", difference_loss(h_as))
            for disc, d_ha in zip(discs, difference_loss_grads(h_as)):
                d_h_diff = disc.enc1.backward(
                    disc.enc2.backward(cfg.lambda_diff * d_ha))
                if cfg.diff_into_main:
                    if d_h_adv is None:
                        d_h_adv = d_h_diff
                    else:
                        d_h_adv = d_h_adv + d_h_diff

    model.backward(d_logits, d_h_adv)
    return StepLosses(main_loss, adv_loss, diff_loss)


def adversarial_train_step(model, discs, x, y, g, cfg):
    """One joint minibatch update of the main model and all discriminators."""
    losses = compute_gradients(model, discs, x, y, g, cfg)
    adam_step(model.layers)
    for disc in discs:
        adam_step(disc.layers)
    return losses


@dataclass
class EpochStats:
    epoch: int
    main_loss: float
    adv_loss: float
    diff_loss: float
    dev_accuracy: float


@dataclass
class Checkpoint:
    """Best-on-dev snapshot of the main model parameters."""

    epoch: int
    dev_accuracy: float
    input_dim: int
    hidden: int
    num_classes: int
    params: list = field(default_factory=list)  # (weight, bias) per layer

    @classmethod
    def capture(cls, model, epoch, dev_accuracy):
        params = [(l.weight.copy(), l.bias.copy()) for l in model.layers]
        return cls(epoch, dev_accuracy, model.input_dim, model.hidden,
                   model.num_classes, params)

    def build_model(self):
        model = MainModel(self.input_dim, self.hidden, self.num_classes, seed=0)
        for layer, (w, b) in zip(model.layers, self.params):
            layer.weight[:] = w
            layer.bias[:] = b
        return model


def build_discriminators(cfg, hidden_main=None):
    hidden_main = hidden_main if hidden_main is not None else cfg.hidden_main
    if cfg.method == "standard_no_adv":
        return []
    k = cfg.k
    discs = [Discriminator(hidden_main, cfg.hidden_disc, cfg.num_protected,
                           seed=cfg.seed, index=j) for j in range(k)]
    for disc in discs:
        for layer in disc.layers:
            layer.configure_adam(cfg.lr_disc, weight_decay=cfg.weight_decay)
    return discs


def train_run(train, dev, cfg):
    """Shuffled-minibatch training; returns (best Checkpoint, epoch history).

    ``train`` and ``dev`` are (X, y, g) triples. Fully deterministic given
    ``cfg.seed``.
    """
    cfg.validate()
    x_tr, y_tr, g_tr = (np.asarray(a) for a in train)
    x_dev, y_dev, _ = (np.asarray(a) for a in dev)
    if len(x_tr) == 0 or len(x_dev) == 0:
        raise ValidationError("train and dev splits must be non-empty")

    model = MainModel(x_tr.shape[1], cfg.hidden_main, cfg.num_classes, cfg.seed)
    for layer in model.layers:
        layer.configure_adam(cfg.lr_main, weight_decay=cfg.weight_decay)
    discs = build_discriminators(cfg)

    history = []
    best = None
    n = len(x_tr)
    for epoch in range(cfg.epochs):
        order = layer_rng(cfg.seed, _STREAM_SHUFFLE, epoch).permutation(n)
        sums = np.zeros(3)
        batches = 0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            losses = adversarial_train_step(
                model, discs, x_tr[idx], y_tr[idx], g_tr[idx], cfg)
            sums += (losses.main_loss, losses.adv_loss, losses.diff_loss)
            batches += 1
        dev_acc = model.accuracy(x_dev, y_dev)
        history.append(EpochStats(epoch, *(sums / batches), dev_acc))
        if best is None or dev_acc > best.dev_accuracy:
            best = Checkpoint.capture(model, epoch, dev_acc)
    return best, history


def select_checkpoint(history):
    """Index of the best dev accuracy; earliest epoch wins ties."""
    if len(history) == 0:
        raise ValidationError("empty history")
    accs = [h.dev_accuracy for h in history]
    return int(np.argmax(accs))


# --- checkpoint serialization -------------------------------------------------

_CKPT_MAGIC = "advdebias-checkpoint 1"


def save_checkpoint(ckpt, path):
    """Versioned text format; float64-exact via hex floats."""
    with open(path, "w", encoding="utf-8") as f:
        f.write(_CKPT_MAGIC + "\n")
        f.write(f"epoch {ckpt.epoch}\n")
        f.write(f"dev_accuracy {float(ckpt.dev_accuracy).hex()}\n")
        f.write(f"dims {ckpt.input_dim} {ckpt.hidden} {ckpt.num_classes}\n")
        f.write(f"layers {len(ckpt.params)}\n")
        for w, b in ckpt.params:
            f.write(f"layer {w.shape[0]} {w.shape[1]}\n")
            f.write(" ".join(v.hex() for v in w.reshape(-1)) + "\n")
            f.write(" ".join(v.hex() for v in b) + "\n")


def load_checkpoint(path):
    with open(path, encoding="utf-8") as f:
        lines = f.read().splitlines()
    if not lines or lines[0] != _CKPT_MAGIC:
        raise StateError(f"{path}: not a recognized checkpoint file")
    epoch = int(lines[1].split()[1])
    dev_acc = float.fromhex(lines[2].split()[1])
    input_dim, hidden, num_classes = (int(v) for v in lines[3].split()[1:])
    n_layers = int(lines[4].split()[1])
    params = []
    pos = 5
    for _ in range(n_layers):
        out_dim, in_dim = (int(v) for v in lines[pos].split()[1:])
        w = np.array([float.fromhex(v) for v in lines[pos + 1].split()])
        b = np.array([float.fromhex(v) for v in lines[pos + 2].split()])
        params.append((w.reshape(out_dim, in_dim), b))
        pos += 3
    return Checkpoint(epoch, dev_acc, input_dim, hidden, num_classes, params)
