"""Equalized-odds gaps and linear leakage probes.

All functions operate on frozen predictions/representations; nothing here
updates a model.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .inlp import train_linear_probe
from .numkit import layer_rng

_STREAM_SPLIT = 11


@dataclass
class GapResult:
    tpr_gap: float
    tnr_gap: float
    confusion: dict  # (y, g) -> {"correct": int, "total": int}


def tpr_tnr_gap(y_hat, y, g):
    """Absolute TPR and TNR differences between the two protected groups.

    Positive class is y=1. Every (y, g) cell must be non-empty, otherwise the
    group rate is undefined.
    """
    y_hat = np.asarray(y_hat)
    y = np.asarray(y)
    g = np.asarray(g)
    confusion = {}
    rates = {}
    for yy in (0, 1):
        for gg in (0, 1):
            mask = (y == yy) & (g == gg)
            total = int(mask.sum())
            if total == 0:
                raise ValidationError(f"empty evaluation cell (y={yy}, g={gg})")
            correct = int((y_hat[mask] == yy).sum())
            confusion[(yy, gg)] = {"correct": correct, "total": total}
            rates[(yy, gg)] = correct / total
    tpr_gap = abs(rates[(1, 0)] - rates[(1, 1)])
    tnr_gap = abs(rates[(0, 0)] - rates[(0, 1)])
    return GapResult(tpr_gap, tnr_gap, confusion)


def leakage_probe(features, g, split_seed=0, train_frac=0.7, probe_epochs=100,
                  probe_reg=1e-4):
    """Held-out accuracy of a fresh linear probe recovering g from features.

    The probe is trained on a random ``train_frac`` split and evaluated on the
    remainder; the model that produced the features stays frozen.
    """
    features = np.asarray(features, dtype=np.float64)
    g = np.asarray(g)
    if features.ndim == 1:
        features = features[:, None]
    if len(np.unique(g)) < 2:
        raise ValidationError("leakage probe needs both protected classes")
    n = len(features)
    order = layer_rng(split_seed, _STREAM_SPLIT).permutation(n)
    n_train = int(round(train_frac * n))
    tr, ev = order[:n_train], order[n_train:]
    if len(np.unique(g[tr])) < 2 or len(ev) == 0:
        raise ValidationError("split left a single-class probe set; adjust seed/frac")
    probe = train_linear_probe(features[tr], g[tr], epochs=probe_epochs,
                               reg=probe_reg, seed=split_seed)
    return probe.accuracy(features[ev], g[ev])


def leakage_mean_std(features, g, n_probes=5, base_seed=0, **kwargs):
    """Mean and standard deviation of leakage over repeated probe splits."""
    accs = [leakage_probe(features, g, split_seed=base_seed + i, **kwargs)
            for i in range(n_probes)]
    return float(np.mean(accs)), float(np.std(accs))


@dataclass
class EvalRecord:
    accuracy: float
    tpr_gap: float
    tnr_gap: float
    leakage_h: float
    leakage_yhat: float
    per_group_accuracy: dict  # g -> fraction


def evaluate_predictions(y_hat, y, g, h_features, yhat_features,
                         probe_seed=0, n_probes=5, probe_epochs=100):
    """Full evaluation record on one (frozen) model's test outputs.

    ``h_features`` are the final hidden representations, ``yhat_features`` the
    output logits (or decision scores) used for the two leakage levels.
    """
    y_hat = np.asarray(y_hat)
    y = np.asarray(y)
    g = np.asarray(g)
    gaps = tpr_tnr_gap(y_hat, y, g)
    acc = float((y_hat == y).mean())
    per_group = {int(gg): float((y_hat[g == gg] == y[g == gg]).mean())
                 for gg in np.unique(g)}
    leak_h, _ = leakage_mean_std(h_features, g, n_probes=n_probes,
                                 base_seed=probe_seed, probe_epochs=probe_epochs)
    leak_y, _ = leakage_mean_std(yhat_features, g, n_probes=n_probes,
                                 base_seed=probe_seed, probe_epochs=probe_epochs)
    return EvalRecord(acc, gaps.tpr_gap, gaps.tnr_gap, leak_h, leak_y, per_group)
