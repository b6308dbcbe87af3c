"""Experiment harness: config parsing, training/evaluation runs, sweeps.

Subcommands: ``train``, ``sweep``, ``gen-data``, ``probe``. Configuration is a
flat ``key = value`` text file; any ``--key value`` flag overrides the file.
Exit codes: 0 success, 1 validation error, 2 numeric divergence, 3 I/O error.
"""

import argparse
import csv
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields, replace

import numpy as np

from . import datagen, fairmetrics, inlp
from .errors import (
    AdvDebiasError,
    NumericDivergenceError,
    ValidationError,
)
from .fairmodel import (
    AdversarialConfig,
    load_checkpoint,
    save_checkpoint,
    train_run,
)

CLI_METHODS = ("standard_no_adv", "adv_single", "adv_ensemble",
               "diff_ensemble", "inlp")
SWEEP_PARAMETERS = ("lambda_adv", "lambda_diff", "k")

CSV_HEADER = ("method,seed,lambda_adv,lambda_diff,k,accuracy,tpr_gap,tnr_gap,"
              "leakage_h,leakage_yhat,epochs_to_best,wall_time_seconds")
SWEEP_CSV_HEADER = "param,param_value,status," + CSV_HEADER
HISTORY_HEADER = "seed,epoch,main_loss,adv_loss,diff_loss,dev_accuracy"


def _parse_bool(text):
    t = text.strip().lower()
    if t in ("true", "1", "yes", "on"):
        return True
    if t in ("false", "0", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


@dataclass
class ExperimentConfig:
    # experiment
    method: str = "diff_ensemble"
    n_seeds: int = 1
    seed: int = 0
    data_source: str = "synthetic"
    out: str = "results.csv"
    workers: int = 1
    history: bool = False
    checkpoint_out: str = ""
    # synthetic data (desk-scale defaults)
    d: int = 48
    n_train: int = 20000
    n_dev: int = 2000
    n_test: int = 4000
    main_signal: float = 1.0
    protected_signal: float = 1.0
    noise_sigma: float = 1.0
    skew: str = "0.4,0.1,0.1,0.4"
    # training (paper defaults)
    hidden_main: int = 300
    hidden_disc: int = 256
    epochs: int = 60
    batch_size: int = 1024
    lr_main: float = 3e-5
    lr_disc: float = 3e-6
    lambda_adv: float = 0.8
    lambda_diff: float = 10**3.7
    k: int = 3
    weight_decay: float = 1e-5
    diff_into_main: bool = False
    # probes / INLP
    probe_epochs: int = 100
    probe_reg: float = 1e-4
    n_probes: int = 5
    inlp_max_iterations: int = 64
    # sweep
    sweep_parameter: str = ""
    sweep_grid: str = ""


_CONVERTERS = {
    str: lambda s: s,
    int: int,
    float: float,
    bool: _parse_bool,
}
_FIELD_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}
_PYTYPES = {"str": str, "int": int, "float": float, "bool": bool}


def parse_config(path=None, overrides=None):
    """Build an ExperimentConfig from a flat key=value file plus overrides.

    Unknown keys and type mismatches are rejected with the key named.
    """
    values = {}

    def assign(key, raw, where):
        key = key.strip()
        if key not in _FIELD_TYPES:
            raise ValidationError(f"{where}: unknown config key {key!r}")
        ftype = _PYTYPES[_FIELD_TYPES[key]] if isinstance(
            _FIELD_TYPES[key], str) else _FIELD_TYPES[key]
        try:
            values[key] = _CONVERTERS[ftype](raw.strip())
        except ValueError:
            raise ValidationError(
                f"{where}: key {key!r} expects {ftype.__name__}, "
                f"got {raw.strip()!r}") from None

    if path is not None:
        with open(path, encoding="utf-8") as f:
            for line_no, line in enumerate(f, start=1):
                stripped = line.strip()
                if not stripped or stripped.startswith("#"):
                    continue
                if "=" not in stripped:
                    raise ValidationError(
                        f"{path}:{line_no}: expected 'key = value'")
                key, _, raw = stripped.partition("=")
                assign(key, raw, f"{path}:{line_no}")
    for key, raw in (overrides or {}).items():
        assign(key, raw, "flag")

    cfg = ExperimentConfig(**values)
    validate_experiment_config(cfg)
    return cfg


def validate_experiment_config(cfg):
    if cfg.method not in CLI_METHODS:
        raise ValidationError(
            f"method must be one of {CLI_METHODS}, got {cfg.method!r}")
    if cfg.n_seeds < 1:
        raise ValidationError("n_seeds must be >= 1")
    if cfg.workers < 1:
        raise ValidationError("workers must be >= 1")
    if not (cfg.data_source == "synthetic" or cfg.data_source.startswith("file:")):
        raise ValidationError(
            "data_source must be 'synthetic' or 'file:<path>'")
    if cfg.sweep_parameter and cfg.sweep_parameter not in SWEEP_PARAMETERS:
        raise ValidationError(
            f"sweep_parameter must be one of {SWEEP_PARAMETERS}")
    _parse_skew(cfg.skew)
    return cfg


def _parse_skew(text):
    try:
        props = tuple(float(v) for v in text.split(","))
    except ValueError:
        raise ValidationError(f"skew must be four comma-separated reals, "
                              f"got {text!r}") from None
    return datagen.SkewSpec(props).validate()


def build_dataset(cfg, seed):
    if cfg.data_source.startswith("file:"):
        return datagen.load_embeddings(cfg.data_source[len("file:"):])
    gen = datagen.GeneratorSpec(
        d=cfg.d, main_signal=cfg.main_signal,
        protected_signal=cfg.protected_signal, noise_sigma=cfg.noise_sigma,
        seed=seed)
    return datagen.generate_synthetic(gen, cfg.n_train, cfg.n_dev, cfg.n_test,
                                      skew=_parse_skew(cfg.skew))


def resolve_train_config(cfg, seed, method=None):
    """Coerce the experiment config into a consistent AdversarialConfig."""
    method = method or cfg.method
    k, lam_adv, lam_diff = cfg.k, cfg.lambda_adv, cfg.lambda_diff
    if method in ("standard_no_adv", "inlp"):
        method_internal, k, lam_adv, lam_diff = "standard_no_adv", 1, 0.0, 0.0
    elif method == "adv_single":
        method_internal, k, lam_diff = "adv_single", 1, 0.0
    elif method == "adv_ensemble":
        method_internal, lam_diff = "adv_ensemble", 0.0
    else:
        method_internal = "diff_ensemble"
    return AdversarialConfig(
        method=method_internal, k=k, lambda_adv=lam_adv, lambda_diff=lam_diff,
        epochs=cfg.epochs, batch_size=cfg.batch_size, lr_main=cfg.lr_main,
        lr_disc=cfg.lr_disc, seed=seed, hidden_main=cfg.hidden_main,
        hidden_disc=cfg.hidden_disc, weight_decay=cfg.weight_decay,
        diff_into_main=cfg.diff_into_main).validate()


@dataclass
class RunResult:
    method: str
    seed: int
    lambda_adv: float
    lambda_diff: float
    k: int
    accuracy: float
    tpr_gap: float
    tnr_gap: float
    leakage_h: float
    leakage_yhat: float
    epochs_to_best: int
    wall_time_seconds: float

    def row(self):
        return [self.method, str(self.seed), _fmt(self.lambda_adv),
                _fmt(self.lambda_diff), str(self.k), _fmt(self.accuracy),
                _fmt(self.tpr_gap), _fmt(self.tnr_gap), _fmt(self.leakage_h),
                _fmt(self.leakage_yhat), str(self.epochs_to_best),
                f"{self.wall_time_seconds:.3f}"]


def _fmt(value):
    return f"{value:.12g}"


def run_one(cfg, seed):
    """Train + evaluate one (config, seed) pair; returns (RunResult, history,
    best checkpoint)."""
    start = time.perf_counter()
    ds = build_dataset(cfg, seed)
    train, dev, test = ds.subset("train"), ds.subset("dev"), ds.subset("test")
    acfg = resolve_train_config(cfg, seed)
    ckpt, history = train_run(train, dev, acfg)
    model = ckpt.build_model()

    if cfg.method == "inlp":
        record = _evaluate_inlp(model, train, dev, test, cfg, seed)
    else:
        x_te, y_te, g_te = test
        h, logits = model.forward(x_te)
        record = fairmetrics.evaluate_predictions(
            logits.argmax(axis=1), y_te, g_te, h, logits, probe_seed=seed,
            n_probes=cfg.n_probes, probe_epochs=cfg.probe_epochs)

    wall = time.perf_counter() - start
    result = RunResult(cfg.method, seed, acfg.lambda_adv, acfg.lambda_diff,
                       acfg.k, record.accuracy, record.tpr_gap, record.tnr_gap,
                       record.leakage_h, record.leakage_yhat, ckpt.epoch, wall)
    return result, history, ckpt


def _evaluate_inlp(model, train, dev, test, cfg, seed):
    """INLP on the trained standard model's hidden representations."""
    h_tr = model.forward(train[0])[0]
    h_dev = model.forward(dev[0])[0]
    h_te = model.forward(test[0])[0]
    res = inlp.run_inlp(h_tr, train[2], h_dev, dev[2], y_train=train[1],
                        max_iterations=cfg.inlp_max_iterations,
                        probe_epochs=cfg.probe_epochs, probe_reg=cfg.probe_reg,
                        seed=seed)
    p = res.state.projector
    h_te_star = h_te @ p
    y_hat = res.main_classifier.predict(h_te_star)
    scores = res.main_classifier.scores(h_te_star)
    return fairmetrics.evaluate_predictions(
        y_hat, test[1], test[2], h_te_star, scores[:, None], probe_seed=seed,
        n_probes=cfg.n_probes, probe_epochs=cfg.probe_epochs)


# --- CSV helpers --------------------------------------------------------------

def _open_csv(path, header):
    try:
        f = open(path, "a", newline="", encoding="utf-8")
    except OSError as e:
        raise IOError(f"cannot open {path}: {e}") from e
    if f.tell() == 0:
        f.write(header + "\n")
    return f


def _write_history(path, seed, history):
    with _open_csv(path, HISTORY_HEADER) as f:
        w = csv.writer(f)
        for h in history:
            w.writerow([seed, h.epoch, _fmt(h.main_loss), _fmt(h.adv_loss),
                        _fmt(h.diff_loss), _fmt(h.dev_accuracy)])


def _summarize(results, stream):
    metrics = ("accuracy", "tpr_gap", "tnr_gap", "leakage_h", "leakage_yhat")
    for name in metrics:
        vals = np.array([getattr(r, name) for r in results])
        stream.write(f"{name}: {vals.mean():.4f} +- {vals.std():.4f}\n")


# --- subcommands --------------------------------------------------------------

def cmd_train(cfg, stream=sys.stdout):
    results = []
    seeds = range(cfg.seed, cfg.seed + cfg.n_seeds)
    with _open_csv(cfg.out, CSV_HEADER) as f:
        writer = csv.writer(f)
        for seed in seeds:
            try:
                result, history, ckpt = run_one(cfg, seed)
            except NumericDivergenceError as e:
                stream.write(f"seed {seed}: diverged: {e}\n")
                raise
            writer.writerow(result.row())
            f.flush()
            results.append(result)
            if cfg.history:
                _write_history(cfg.out + ".history.csv", seed, history)
            if cfg.checkpoint_out:
                save_checkpoint(ckpt, f"{cfg.checkpoint_out}.seed{seed}.ckpt")
            stream.write(f"seed {seed}: acc={result.accuracy:.4f} "
                         f"tpr_gap={result.tpr_gap:.4f} "
                         f"tnr_gap={result.tnr_gap:.4f}\n")
    _summarize(results, stream)
    return results


def _sweep_task(args):
    cfg, seed, param, raw_value = args
    try:
        result, _, _ = run_one(cfg, seed)
        return (param, raw_value, "ok", result, None)
    except NumericDivergenceError as e:
        return (param, raw_value, "failed", None, str(e))


def _sweep_value_config(cfg, param, raw_value):
    try:
        value = int(raw_value) if param == "k" else float(raw_value)
    except ValueError:
        raise ValidationError(
            f"sweep grid value {raw_value!r} invalid for {param}") from None
    return replace(cfg, **{param: value})


def cmd_sweep(cfg, stream=sys.stdout):
    if not cfg.sweep_parameter or not cfg.sweep_grid:
        raise ValidationError("sweep requires sweep_parameter and sweep_grid")
    param = cfg.sweep_parameter
    grid = [v.strip() for v in cfg.sweep_grid.split(",") if v.strip()]
    if not grid:
        raise ValidationError("sweep_grid is empty")
    tasks = []
    for raw_value in grid:
        point_cfg = _sweep_value_config(cfg, param, raw_value)
        for seed in range(cfg.seed, cfg.seed + cfg.n_seeds):
            tasks.append((point_cfg, seed, param, raw_value))

    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            outcomes = list(pool.map(_sweep_task, tasks))
    else:
        outcomes = [_sweep_task(t) for t in tasks]

    any_failed = False
    with _open_csv(cfg.out, SWEEP_CSV_HEADER) as f:
        writer = csv.writer(f)
        for (task, (param_name, raw_value, status, result, err)) in zip(
                tasks, outcomes):
            if status == "ok":
                writer.writerow([param_name, raw_value, status] + result.row())
            else:
                any_failed = True
                point_cfg, seed = task[0], task[1]
                writer.writerow([param_name, raw_value, status,
                                 point_cfg.method, seed] + [""] * 10)
                stream.write(f"{param_name}={raw_value} seed {seed} "
                             f"failed: {err}\n")
            f.flush()
    stream.write(f"sweep complete: {len(tasks)} runs, "
                 f"{'some failed' if any_failed else 'all ok'}\n")
    return 2 if any_failed else 0


def cmd_gen_data(cfg, stream=sys.stdout):
    ds = build_dataset(cfg, cfg.seed)
    datagen.save_embeddings(ds, cfg.out)
    stream.write(f"wrote {ds.n} rows (d={ds.d}) to {cfg.out}\n")
    return 0


def cmd_probe(cfg, checkpoint_path, stream=sys.stdout):
    ckpt = load_checkpoint(checkpoint_path)
    model = ckpt.build_model()
    ds = build_dataset(cfg, cfg.seed)
    x_te, _, g_te = ds.subset("test")
    h, logits = model.forward(x_te)
    leak_h, std_h = fairmetrics.leakage_mean_std(
        h, g_te, n_probes=cfg.n_probes, base_seed=cfg.seed,
        probe_epochs=cfg.probe_epochs)
    leak_y, std_y = fairmetrics.leakage_mean_std(
        logits, g_te, n_probes=cfg.n_probes, base_seed=cfg.seed,
        probe_epochs=cfg.probe_epochs)
    stream.write(f"leakage_h: {leak_h:.4f} +- {std_h:.4f}\n")
    stream.write(f"leakage_yhat: {leak_y:.4f} +- {std_y:.4f}\n")
    return 0


# --- entry point --------------------------------------------------------------

def _collect_overrides(extra):
    overrides = {}
    i = 0
    while i < len(extra):
        token = extra[i]
        if not token.startswith("--"):
            raise ValidationError(f"unexpected argument {token!r}")
        if i + 1 >= len(extra):
            raise ValidationError(f"flag {token!r} is missing a value")
        overrides[token[2:].replace("-", "_")] = extra[i + 1]
        i += 2
    return overrides


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="advdebias",
        description="Adversarial-ensemble debiasing experiment harness")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("train", "sweep", "gen-data", "probe"):
        p = sub.add_parser(name)
        p.add_argument("--config", default=None)
        p.add_argument("--out", default=None)
        p.add_argument("--workers", default=None)
        if name == "probe":
            p.add_argument("--checkpoint", required=True)
    args, extra = parser.parse_known_args(argv)

    try:
        overrides = _collect_overrides(extra)
        if args.out is not None:
            overrides["out"] = args.out
        if args.workers is not None:
            overrides["workers"] = args.workers
        cfg = parse_config(args.config, overrides)
        if args.command == "train":
            cmd_train(cfg)
            return 0
        if args.command == "sweep":
            return cmd_sweep(cfg)
        if args.command == "gen-data":
            return cmd_gen_data(cfg)
        return cmd_probe(cfg, args.checkpoint)
    except NumericDivergenceError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (ValidationError, AdvDebiasError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
