"""Experiment engine: the unsupervised loop, the semi-supervised schedule,
metrics, and checkpointing."""

import json
import os
import time
from collections import deque
from dataclasses import dataclass

import numpy as np

from . import data as data_mod
from . import ep as ep_mod
from . import evaluate as eval_mod
from .backprop import backprop
from .config import ConfigError, parse_arch, to_flat, validate_config
from .losses import mse_loss, softmax_cross_entropy
from .network import forward, init_network, save_checkpoint
from .optim import lr_ratio, make_optimizer
from .rng import RngStream, DROPOUT
from .target import (Homeostasis, kwta_target, one_hot, smooth_target,
                     win_freq_cv)


class DivergenceError(RuntimeError):
    """Training produced a non-finite loss."""

    def __init__(self, epoch, batch_index, last_losses):
        self.epoch = epoch
        self.batch_index = batch_index
        self.last_losses = list(last_losses)
        super().__init__(
            f"non-finite loss in epoch {epoch}, batch {batch_index}; "
            f"last losses: {', '.join(f'{v:.6g}' for v in self.last_losses)}")


@dataclass
class RunArtifacts:
    out_dir: str
    checkpoint_path: str
    metrics: list                  # one dict per training epoch
    final_test_accuracy: float
    win_freq: np.ndarray           # per-output-unit winning frequency


def _dtype(cfg):
    return np.float64 if cfg.run.precision == "f64" else np.float32


def build_network(cfg):
    input_shape, specs = parse_arch(cfg.model)
    return init_network(input_shape, specs, cfg.run.seed,
                        input_dropout=cfg.model.input_dropout,
                        prune_fraction=cfg.model.prune_fraction,
                        dtype=_dtype(cfg))


def _idx_path(dirname, stem):
    for name in (stem, stem + ".gz"):
        p = os.path.join(dirname, name)
        if os.path.exists(p):
            return p
    return os.path.join(dirname, stem)    # open() will raise the I/O error


def load_datasets(cfg):
    d = cfg.data
    if d.format == "synthetic":
        shape = tuple(d.synthetic_shape)
        train = data_mod.synthetic_dataset(d.synthetic_train, shape, d.classes,
                                           d.synthetic_noise, d.synthetic_seed,
                                           split=0)
        test = data_mod.synthetic_dataset(d.synthetic_test, shape, d.classes,
                                          d.synthetic_noise, d.synthetic_seed,
                                          split=1)
        return train, test
    if d.format == "idx":
        ti = d.train_images or _idx_path(d.dir, "train-images-idx3-ubyte")
        tl = d.train_labels or _idx_path(d.dir, "train-labels-idx1-ubyte")
        vi = d.test_images or _idx_path(d.dir, "t10k-images-idx3-ubyte")
        vl = d.test_labels or _idx_path(d.dir, "t10k-labels-idx1-ubyte")
        train = data_mod.load_idx(ti, tl)
        test = data_mod.load_idx(vi, vl)
    else:
        train = data_mod.load_container(d.train)
        test = data_mod.load_container(d.test)
    for name, ds in (("train", train), ("test", test)):
        if ds.n_classes > d.classes:
            raise ConfigError(
                f"data.classes: {name} data holds labels up to "
                f"{ds.n_classes - 1}, config declares {d.classes} classes")
        ds.n_classes = d.classes
    return train, test


def _flat_input(net):
    return len(net.input_shape) == 1


def _prep(net, x):
    if _flat_input(net):
        return x.reshape(x.shape[0], -1)
    return x


def check_input_shape(net, ds):
    sample = ds.sample_shape
    if _flat_input(net):
        if int(np.prod(sample)) != net.input_shape[0]:
            raise ConfigError(
                f"model.arch: input width {net.input_shape[0]} does not match "
                f"dataset sample shape {sample}")
    elif tuple(sample) != tuple(net.input_shape):
        raise ConfigError(
            f"model.arch: input shape {net.input_shape} does not match "
            f"dataset sample shape {sample}")


class MetricsWriter:
    HEADER = "epoch,phase,loss,train_acc,test_acc,lr,win_freq_cv"

    def __init__(self, path):
        self.rows = []
        self._f = open(path, "w", newline="\n")
        self._f.write(self.HEADER + "\n")
        self._f.flush()

    @staticmethod
    def _fmt(v):
        if v is None:
            return "nan"
        return repr(float(v))

    def row(self, epoch, phase, loss, train_acc, test_acc, lr, cv):
        self.rows.append({"epoch": epoch, "phase": phase, "loss": loss,
                          "train_acc": train_acc, "test_acc": test_acc,
                          "lr": lr, "win_freq_cv": cv})
        cells = [str(epoch), phase] + [self._fmt(v) for v in
                                       (loss, train_acc, test_acc, lr, cv)]
        self._f.write(",".join(cells) + "\n")
        self._f.flush()

    def close(self):
        self._f.close()


def _association_labels(cfg, train):
    """Balanced subset size for the configured association label fraction."""
    classes = train.n_classes
    n = int(round(cfg.eval.label_fraction * len(train)))
    n -= n % classes
    return max(classes, n)


def _make_embed(cfg, net):
    return eval_mod.make_embed(net, cfg.train.trainer, ep_steps=cfg.ep.t_free)


def _eval_accuracies(cfg, net, train, test, subset=None):
    """(train_acc, test_acc) under the light per-epoch protocol: argmax for
    class-sized outputs, direct association otherwise."""
    embed = _make_embed(cfg, net)
    if cfg.eval.protocol == "argmax":
        sub = subset if subset is not None else train
        train_pred = embed(_prep(net, sub.images)).argmax(axis=1)
        test_pred = embed(_prep(net, test.images)).argmax(axis=1)
        return (eval_mod.accuracy(train_pred, sub.labels),
                eval_mod.accuracy(test_pred, test.labels))
    sub = subset
    if sub is None:
        sub = data_mod.balanced_subset(train, _association_labels(cfg, train),
                                       cfg.run.seed)
    sub_out = embed(_prep(net, sub.images))
    cmap = eval_mod.direct_associate(sub_out, sub.labels, train.n_classes)
    train_pred = eval_mod.predict_by_association(sub_out, cmap.class_of,
                                                 train.n_classes)
    test_pred = eval_mod.predict_by_association(embed(_prep(net, test.images)),
                                                cmap.class_of, train.n_classes)
    return (eval_mod.accuracy(train_pred, sub.labels),
            eval_mod.accuracy(test_pred, test.labels))


def final_evaluation(cfg, net, train, test, subset=None):
    """The configured evaluation protocol; returns a result dict."""
    embed = _make_embed(cfg, net)
    protocol = cfg.eval.protocol
    if protocol == "argmax":
        pred = embed(_prep(net, test.images)).argmax(axis=1)
        return {"protocol": protocol,
                "test_accuracy": eval_mod.accuracy(pred, test.labels)}
    sub = subset
    if sub is None:
        sub = data_mod.balanced_subset(train, _association_labels(cfg, train),
                                       cfg.run.seed)
    if protocol == "direct":
        cmap = eval_mod.direct_associate(embed(_prep(net, sub.images)),
                                         sub.labels, train.n_classes)
        pred = eval_mod.predict_by_association(embed(_prep(net, test.images)),
                                               cmap.class_of, train.n_classes)
        return {"protocol": protocol, "labels": len(sub),
                "test_accuracy": eval_mod.accuracy(pred, test.labels)}
    epochs = cfg.eval.readout_epochs or (100 if cfg.train.trainer == "ep" else 50)
    lr = cfg.eval.readout_lr or eval_mod.readout_lr(cfg.train.trainer,
                                                    cfg.eval.label_fraction)
    if cfg.train.trainer == "ep":
        sched = dict(schedule="linear", sched_start=1.0, sched_end=0.5)
    else:
        sched = dict(schedule="exponential", sched_decay=0.9)
    w, b = eval_mod.train_readout(embed(_prep(net, sub.images)), sub.labels,
                                  train.n_classes, epochs, lr, seed=cfg.run.seed,
                                  batch_size=cfg.eval.readout_batch, **sched)
    pred = eval_mod.predict_readout(embed(_prep(net, test.images)), w, b)
    return {"protocol": protocol, "labels": len(sub), "readout_lr": lr,
            "readout_epochs": epochs,
            "test_accuracy": eval_mod.accuracy(pred, test.labels)}


class Trainer:
    """One weight update per batch; owns optimizer and dropout randomness."""

    def __init__(self, cfg, net):
        self.cfg = cfg
        self.net = net
        self.opt = make_optimizer(cfg.train.optimizer)
        self.drop_rng = RngStream(cfg.run.seed, DROPOUT)
        self.param_idx = net.param_layers()
        if cfg.train.lr_per_layer:
            self.base_lrs = [float(v) for v in cfg.train.lr_per_layer]
        else:
            self.base_lrs = [cfg.train.lr] * len(self.param_idx)

    def _step(self, dws, dbs, ratio):
        net = self.net
        params = [(net.weights[i], net.biases[i]) for i in self.param_idx]
        grads = [(dws[i], dbs[i]) for i in self.param_idx]
        masks = [net.masks[i] for i in self.param_idx]
        lrs = [b * ratio for b in self.base_lrs]
        self.opt.step(params, grads, lrs, masks=masks)

    def _out_mask(self, shape, p):
        keep = self.drop_rng.uniform(shape, dtype=np.float32) >= p
        return keep.astype(self.net.dtype)

    def train_batch_bp(self, x, target_fn, ratio):
        """forward -> target -> loss -> gradient -> step; returns (loss, d)."""
        cache = forward(self.net, x, train=True, rng=self.drop_rng)
        d, d_loss = target_fn(cache.output)
        if self.cfg.train.loss == "mse":
            loss, dy = mse_loss(cache.output, d_loss)
            grads = backprop(self.net, cache, grad_output=dy)
        else:
            loss, dz = softmax_cross_entropy(cache.pre[-1], d_loss)
            grads = backprop(self.net, cache, grad_logits=dz)
        self._step(grads.weights, grads.biases, ratio)
        return loss, d

    def train_batch_ep(self, x, target_fn, ratio):
        """free relax -> target -> nudged relax -> contrast update."""
        cfg = self.cfg
        net = self.net
        if net.input_dropout > 0:
            mask = self._out_mask(x.shape, net.input_dropout)
            x = x * mask / net.dtype.type(1 - net.input_dropout)
        out_p = net.specs[-1].dropout
        out_mask = self._out_mask((x.shape[0], net.output_size), out_p) \
            if out_p > 0 else None
        free = ep_mod.relax_free(net, x, cfg.ep.t_free, out_mask=out_mask)
        y = free.layers[-1]
        d, d_loss = target_fn(y)
        loss, _ = mse_loss(y, d_loss)
        pos = ep_mod.relax_nudged(net, x, d_loss, cfg.ep.beta, cfg.ep.k_nudge,
                                  free, out_mask=out_mask)
        if cfg.ep.symmetric:
            neg = ep_mod.relax_nudged(net, x, d_loss, -cfg.ep.beta,
                                      cfg.ep.k_nudge, free, out_mask=out_mask)
            dws, dbs = ep_mod.ep_update(net, x, pos, neg, cfg.ep.beta,
                                        symmetric=True)
        else:
            dws, dbs = ep_mod.ep_update(net, x, pos, free, cfg.ep.beta)
        self._step(dws, dbs, ratio)
        return loss, d

    def train_batch(self, x, target_fn, ratio):
        if self.cfg.train.trainer == "ep":
            return self.train_batch_ep(x, target_fn, ratio)
        return self.train_batch_bp(x, target_fn, ratio)


def _self_target_fn(cfg, homeo):
    k, alpha = cfg.target.k, cfg.target.smoothing

    def fn(y):
        d = kwta_target(y, homeo.thresholds.astype(y.dtype), k)
        return d, (smooth_target(d, alpha, k) if alpha > 0 else d)
    return fn


def _label_target_fn(labels_batch, n_classes, dtype):
    t = one_hot(labels_batch, n_classes, dtype=dtype)
    return lambda y: (t, t)


def _train_epoch(cfg, trainer, ds, plan, epoch, ratio, homeo=None, trace=None,
                 labeled=False, loss_tail=None, h_version=None):
    """One pass over ds; returns (mean loss, win counts or None, samples)."""
    net = trainer.net
    wins = None if labeled else np.zeros(net.output_size, dtype=np.float64)
    total_loss = 0.0
    n_batches = 0
    if h_version is None:
        h_version = [0]
    for b, (x, labels) in enumerate(data_mod.batches(ds, plan, epoch=epoch)):
        x = _prep(net, x)
        if labeled:
            target_fn = _label_target_fn(labels, ds.n_classes, net.dtype)
        else:
            target_fn = _self_target_fn(cfg, homeo)
        if trace is not None:
            base_fn = target_fn

            def target_fn(y, _fn=base_fn):
                trace("target", epoch=epoch, batch=b, h_version=h_version[0])
                return _fn(y)
        loss, d = trainer.train_batch(x, target_fn, ratio)
        if trace is not None:
            trace("step", epoch=epoch, batch=b)
        if loss_tail is not None:
            loss_tail.append(loss)
        if not np.isfinite(loss):
            raise DivergenceError(epoch, b, loss_tail or [loss])
        if not labeled and homeo is not None and cfg.target.homeostasis:
            homeo.update(d)
            h_version[0] += 1
            if trace is not None:
                trace("homeo", epoch=epoch, batch=b, h_version=h_version[0])
        if wins is not None:
            wins += d.sum(axis=0, dtype=np.float64)
        total_loss += loss
        n_batches += 1
    mean_loss = total_loss / max(n_batches, 1)
    return mean_loss, wins


def _write_artifacts(cfg, out_dir, net, trainer, metrics, final, win_freq,
                     started):
    ckpt = os.path.join(out_dir, "checkpoint.stck")
    save_checkpoint(ckpt, net,
                    rng_states={"dropout_draws": trainer.drop_rng.draws},
                    meta={"config": to_flat(cfg), "final": final})
    if win_freq is not None:
        with open(os.path.join(out_dir, "winfreq.csv"), "w", newline="\n") as f:
            f.write("unit,win_freq\n")
            for i, v in enumerate(win_freq):
                f.write(f"{i},{repr(float(v))}\n")
    summary = {"config": to_flat(cfg), "final": final,
               "epochs_run": len(metrics),
               "runtime_sec": round(time.time() - started, 3)}
    with open(os.path.join(out_dir, "summary.json"), "w") as f:
        json.dump(summary, f, indent=2, sort_keys=True)
    return ckpt


def _validate_or_raise(cfg):
    errors = validate_config(cfg)
    if errors:
        raise ConfigError("; ".join(errors))


def run_unsupervised(cfg, out_dir, trace=None):
    """Self-defined-target training: per batch, forward in train mode, pick
    the k-winner target from thresholded outputs, smooth it if configured,
    descend the loss, then update the homeostasis thresholds."""
    _validate_or_raise(cfg)
    if cfg.run.kind != "unsupervised":
        raise ConfigError("run.kind: run_unsupervised needs kind=unsupervised")
    os.makedirs(out_dir, exist_ok=True)
    started = time.time()
    train, test = load_datasets(cfg)
    net = build_network(cfg)
    check_input_shape(net, train)
    trainer = Trainer(cfg, net)
    homeo = Homeostasis(net.output_size, cfg.target.k, cfg.homeo.gamma,
                        mode="sequential" if cfg.homeo.mode == "sequential" else "batch",
                        eta=cfg.homeo.eta)
    plan = data_mod.BatchPlan(cfg.train.batch_size, seed=cfg.run.seed,
                              drop_last=cfg.train.drop_last)
    writer = MetricsWriter(os.path.join(out_dir, "metrics.csv"))
    loss_tail = deque(maxlen=10)
    h_version = [0]
    win_freq = np.zeros(net.output_size, dtype=np.float64)
    try:
        for epoch in range(cfg.run.epochs):
            if cfg.homeo.reset_each_epoch:
                homeo.reset()
            ratio = lr_ratio(cfg.train.scheduler, epoch, cfg.run.epochs,
                             decay=cfg.train.sched_decay,
                             start=cfg.train.sched_start,
                             end=cfg.train.sched_end)
            loss, wins = _train_epoch(cfg, trainer, train, plan, epoch, ratio,
                                      homeo=homeo, trace=trace,
                                      loss_tail=loss_tail, h_version=h_version)
            win_freq = wins / len(train)
            cv = win_freq_cv(win_freq)
            do_eval = cfg.run.eval_every and (epoch % cfg.run.eval_every == 0
                                              or epoch == cfg.run.epochs - 1)
            train_acc = test_acc = None
            if do_eval:
                train_acc, test_acc = _eval_accuracies(cfg, net, train, test)
            writer.row(epoch, "unsup", loss, train_acc, test_acc,
                       cfg.train.lr * ratio, cv)
            if cfg.run.checkpoint_every and (epoch + 1) % cfg.run.checkpoint_every == 0:
                save_checkpoint(os.path.join(out_dir, f"checkpoint_ep{epoch}.stck"),
                                net, meta={"config": to_flat(cfg), "epoch": epoch})
        final = final_evaluation(cfg, net, train, test)
        ckpt = _write_artifacts(cfg, out_dir, net, trainer, writer.rows, final,
                                win_freq, started)
    finally:
        writer.close()
    return RunArtifacts(out_dir, ckpt, writer.rows,
                        final["test_accuracy"], win_freq)


def run_semisupervised(cfg, out_dir, trace=None):
    """Supervised pre-training on a balanced labeled subset, then alternating
    unsupervised (all data) and supervised (subset) epochs."""
    _validate_or_raise(cfg)
    if cfg.run.kind != "semisupervised":
        raise ConfigError("run.kind: run_semisupervised needs kind=semisupervised")
    os.makedirs(out_dir, exist_ok=True)
    started = time.time()
    train, test = load_datasets(cfg)
    net = build_network(cfg)
    check_input_shape(net, train)
    subset = data_mod.balanced_subset(train, cfg.train.labels, cfg.run.seed)
    trainer = Trainer(cfg, net)
    homeo = Homeostasis(net.output_size, cfg.target.k, cfg.homeo.gamma,
                        mode="batch", eta=cfg.homeo.eta)
    sup_plan = data_mod.BatchPlan(cfg.train.batch_size_supervised,
                                  seed=cfg.run.seed)
    unsup_plan = data_mod.BatchPlan(cfg.train.batch_size_unsupervised,
                                    seed=cfg.run.seed + 1)
    writer = MetricsWriter(os.path.join(out_dir, "metrics.csv"))
    loss_tail = deque(maxlen=10)
    h_version = [0]
    win_freq = np.zeros(net.output_size, dtype=np.float64)
    epoch = 0

    def maybe_eval(force=False):
        if force or (cfg.run.eval_every and epoch % cfg.run.eval_every == 0):
            return _eval_accuracies(cfg, net, train, test, subset=subset)
        return None, None

    try:
        n1, n2 = cfg.run.epochs_pretrain, cfg.run.epochs_alternate
        for i in range(n1):
            ratio = cfg.train.pretrain_decay ** i
            lr = cfg.train.lr_pretrain * ratio
            trainer.base_lrs = [lr] * len(trainer.param_idx)
            loss, _ = _train_epoch(cfg, trainer, subset, sup_plan, epoch, 1.0,
                                   trace=trace, labeled=True,
                                   loss_tail=loss_tail)
            train_acc, test_acc = maybe_eval(force=(i == n1 - 1))
            writer.row(epoch, "pretrain", loss, train_acc, test_acc, lr, None)
            epoch += 1
        for i in range(n2):
            # unsupervised epoch over every training image
            if cfg.homeo.reset_each_epoch:
                homeo.reset()
            ratio = lr_ratio("linear", i, n2, start=cfg.train.unsup_start,
                             end=cfg.train.unsup_end)
            lr = cfg.train.lr_semi * ratio
            trainer.base_lrs = [lr] * len(trainer.param_idx)
            loss, wins = _train_epoch(cfg, trainer, train, unsup_plan, epoch,
                                      1.0, homeo=homeo, trace=trace,
                                      loss_tail=loss_tail, h_version=h_version)
            win_freq = wins / len(train)
            train_acc, test_acc = maybe_eval()
            writer.row(epoch, "unsup", loss, train_acc, test_acc, lr,
                       win_freq_cv(win_freq))
            epoch += 1
            # supervised epoch over the labeled subset
            ratio = lr_ratio("linear", i, n2, start=cfg.train.sup_start,
                             end=cfg.train.sup_end)
            lr = cfg.train.lr_semi * ratio
            trainer.base_lrs = [lr] * len(trainer.param_idx)
            loss, _ = _train_epoch(cfg, trainer, subset, sup_plan, epoch, 1.0,
                                   trace=trace, labeled=True,
                                   loss_tail=loss_tail)
            train_acc, test_acc = maybe_eval(force=(i == n2 - 1))
            writer.row(epoch, "sup", loss, train_acc, test_acc, lr, None)
            epoch += 1
        final = final_evaluation(cfg, net, train, test, subset=subset)
        ckpt = _write_artifacts(cfg, out_dir, net, trainer, writer.rows, final,
                                win_freq, started)
    finally:
        writer.close()
    return RunArtifacts(out_dir, ckpt, writer.rows,
                        final["test_accuracy"], win_freq)


def run_config(cfg, out_dir, trace=None):
    if cfg.run.kind == "semisupervised":
        return run_semisupervised(cfg, out_dir, trace=trace)
    return run_unsupervised(cfg, out_dir, trace=trace)
