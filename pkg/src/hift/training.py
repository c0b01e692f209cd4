"""Desk-scale training on synthetic image pairs with momentum SGD."""
from __future__ import annotations

import csv
import logging
import os
from dataclasses import dataclass

import numpy as np

from . import checkpoint
from . import tensor as T
from .config import RunConfig
from .errors import DegenerateLabelError, NumericalError
from .heads import BBox, loss_terms, make_labels, stack_labels, combine
from .imaging import context_size, crop_resize, to_input
from .model import HiFT
from .synth import gen_sequence, random_config

log = logging.getLogger(__name__)


def synthetic_sequences(cfg: RunConfig, count=None, seed=None, easy=False, prefix="train"):
    s = cfg.synth
    count = s.train_sequences if count is None else count
    rng = np.random.default_rng(s.seed if seed is None else seed)
    seqs = []
    for i in range(count):
        sc = random_config(rng, canvas=s.canvas, frames=s.frames, easy=easy,
                           min_size=s.min_size, max_size=s.max_size, max_speed=s.max_speed,
                           jitter=s.jitter, scale_drift=s.scale_drift, occlusion=s.occlusion)
        seqs.append(gen_sequence(sc, name=f"{prefix}{i:03d}"))
    return seqs


def eval_sequences(cfg: RunConfig):
    """Held-out easy sequences (no drift, jitter or occlusion)."""
    return synthetic_sequences(cfg, cfg.synth.eval_sequences, cfg.synth.eval_seed, easy=True, prefix="eval")


def sample_pair(rng, seqs, cfg: RunConfig):
    """One (template, search, gt-in-search-crop) training triple."""
    bb, tr = cfg.backbone, cfg.train
    seq = seqs[rng.integers(len(seqs))]
    n = len(seq.boxes)
    ti = int(rng.integers(n))
    si = int(np.clip(ti + rng.integers(-tr.max_gap, tr.max_gap + 1), 0, n - 1))
    zb, xb = seq.boxes[ti], seq.boxes[si]

    s_z = context_size(zb.w, zb.h, cfg.tracker.context)
    z = to_input(crop_resize(seq.frames[ti], zb.cx, zb.cy, s_z, bb.template_size))

    s_x = s_z * bb.search_size / bb.template_size * np.exp(rng.uniform(-tr.scale_jitter, tr.scale_jitter))
    scale = bb.search_size / s_x
    dx, dy = rng.uniform(-tr.shift, tr.shift, size=2)
    cx, cy = xb.cx - dx / scale, xb.cy - dy / scale
    x = to_input(crop_resize(seq.frames[si], cx, cy, s_x, bb.search_size))
    gt = BBox(bb.search_size / 2 + (xb.cx - cx) * scale, bb.search_size / 2 + (xb.cy - cy) * scale,
              xb.w * scale, xb.h * scale)
    return z, x, gt


def sample_batch(rng, seqs, cfg: RunConfig, geometry):
    zs, xs, labels = [], [], []
    label_cfg = cfg.label_config()
    while len(zs) < cfg.train.batch_size:
        z, x, gt = sample_pair(rng, seqs, cfg)
        try:
            lab = make_labels(gt, geometry, label_cfg, seed=int(rng.integers(2**31)))
        except DegenerateLabelError:
            log.debug("skipping degenerate sample %s", gt)
            continue
        zs.append(z)
        xs.append(x)
        labels.append(lab)
    return np.stack(zs), np.stack(xs), stack_labels(labels)


class SGD:
    """Momentum SGD with L2 weight decay and optional global-norm clipping."""

    def __init__(self, params, lr, momentum=0.9, weight_decay=0.0, clip_norm=None):
        self.params = [p for p in params if p.trainable]
        self.lr = lr
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.clip_norm = clip_norm
        self.velocity = [np.zeros_like(p.data) for p in self.params]

    def grad_norm(self):
        return float(np.sqrt(sum(float((p.grad.astype(np.float64) ** 2).sum()) for p in self.params)))

    def step(self):
        factor = 1.0
        if self.clip_norm:
            norm = self.grad_norm()
            if norm > self.clip_norm:
                factor = self.clip_norm / norm
        for p, v in zip(self.params, self.velocity):
            g = p.grad * factor + self.weight_decay * p.data
            v *= self.momentum
            v += g
            p.data = p.data - self.lr * v

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()


def lr_at(step, steps, lr, lr_end):
    """Log-space decay from ``lr`` to ``lr_end`` over the run (linear if either is 0)."""
    if steps <= 1:
        return lr
    if lr <= 0 or lr_end <= 0:
        return float(lr + (lr_end - lr) * step / (steps - 1))
    return float(lr * (lr_end / lr) ** (step / (steps - 1)))


@dataclass
class TrainResult:
    model: HiFT
    losses: list  # rows of (step, loss, cls1, cls2, loc, lr)


def dtype_for(cfg: RunConfig):
    return np.float32 if cfg.train.precision == 32 else np.float64


def build_model(cfg: RunConfig) -> HiFT:
    with T.default_dtype(dtype_for(cfg)):
        return HiFT(cfg.model_config(), seed=cfg.train.seed).cast(dtype_for(cfg))


def train(cfg: RunConfig, out_dir=None, seqs=None) -> TrainResult:
    """Train a model; with ``out_dir`` set, write checkpoint, loss log and config echo."""
    tr = cfg.train
    dtype = dtype_for(cfg)
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "config.echo"), "w", encoding="utf-8") as f:
            f.write(cfg.to_ini())
    seqs = synthetic_sequences(cfg) if seqs is None else seqs
    rng = np.random.default_rng(tr.seed)
    model = build_model(cfg)
    opt = SGD(model.parameters(), tr.lr, tr.momentum, tr.weight_decay, tr.clip_norm)
    weights = cfg.loss_weights()
    rows = []
    with T.default_dtype(dtype):
        for step in range(tr.steps):
            z, x, labels = sample_batch(rng, seqs, cfg, model.geometry)
            preds = model.forward_pair(z, x)
            terms = loss_terms(preds, labels)
            loss = combine(terms, weights)
            value = float(loss.item())
            if not np.isfinite(value):
                if out_dir:
                    np.savez(os.path.join(out_dir, "nan_batch.npz"), template=z, search=x, step=step,
                             **{k: v for k, v in labels.items()})
                raise NumericalError(f"non-finite loss {value} at step {step}")
            opt.zero_grad()
            T.backward(loss)
            opt.lr = lr_at(step, tr.steps, tr.lr, tr.lr_end)
            opt.step()
            rows.append((step, value, terms["cls1"].item(), terms["cls2"].item(),
                         terms["loc"].item(), opt.lr))
            if step % 100 == 0:
                log.info("step %d loss %.4f", step, value)
    if out_dir:
        checkpoint.save(os.path.join(out_dir, "checkpoint.hift"), model.state_dict())
        write_loss_log(os.path.join(out_dir, "loss.csv"), rows)
    return TrainResult(model, rows)


def write_loss_log(path, rows):
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["step", "loss", "cls1", "cls2", "loc", "lr"])
        for row in rows:
            w.writerow([row[0]] + [repr(float(v)) for v in row[1:]])


def load_model(cfg: RunConfig, path) -> HiFT:
    model = build_model(cfg)
    model.load_state_dict(checkpoint.load(path))
    return model
