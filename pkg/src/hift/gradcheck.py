"""Finite-difference verification of the full pipeline's analytic gradients."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .backbone import BackboneConfig
from .config import RunConfig
from .heads import BBox, LabelConfig, loss, make_labels, stack_labels
from .model import HiFT, ModelConfig

ABS_FLOOR = 1e-6  # denominators below this are treated as this, so roundoff on ~0 entries cannot fail


def rel_err(a, n, floor=ABS_FLOOR):
    return float(abs(a - n) / max(abs(a), abs(n), floor))


@dataclass
class ParamReport:
    name: str
    max_rel_err: float
    checks: int
    tolerance: float

    @property
    def ok(self):
        return self.max_rel_err <= self.tolerance

    def line(self):
        status = "PASS" if self.ok else "FAIL"
        return f"{status} {self.name} max_rel_err={self.max_rel_err:.3e} checks={self.checks}"


def tiny_model(cfg: RunConfig, seed) -> HiFT:
    g = cfg.gradcheck
    bb = BackboneConfig(channels=g.level_channels, stem_channels=g.stem_channels,
                        template_size=g.template_size, search_size=g.search_size)
    model = HiFT(ModelConfig(bb, channels=g.channels, heads=g.heads, ffn_mult=cfg.transformer.ffn_mult,
                             decoder_layers=cfg.transformer.decoder_layers,
                             variant=cfg.transformer.variant, decoder_pe=cfg.transformer.decoder_pe),
                 seed=seed)
    # a nonzero modulation gain so the modulation branch receives gradient
    if model.transformer is not None and model.transformer.encoder.modulation is not None:
        model.transformer.encoder.modulation.gamma1.data[...] = 0.5
    return model


def tiny_problem(model: HiFT, cfg: RunConfig, seed, batch):
    """Random images plus labels for boxes near the middle of the search crop."""
    rng = np.random.default_rng(seed)
    bb = model.config.backbone
    z = rng.uniform(-0.5, 0.5, (batch, 3, bb.template_size, bb.template_size))
    x = rng.uniform(-0.5, 0.5, (batch, 3, bb.search_size, bb.search_size))
    mid = bb.search_size / 2
    labels = []
    for i in range(batch):
        gt = BBox(mid + rng.uniform(-4, 4), mid + rng.uniform(-4, 4),
                  rng.uniform(14, 26), rng.uniform(14, 26))
        labels.append(make_labels(gt, model.geometry, LabelConfig(), seed=seed + i))
    return z, x, stack_labels(labels)


KINK_STEPS = (1.0, 0.1, 0.01)  # step multipliers tried before a perturbation is redrawn
MAX_REDRAWS = 4
ROUNDOFF = 64 * np.finfo(np.float64).eps


def _probe(value, set_offset, step, tolerance):
    """Central difference along one perturbation, or None if every step straddles a kink.

    Smooth losses give central differences at h and h/2 that agree to O(h^2);
    a kink (ReLU, min) within [-h, h] breaks that agreement. The test looks at
    the loss alone, so it cannot hide a wrong analytic gradient.
    """
    def central(h):
        set_offset(h)
        up = value()
        set_offset(-h)
        down = value()
        set_offset(0.0)
        return (up - down) / (2 * h)

    scale = abs(value()) + 1.0
    for mult in KINK_STEPS:
        h = step * mult
        coarse, fine = central(h), central(h / 2)
        noise = ROUNDOFF * scale / h  # cancellation error of a difference quotient
        if abs(coarse - fine) <= tolerance / 10 * max(abs(coarse), abs(fine)) + noise:
            return fine
    return None


def check_model(model: HiFT, z, x, labels, weights=None, step=1e-5, tolerance=1e-4,
                entries=3, seed=0, corrupt=None):
    """Compare backprop against central differences for every parameter.

    Each parameter gets ``entries`` randomly chosen coordinates plus one random
    direction over the whole tensor. Perturbations that straddle a kink are
    retried with a smaller step and then redrawn. ``corrupt(name, grad)`` may
    rewrite the analytic gradient (fault injection for tests).
    """
    rng = np.random.default_rng(seed)

    def value():
        return float(loss(model.forward_pair(z, x), labels, weights).item())

    model.zero_grad()
    T.backward(loss(model.forward_pair(z, x), labels, weights))
    reports = []
    for name, p in model.named_parameters():
        grad = p.grad.copy()
        if corrupt is not None:
            grad = corrupt(name, grad)
        base = p.data.copy()
        errs = []

        def measure(direction):
            def set_offset(h):
                p.data = base + h * direction
            return _probe(value, set_offset, step, tolerance)

        n_coord = min(entries, p.data.size)
        for kind in ["coord"] * n_coord + ["dir"]:
            for _ in range(MAX_REDRAWS):
                if kind == "coord":
                    d = np.zeros(p.shape)
                    d.reshape(-1)[rng.integers(p.data.size)] = 1.0
                else:
                    d = rng.standard_normal(p.shape)
                num = measure(d)
                if num is not None:
                    errs.append(rel_err(float((grad * d).sum()), num))
                    break
        p.data = base
        reports.append(ParamReport(name, max(errs) if errs else float("inf"), len(errs), tolerance))
    return reports


def run(cfg: RunConfig, corrupt=None):
    """Gradient check over ``cfg.gradcheck.seeds``; returns per-parameter reports."""
    g = cfg.gradcheck
    worst: dict[str, ParamReport] = {}
    with T.default_dtype(np.float64):
        for seed in g.seeds:
            model = tiny_model(cfg, seed)
            z, x, labels = tiny_problem(model, cfg, seed, g.batch_size)
            for rep in check_model(model, z, x, labels, cfg.loss_weights(), g.step, g.tolerance,
                                   g.entries_per_param, seed, corrupt):
                prev = worst.get(rep.name)
                if prev is None:
                    worst[rep.name] = rep
                else:
                    worst[rep.name] = ParamReport(rep.name, max(prev.max_rel_err, rep.max_rel_err),
                                                  prev.checks + rep.checks, g.tolerance)
    return list(worst.values())
