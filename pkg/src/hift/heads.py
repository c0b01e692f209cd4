"""Classification/regression heads, training labels and the composite loss."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ConfigError, ContractError, DegenerateLabelError, ShapeError
from .nn import Linear, Module

log = logging.getLogger(__name__)

POSITIVE, NEGATIVE, IGNORE = 1, 0, -1


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box in pixels, center form."""

    cx: float
    cy: float
    w: float
    h: float

    def __post_init__(self):
        if not (self.w > 0 and self.h > 0):
            raise ContractError(f"box must have positive size, got w={self.w} h={self.h}")

    @classmethod
    def from_xywh(cls, x, y, w, h):
        """From top-left corner plus size (the ``groundtruth.txt`` form)."""
        return cls(x + w / 2, y + h / 2, w, h)

    @classmethod
    def from_xyxy(cls, x0, y0, x1, y1):
        return cls((x0 + x1) / 2, (y0 + y1) / 2, x1 - x0, y1 - y0)

    def xyxy(self):
        return (self.cx - self.w / 2, self.cy - self.h / 2,
                self.cx + self.w / 2, self.cy + self.h / 2)

    def xywh(self):
        return (self.cx - self.w / 2, self.cy - self.h / 2, self.w, self.h)


def iou(a: BBox, b: BBox) -> float:
    ax0, ay0, ax1, ay1 = a.xyxy()
    bx0, by0, bx1, by1 = b.xyxy()
    iw = max(0.0, min(ax1, bx1) - max(ax0, bx0))
    ih = max(0.0, min(ay1, by1) - max(ay0, by0))
    inter = iw * ih
    union = a.w * a.h + b.w * b.h - inter
    return min(1.0, inter / union)


@dataclass(frozen=True)
class MapGeometry:
    """Where each similarity-map location sits in search-image pixels."""

    width: int
    height: int
    stride: float
    offset: float

    @classmethod
    def centered(cls, size, stride, search_size):
        """Square map whose middle coincides with the middle of the search crop."""
        return cls(size, size, stride, search_size / 2 - size * stride / 2)

    @property
    def locations(self):
        return self.width * self.height

    def centers(self):
        """(L, 2) array of location centers (x, y), row r at (r // W, r % W)."""
        r = np.arange(self.locations)
        xs = ((r % self.width) + 0.5) * self.stride + self.offset
        ys = ((r // self.width) + 0.5) * self.stride + self.offset
        return np.stack([xs, ys], axis=1)


@dataclass
class LabelConfig:
    mode: str = "circular"
    r_pos_strides: float = 2.0
    r_ign_strides: float = 4.0
    neg_cap_ratio: float = 3.0
    neg_cap_floor: int = 16

    def __post_init__(self):
        if self.mode not in ("circular", "rectangle"):
            raise ConfigError(f"label mode must be circular or rectangle, got {self.mode!r}")
        if not 0 <= self.r_pos_strides <= self.r_ign_strides:
            raise ConfigError("need 0 <= r_pos_strides <= r_ign_strides")
        if self.neg_cap_ratio < 0 or self.neg_cap_floor < 0:
            raise ConfigError("negative caps must be non-negative")


@dataclass
class LabelMaps:
    cls1: np.ndarray  # (L,) 1 inside the box, 0 outside
    cls2: np.ndarray  # (L,) POSITIVE / IGNORE / NEGATIVE (candidate)
    reg: np.ndarray  # (L, 4) l, t, r, b distances in pixels
    neg_keep: np.ndarray  # (L,) bool, negatives retained after subsampling
    seed: int


def make_labels(gt: BBox, geom: MapGeometry, config: LabelConfig | None = None, seed=0) -> LabelMaps:
    """Labels for one search crop; ``gt`` is in search-crop pixels.

    Branch 1 marks locations whose center falls inside the box. Branch 2
    (circular mode) marks a disc of radius ``r_pos`` around the box center as
    positive, a ring out to ``r_ign`` as ignored and the rest as negative
    candidates; in rectangle mode it copies branch 1. Negatives are drawn only
    from candidates outside the box and capped at
    ``max(neg_cap_floor, neg_cap_ratio * positives)``.
    """
    config = config or LabelConfig()
    c = geom.centers()
    x0, y0, x1, y1 = gt.xyxy()
    xs, ys = c[:, 0], c[:, 1]
    inside = (xs >= x0) & (xs <= x1) & (ys >= y0) & (ys <= y1)
    cls1 = inside.astype(np.int64)

    if config.mode == "rectangle":
        cls2 = np.where(inside, POSITIVE, NEGATIVE)
    else:
        d = np.hypot(xs - gt.cx, ys - gt.cy)
        r_pos = config.r_pos_strides * geom.stride
        r_ign = config.r_ign_strides * geom.stride
        cls2 = np.full(geom.locations, NEGATIVE)
        cls2[d <= r_ign] = IGNORE
        cls2[(d <= r_pos) & inside] = POSITIVE

    n_pos = int((cls2 == POSITIVE).sum())
    if n_pos == 0:
        raise DegenerateLabelError(f"no positive location for {gt}")

    pool = np.flatnonzero((cls2 == NEGATIVE) & ~inside)
    cap = int(max(config.neg_cap_floor, math.floor(config.neg_cap_ratio * n_pos)))
    keep = np.zeros(geom.locations, dtype=bool)
    if len(pool) > cap:
        pool = np.random.default_rng(seed).choice(pool, size=cap, replace=False)
    keep[pool] = True

    reg = np.stack([xs - x0, ys - y0, x1 - xs, y1 - ys], axis=1)
    return LabelMaps(cls1, cls2.astype(np.int64), reg, keep, seed)


def stack_labels(labels: list[LabelMaps]) -> dict[str, np.ndarray]:
    return {
        "cls1": np.stack([lab.cls1 for lab in labels]),
        "cls2": np.stack([lab.cls2 for lab in labels]),
        "reg": np.stack([lab.reg for lab in labels]),
        "neg_keep": np.stack([lab.neg_keep for lab in labels]),
    }


class Heads(Module):
    """Three two-layer 1x1-conv branches over the (L, C) feature."""

    def __init__(self, dim, rng, reg_bias=0.0):
        self.cls1 = [Linear(dim, dim, rng, scale=np.sqrt(2.0 / dim)), Linear(dim, 2, rng)]
        self.cls2 = [Linear(dim, dim, rng, scale=np.sqrt(2.0 / dim)), Linear(dim, 1, rng)]
        self.reg = [Linear(dim, dim, rng, scale=np.sqrt(2.0 / dim)), Linear(dim, 4, rng)]
        self.reg[1].bias.data[:] = reg_bias

    @staticmethod
    def _branch(layers, x):
        return layers[1](T.relu(layers[0](x)))

    def __call__(self, feature):
        if feature.shape[-1] != self.cls1[0].weight.shape[0]:
            raise ShapeError(f"feature width {feature.shape[-1]} != {self.cls1[0].weight.shape[0]}")
        return {
            "cls1": self._branch(self.cls1, feature),
            "cls2": self._branch(self.cls2, feature),
            "reg": T.exp(self._branch(self.reg, feature)),
        }


@dataclass
class LossWeights:
    lambda1: float = 1.0
    lambda2: float = 1.0
    lambda3: float = 1.0

    def __post_init__(self):
        for v in (self.lambda1, self.lambda2, self.lambda3):
            if not (math.isfinite(v) and v >= 0):
                raise ConfigError(f"loss weights must be finite and >= 0, got {v}")


def _masked_mean(values, count, name):
    if count == 0:
        log.warning("loss term %s has no contributing locations", name)
        return T.Tensor(0.0)
    return values.sum() * (1.0 / count)


def iou_ltrb(pred, target):
    """IoU of boxes sharing an anchor point, both given as (l, t, r, b) rows."""
    target = np.asarray(target)
    pl, pt, pr, pb = (pred[..., i] for i in range(4))
    tl, tt, tr, tb = (target[..., i] for i in range(4))
    iw = T.minimum(pl, tl) + T.minimum(pr, tr)
    ih = T.minimum(pt, tt) + T.minimum(pb, tb)
    inter = iw * ih
    area_p = (pl + pr) * (pt + pb)
    area_t = (tl + tr) * (tt + tb)
    return inter / (area_p + area_t - inter)


def loss_terms(preds, labels) -> dict[str, T.Tensor]:
    """The three averaged loss terms for a batch.

    ``labels`` is a dict from :func:`stack_labels` (or a single
    :class:`LabelMaps`), aligned with the leading axes of ``preds``.
    """
    if isinstance(labels, LabelMaps):
        labels = stack_labels([labels])
        preds = {k: v.reshape((1,) + v.shape[-2:]) for k, v in preds.items()}
    cls1, cls2 = labels["cls1"], labels["cls2"]
    keep = labels["neg_keep"]
    if preds["cls1"].shape[:-1] != cls1.shape:
        raise ShapeError(f"predictions {preds['cls1'].shape} vs labels {cls1.shape}")

    m1 = (cls1 == 1) | keep
    ce = T.cross_entropy(preds["cls1"][m1], cls1[m1])
    l1 = _masked_mean(ce, int(m1.sum()), "cls1")

    pos = cls2 == POSITIVE
    m2 = pos | keep
    bce = T.bce_with_logits(preds["cls2"][m2][:, 0], pos[m2])
    l2 = _masked_mean(bce, int(m2.sum()), "cls2")

    ious = iou_ltrb(preds["reg"][pos], labels["reg"][pos])
    l3 = _masked_mean(1.0 - ious, int(pos.sum()), "loc")
    return {"cls1": l1, "cls2": l2, "loc": l3}


def combine(terms, weights: LossWeights | None = None):
    w = weights or LossWeights()
    return w.lambda1 * terms["cls1"] + w.lambda2 * terms["cls2"] + w.lambda3 * terms["loc"]


def loss(preds, labels, weights: LossWeights | None = None):
    """Weighted sum of cross-entropy, binary cross-entropy and IoU loss."""
    return combine(loss_terms(preds, labels), weights)
