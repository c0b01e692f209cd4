"""Frame-by-frame single-object tracking with a trained :class:`HiFT` model."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .backbone import FeatureLevels
from .errors import ContractError
from .heads import BBox
from .imaging import context_size, crop_resize, to_input
from .model import HiFT
from .tensor import _sigmoid


@dataclass
class TrackerConfig:
    window_influence: float = 0.35
    size_lr: float = 0.3
    context: float = 0.5
    min_size: float = 4.0


@dataclass
class TrackState:
    template_features: FeatureLevels
    current: BBox
    window: np.ndarray  # (H, W) cosine window
    frame_size: tuple  # (width, height)
    config: TrackerConfig
    scores: np.ndarray | None = None  # fused score map of the last update


def cosine_window(height, width):
    win = np.outer(np.hanning(height + 2)[1:-1], np.hanning(width + 2)[1:-1])
    return win / win.max()


def _frame_dims(frame):
    frame = np.asarray(frame)
    return frame.shape[1], frame.shape[0]


def init(frame, gt: BBox, model: HiFT, config: TrackerConfig | None = None) -> TrackState:
    config = config or TrackerConfig()
    fw, fh = _frame_dims(frame)
    x0, y0, x1, y1 = gt.xyxy()
    if x0 < 0 or y0 < 0 or x1 > fw or y1 > fh:
        raise ContractError(f"initial box {gt} outside the {fw}x{fh} frame")
    bb = model.config.backbone
    s_z = context_size(gt.w, gt.h, config.context)
    z = to_input(crop_resize(frame, gt.cx, gt.cy, s_z, bb.template_size))
    zf = model.template(z[None])
    geom = model.geometry
    return TrackState(zf, gt, cosine_window(geom.height, geom.width), (fw, fh), config)


def score_maps(preds):
    """Per-location confidence: sigmoid(cls2) * softmax(cls1)[positive]."""
    c1 = preds["cls1"].data[0]
    c1 = c1 - c1.max(axis=-1, keepdims=True)
    p1 = np.exp(c1[:, 1]) / np.exp(c1).sum(axis=-1)
    return _sigmoid(preds["cls2"].data[0, :, 0]) * p1


def fuse(scores, window, influence):
    return (1 - influence) * scores + influence * window.ravel()


def update(state: TrackState, frame, model: HiFT) -> BBox:
    cfg = state.config
    bb = model.config.backbone
    geom = model.geometry
    cur = state.current
    s_z = context_size(cur.w, cur.h, cfg.context)
    s_x = s_z * bb.search_size / bb.template_size
    scale = bb.search_size / s_x
    x = to_input(crop_resize(frame, cur.cx, cur.cy, s_x, bb.search_size))
    preds = model(state.template_features, x[None])

    fused = fuse(score_maps(preds), state.window, cfg.window_influence)
    best = int(np.argmax(fused))
    px, py = geom.centers()[best]
    l, t, r, b = preds["reg"].data[0, best]
    # box in crop pixels, then back to the frame
    cx = cur.cx + ((px + (r - l) / 2) - bb.search_size / 2) / scale
    cy = cur.cy + ((py + (b - t) / 2) - bb.search_size / 2) / scale
    w = (1 - cfg.size_lr) * cur.w + cfg.size_lr * (l + r) / scale
    h = (1 - cfg.size_lr) * cur.h + cfg.size_lr * (t + b) / scale

    fw, fh = state.frame_size
    w = float(np.clip(w, cfg.min_size, fw))
    h = float(np.clip(h, cfg.min_size, fh))
    cx = float(np.clip(cx, w / 2, fw - w / 2))
    cy = float(np.clip(cy, h / 2, fh - h / 2))
    state.current = BBox(cx, cy, w, h)
    state.scores = fused.reshape(geom.height, geom.width)
    return state.current


def track_sequence(frames, init_box: BBox, model: HiFT, config: TrackerConfig | None = None,
                   keep_scores=False):
    """One-pass tracking: boxes for every frame (frame 0 is ``init_box``)."""
    state = init(frames[0], init_box, model, config)
    boxes, scores = [init_box], []
    for frame in frames[1:]:
        boxes.append(update(state, frame, model))
        if keep_scores:
            scores.append(state.scores.copy())
    return (boxes, scores) if keep_scores else boxes
