"""Synthetic single-target sequences with exact ground truth.

The target is an anti-aliased rectangle painted with a 2x2 colour pattern
that stretches with the box, so the ground-truth box is the rendered
rectangle to floating-point precision.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .heads import BBox


@dataclass
class SynthConfig:
    canvas: tuple = (160, 160)  # width, height
    frames: int = 40
    target_size: tuple = (24.0, 24.0)
    start: tuple | None = None  # initial center; canvas center when None
    velocity: tuple = (0.0, 0.0)
    jitter: float = 0.0
    scale_drift: float = 0.0  # per-frame relative size change
    occlusions: tuple = ()  # (first, last) frame ranges with the target's left half hidden
    colors: np.ndarray | None = None  # (4, 3) quadrant colours in [0, 1]
    background: float = 0.45
    noise: float = 0.03
    seed: int = 0

    def __post_init__(self):
        w, h = self.canvas
        tw, th = self.target_size
        if tw <= 0 or th <= 0:
            raise ConfigError("target size must be positive")
        if tw > w or th > h:
            raise ConfigError(f"target {self.target_size} larger than canvas {self.canvas}")
        if self.frames < 1:
            raise ConfigError("need at least one frame")


@dataclass
class Sequence:
    frames: np.ndarray  # (T, H, W, 3) uint8
    boxes: list = field(default_factory=list)  # BBox per frame
    name: str = "seq"


def _coverage(lo, hi, n):
    """Fraction of each unit pixel [i, i+1) covered by the interval [lo, hi)."""
    i = np.arange(n)
    return np.clip(np.minimum(i + 1, hi) - np.maximum(i, lo), 0.0, 1.0)


def render(box: BBox, colors, bg: np.ndarray, occluded=False):
    """Paint ``box`` over ``bg`` (H, W, 3) float image, returning a new image."""
    h, w = bg.shape[:2]
    x0, y0, x1, y1 = box.xyxy()
    cx = _coverage(x0, x1, w)
    cy = _coverage(y0, y1, h)
    if occluded:
        cx = cx * (np.arange(w) + 0.5 >= box.cx)
    alpha = cy[:, None] * cx[None, :]
    # quadrant index from the pixel center's position inside the box
    qx = (np.arange(w) + 0.5 >= box.cx).astype(int)
    qy = (np.arange(h) + 0.5 >= box.cy).astype(int)
    pattern = colors[(2 * qy[:, None] + qx[None, :])]
    return bg * (1 - alpha[..., None]) + pattern * alpha[..., None]


def gen_sequence(cfg: SynthConfig, name="seq") -> Sequence:
    rng = np.random.default_rng(cfg.seed)
    w, h = cfg.canvas
    colors = cfg.colors
    if colors is None:
        # keep every quadrant visibly off the background level
        sign = rng.choice([-1.0, 1.0], size=(4, 3))
        colors = np.clip(cfg.background + sign * rng.uniform(0.2, 0.5, size=(4, 3)), 0.0, 1.0)
    colors = np.asarray(colors, dtype=float)
    base = np.full((h, w, 3), cfg.background)

    tw, th = cfg.target_size
    cx, cy = cfg.start if cfg.start is not None else (w / 2, h / 2)
    vx, vy = cfg.velocity
    frames = np.empty((cfg.frames, h, w, 3), dtype=np.uint8)
    boxes = []
    for t in range(cfg.frames):
        if t > 0:
            tw = min(tw * (1 + cfg.scale_drift), w)
            th = min(th * (1 + cfg.scale_drift), h)
            cx += vx + (rng.uniform(-cfg.jitter, cfg.jitter) if cfg.jitter else 0.0)
            cy += vy + (rng.uniform(-cfg.jitter, cfg.jitter) if cfg.jitter else 0.0)
            # bounce off the canvas edges
            if cx - tw / 2 < 0 or cx + tw / 2 > w:
                vx = -vx
            if cy - th / 2 < 0 or cy + th / 2 > h:
                vy = -vy
        cx = float(np.clip(cx, tw / 2, w - tw / 2))
        cy = float(np.clip(cy, th / 2, h - th / 2))
        box = BBox(cx, cy, tw, th)
        occluded = any(a <= t <= b for a, b in cfg.occlusions)
        bg = base + rng.normal(0.0, cfg.noise, size=base.shape) if cfg.noise else base
        img = render(box, colors, bg, occluded)
        frames[t] = np.clip(np.rint(img * 255), 0, 255).astype(np.uint8)
        boxes.append(box)
    return Sequence(frames, boxes, name)


def random_config(rng, canvas=(160, 160), frames=40, easy=False, min_size=16.0, max_size=36.0,
                  max_speed=2.0, jitter=1.0, scale_drift=0.01, occlusion=True) -> SynthConfig:
    """Draw a varied sequence config; ``easy`` disables drift, jitter and occlusion."""
    area = rng.uniform(min_size, max_size) ** 2
    aspect = rng.uniform(0.7, 1.4)
    size = (float(np.sqrt(area * aspect)), float(np.sqrt(area / aspect)))
    speed = rng.uniform(0, max_speed) * (0.5 if easy else 1.0)
    angle = rng.uniform(0, 2 * np.pi)
    margin = max(size) + 4
    start = (rng.uniform(margin, canvas[0] - margin), rng.uniform(margin, canvas[1] - margin))
    occl = ()
    if occlusion and not easy and rng.random() < 0.3:
        a = int(rng.integers(frames // 4, frames // 2))
        occl = ((a, a + 3),)
    return SynthConfig(
        canvas=canvas, frames=frames, target_size=size, start=start,
        velocity=(speed * np.cos(angle), speed * np.sin(angle)),
        jitter=0.0 if easy else jitter,
        scale_drift=0.0 if easy else float(rng.uniform(-scale_drift, scale_drift)),
        occlusions=occl,
        background=float(rng.uniform(0.3, 0.6)),
        noise=0.02 if easy else 0.04,
        seed=int(rng.integers(2**31)),
    )
