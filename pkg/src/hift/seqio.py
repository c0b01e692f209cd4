"""On-disk sequence layout: PGM/PPM frames plus ``groundtruth.txt``.

A sequence directory holds binary PGM (grey) or PPM (RGB) frames, sorted by
file name, either at the top level or under ``img/``. Box files carry one
``x,y,w,h`` line per frame in corner form.
"""
from __future__ import annotations

import os

import numpy as np
from PIL import Image

from .errors import ContractError
from .heads import BBox
from .synth import Sequence

FRAME_SUFFIXES = (".pgm", ".ppm")


def frame_paths(seq_dir):
    for d in (os.path.join(seq_dir, "img"), seq_dir):
        if os.path.isdir(d):
            names = sorted(n for n in os.listdir(d) if n.lower().endswith(FRAME_SUFFIXES))
            if names:
                return [os.path.join(d, n) for n in names]
    raise ContractError(f"no PGM/PPM frames in {seq_dir}")


def read_frame(path):
    with Image.open(path) as im:
        if im.mode not in ("L", "RGB"):
            raise ContractError(f"{path}: expected 8-bit grey or RGB, got mode {im.mode}")
        return np.asarray(im, dtype=np.uint8)


def write_frame(path, frame):
    frame = np.asarray(frame, dtype=np.uint8)
    Image.fromarray(frame, "L" if frame.ndim == 2 else "RGB").save(path)


def read_boxes(path):
    boxes = []
    with open(path, encoding="utf-8") as f:
        for n, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            parts = line.replace("\t", ",").replace(" ", ",").split(",")
            parts = [p for p in parts if p]
            if len(parts) != 4:
                raise ContractError(f"{path}:{n}: expected x,y,w,h")
            x, y, w, h = map(float, parts)
            boxes.append(BBox.from_xywh(x, y, w, h))
    return boxes


def format_boxes(boxes):
    return "".join(",".join(f"{v:.4f}" for v in b.xywh()) + "\n" for b in boxes)


def write_boxes(path, boxes):
    with open(path, "w", encoding="utf-8") as f:
        f.write(format_boxes(boxes))


def read_sequence(seq_dir) -> Sequence:
    """Load frames and ground truth; at least the first frame's box is required."""
    paths = frame_paths(seq_dir)
    gt_path = os.path.join(seq_dir, "groundtruth.txt")
    boxes = read_boxes(gt_path) if os.path.exists(gt_path) else []
    if not boxes:
        raise ContractError(f"{seq_dir}: groundtruth for frame 0 is required")
    frames = [read_frame(p) for p in paths]
    return Sequence(frames, boxes, os.path.basename(os.path.normpath(seq_dir)))


def write_sequence(seq: Sequence, seq_dir):
    img = os.path.join(seq_dir, "img")
    os.makedirs(img, exist_ok=True)
    for i, frame in enumerate(seq.frames):
        ext = ".pgm" if np.ndim(frame) == 2 else ".ppm"
        write_frame(os.path.join(img, f"{i + 1:06d}{ext}"), frame)
    write_boxes(os.path.join(seq_dir, "groundtruth.txt"), seq.boxes)
