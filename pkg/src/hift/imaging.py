"""Crop/resize helpers shared by training and tracking.

Pixel ``i`` covers ``[i, i + 1)``; its center is ``i + 0.5``. A square crop
of side ``size`` centered at ``(cx, cy)`` maps frame point ``p`` to crop point
``(p - (c - size / 2)) * out / size``.
"""
from __future__ import annotations

import numpy as np
from scipy import ndimage


def context_size(w, h, context=0.5):
    """Side of the square template region around a ``w`` x ``h`` target."""
    pad = context * (w + h)
    return float(np.sqrt((w + pad) * (h + pad)))


def crop_resize(image, cx, cy, size, out):
    """Bilinear square crop of an (H, W, C) image, padded with the mean colour."""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim == 2:
        image = image[..., None]
    u = (np.arange(out) + 0.5) * (size / out) + (cx - size / 2) - 0.5
    v = (np.arange(out) + 0.5) * (size / out) + (cy - size / 2) - 0.5
    rows, cols = np.meshgrid(v, u, indexing="ij")
    fill = image.reshape(-1, image.shape[-1]).mean(axis=0)
    chans = [
        ndimage.map_coordinates(image[..., c], [rows, cols], order=1, mode="constant", cval=fill[c])
        for c in range(image.shape[-1])
    ]
    return np.stack(chans, axis=-1)


def to_input(crop):
    """(S, S, C) uint8-range crop -> (3, S, S) network input centered on zero."""
    x = np.asarray(crop, dtype=np.float64) / 255.0 - 0.5
    if x.shape[-1] == 1:
        x = np.repeat(x, 3, axis=-1)
    return x.transpose(2, 0, 1)


def frame_to_crop(px, py, cx, cy, size, out):
    scale = out / size
    return (px - (cx - size / 2)) * scale, (py - (cy - size / 2)) * scale


def crop_to_frame(qx, qy, cx, cy, size, out):
    scale = size / out
    return qx * scale + (cx - size / 2), qy * scale + (cy - size / 2)
