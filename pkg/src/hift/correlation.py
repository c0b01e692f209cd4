"""Multi-level similarity maps: depthwise cross-correlation, 1x1 projection,
and flattening to sequence form.

Row ``r`` of a flattened map is spatial location ``(r // W, r % W)``; labels,
the transformer and the tracker all rely on this ordering.
"""
from __future__ import annotations

from typing import NamedTuple

from . import tensor as T
from .backbone import FeatureLevels
from .errors import ShapeError
from .nn import Linear, Module
from .tensor import Tensor


class SimilarityMaps(NamedTuple):
    m3: Tensor
    m4: Tensor
    m5: Tensor
    width: int
    height: int

    @property
    def channels(self):
        return self.m3.shape[-1]


def _batched(x):
    x = T.as_tensor(x)
    if x.ndim == 3:
        return x.reshape((1,) + x.shape), True
    if x.ndim != 4:
        raise ShapeError(f"expected CxHxW or NxCxHxW, got {x.shape}")
    return x, False


def xcorr(template_feat, search_feat):
    """Depthwise correlation of CxHxW (or batched) feature maps."""
    t, squeeze_t = _batched(template_feat)
    s, squeeze_s = _batched(search_feat)
    out = T.xcorr_depthwise(t, s)
    if squeeze_t and squeeze_s:
        out = out.reshape(out.shape[1:])
    return out


def flatten_locations(raw):
    """C x H x W -> (H*W) x C, row-major over locations (batched form kept)."""
    raw = T.as_tensor(raw)
    c, h, w = raw.shape[-3:]
    lead = raw.shape[:-3]
    x = raw.reshape(lead + (c, h * w))
    return x.swapaxes(-1, -2)


def unflatten_locations(seq, height, width):
    """Inverse of :func:`flatten_locations`."""
    seq = T.as_tensor(seq)
    lead = seq.shape[:-2]
    c = seq.shape[-1]
    return seq.swapaxes(-1, -2).reshape(lead + (c, height, width))


def project_and_flatten(raw, proj: Linear):
    return proj(flatten_locations(raw))


class Correlation(Module):
    """Per-level correlation followed by a learned 1x1 projection to ``dim``."""

    def __init__(self, level_channels, dim, rng):
        self.proj = [Linear(c, dim, rng) for c in level_channels]

    def __call__(self, template: FeatureLevels, search: FeatureLevels) -> SimilarityMaps:
        maps = []
        for proj, zf, xf in zip(self.proj, template, search):
            raw = xcorr(zf, xf)
            maps.append(project_and_flatten(raw, proj))
        h, w = raw.shape[-2:]
        return SimilarityMaps(maps[0], maps[1], maps[2], w, h)
