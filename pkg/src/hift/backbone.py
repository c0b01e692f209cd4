"""Five-layer convolutional feature extractor with three tap points.

A small stand-in for AlexNet: two stride-2 stem convolutions followed by
three stride-1 convolutions whose outputs are the shallow, middle and deep
feature levels. All convolutions are unpadded, so every level shrinks by
``k - 1`` pixels and the per-level correlation maps come out the same size.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import tensor as T
from .errors import ConfigError, ShapeError
from .nn import Module, kaiming
from .tensor import Parameter, Tensor


@dataclass
class BackboneConfig:
    channels: tuple = (32, 48, 64)
    stem_channels: tuple = (16, 32)
    kernels: tuple = (3, 3, 3, 3, 3)
    strides: tuple = (2, 2, 1, 1, 1)
    template_size: int = 64
    search_size: int = 128
    freeze_first: int = 0

    def __post_init__(self):
        self.channels = tuple(int(c) for c in self.channels)
        self.stem_channels = tuple(int(c) for c in self.stem_channels)
        self.kernels = tuple(int(k) for k in self.kernels)
        self.strides = tuple(int(s) for s in self.strides)
        if len(self.channels) != 3 or len(self.stem_channels) != 2:
            raise ConfigError("backbone needs 2 stem channel counts and 3 level channel counts")
        if len(self.kernels) != 5 or len(self.strides) != 5:
            raise ConfigError("backbone needs 5 kernel sizes and 5 strides")
        if min(self.channels + self.stem_channels + self.kernels + self.strides) < 1:
            raise ConfigError("backbone extents must be positive")
        t = self.level_sizes(self.template_size)
        s = self.level_sizes(self.search_size)
        if min(t) < 1:
            raise ConfigError(f"template_size {self.template_size} too small for the backbone")
        for lt, ls in zip(t, s):
            if lt >= ls:
                raise ConfigError("template features must be smaller than search features")
        maps = {b - a + 1 for a, b in zip(t, s)}
        if len(maps) != 1:
            raise ConfigError(f"correlation maps disagree in size: {sorted(maps)}")

    @property
    def layer_channels(self):
        return self.stem_channels + self.channels

    @property
    def total_stride(self):
        return int(np.prod(self.strides))

    def layer_sizes(self, size):
        sizes = []
        for k, s in zip(self.kernels, self.strides):
            size = T.conv_output_size(size, k, s)
            sizes.append(size)
        return sizes

    def level_sizes(self, size):
        """Spatial extent of the three tapped levels for a square input."""
        return self.layer_sizes(size)[2:]

    @property
    def map_size(self):
        """Side length of the similarity maps produced by correlation."""
        return self.level_sizes(self.search_size)[0] - self.level_sizes(self.template_size)[0] + 1


class FeatureLevels(NamedTuple):
    level3: Tensor
    level4: Tensor
    level5: Tensor


class Conv(Module):
    def __init__(self, c_in, c_out, k, stride, rng):
        self.weight = Parameter(kaiming(rng, (c_out, c_in, k, k), c_in * k * k))
        self.bias = Parameter(np.zeros(c_out))
        self.stride = stride

    def __call__(self, x):
        return T.conv2d(x, self.weight, self.bias, stride=self.stride)


class Backbone(Module):
    def __init__(self, config: BackboneConfig, rng):
        self.config = config
        chans = (3,) + config.layer_channels
        self.convs = [
            Conv(chans[i], chans[i + 1], config.kernels[i], config.strides[i], rng)
            for i in range(5)
        ]
        for conv in self.convs[: config.freeze_first]:
            conv.weight.trainable = False
            conv.bias.trainable = False

    def __call__(self, image) -> FeatureLevels:
        """Extract three feature levels from a 3xSxS image or an Nx3xSxS batch.

        The same parameters serve the template and the search branch.
        """
        x = T.as_tensor(image)
        if x.ndim == 3:
            x = x.reshape((1,) + x.shape)
        if x.ndim != 4 or x.shape[1] != 3 or x.shape[2] != x.shape[3]:
            raise ShapeError(f"expected 3xSxS image(s), got {x.shape}")
        if x.shape[2] not in (self.config.template_size, self.config.search_size):
            raise ShapeError(
                f"image size {x.shape[2]} is neither template_size "
                f"{self.config.template_size} nor search_size {self.config.search_size}")
        taps = []
        for i, conv in enumerate(self.convs):
            x = T.relu(conv(x))
            if i >= 2:
                taps.append(x)
        return FeatureLevels(*taps)
