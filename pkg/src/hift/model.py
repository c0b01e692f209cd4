"""End-to-end tracker network: backbone -> correlation -> transformer -> heads."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .backbone import Backbone, BackboneConfig, FeatureLevels
from .correlation import Correlation
from .errors import ConfigError
from .heads import Heads, MapGeometry
from .nn import Module
from .transformer import VARIANTS, HierarchicalTransformer


@dataclass
class ModelConfig:
    backbone: BackboneConfig = field(default_factory=BackboneConfig)
    channels: int = 64
    heads: int = 4
    ffn_mult: int = 2
    decoder_layers: int = 2
    variant: str = "hft"
    decoder_pe: bool = False
    reg_bias: float = 2.5

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.heads < 1 or self.channels % self.heads:
            raise ConfigError(f"{self.heads} heads do not divide {self.channels} channels")
        if self.decoder_layers < 1:
            raise ConfigError("need at least one decoder layer")


class HiFT(Module):
    """Siamese tracker network.

    ``variant='baseline'`` skips the transformer and feeds the deep similarity
    map straight to the heads.
    """

    def __init__(self, config: ModelConfig | None = None, seed=0):
        config = config or ModelConfig()
        self.config = config
        rng = np.random.default_rng(seed)
        bb = config.backbone
        self.geometry = MapGeometry.centered(bb.map_size, bb.total_stride, bb.search_size)
        self.backbone = Backbone(bb, rng)
        self.correlation = Correlation(bb.channels, config.channels, rng)
        self.transformer = None
        if config.variant != "baseline":
            self.transformer = HierarchicalTransformer(
                config.channels, self.geometry.locations, rng,
                heads=config.heads, ffn_mult=config.ffn_mult,
                decoder_layers=config.decoder_layers,
                variant=config.variant, decoder_pe=config.decoder_pe)
        self.heads = Heads(config.channels, rng, reg_bias=config.reg_bias)
        self.assign_names()

    def template(self, z) -> FeatureLevels:
        return self.backbone(z)

    def similarity(self, zf: FeatureLevels, x):
        return self.correlation(zf, self.backbone(x))

    def features(self, zf: FeatureLevels, x):
        maps = self.similarity(zf, x)
        if self.transformer is None:
            return maps.m5
        return self.transformer(maps.m3, maps.m4, maps.m5)

    def __call__(self, zf: FeatureLevels, x):
        """Head outputs for search image(s) ``x`` given cached template features."""
        return self.heads(self.features(zf, x))

    def forward_pair(self, z, x):
        return self(self.template(z), x)
