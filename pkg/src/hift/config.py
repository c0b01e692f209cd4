"""INI run configuration.

Every key has a default; unknown sections or keys are rejected. The effective
configuration is written back with :meth:`RunConfig.to_ini` and reloads to an
identical object.
"""
from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field, fields

from .backbone import BackboneConfig
from .errors import ConfigError
from .heads import LabelConfig, LossWeights
from .model import ModelConfig
from .tracker import TrackerConfig


@dataclass
class BackboneSection:
    channels: tuple = (32, 48, 64)
    stem_channels: tuple = (16, 32)
    kernels: tuple = (3, 3, 3, 3, 3)
    strides: tuple = (2, 2, 1, 1, 1)
    template_size: int = 64
    search_size: int = 128
    freeze_first: int = 0


@dataclass
class TransformerSection:
    variant: str = "hft"
    decoder_pe: bool = False
    channels: int = 64
    heads: int = 4
    ffn_mult: int = 2
    decoder_layers: int = 2
    reg_bias: float = 2.5


@dataclass
class LabelSection:
    mode: str = "circular"
    r_pos_strides: float = 2.0
    r_ign_strides: float = 4.0
    neg_cap_ratio: float = 3.0
    neg_cap_floor: int = 16


@dataclass
class LossSection:
    lambda1: float = 1.0
    lambda2: float = 1.0
    lambda3: float = 1.0


@dataclass
class TrackerSection:
    window_influence: float = 0.35
    size_lr: float = 0.3
    context: float = 0.5
    min_size: float = 4.0


@dataclass
class SynthSection:
    canvas: tuple = (160, 160)
    frames: int = 40
    train_sequences: int = 20
    eval_sequences: int = 10
    seed: int = 1000
    eval_seed: int = 2000
    min_size: float = 16.0
    max_size: float = 36.0
    max_speed: float = 2.0
    jitter: float = 1.0
    scale_drift: float = 0.01
    occlusion: bool = True


@dataclass
class TrainSection:
    steps: int = 2000
    batch_size: int = 4
    lr: float = 0.01
    lr_end: float = 0.001
    momentum: float = 0.9
    weight_decay: float = 1e-4
    clip_norm: float = 5.0
    seed: int = 0
    precision: int = 64
    max_gap: int = 8
    shift: float = 16.0
    scale_jitter: float = 0.15


@dataclass
class GradcheckSection:
    seeds: tuple = (0, 1, 2, 3, 4)
    channels: int = 16
    level_channels: tuple = (4, 6, 8)
    stem_channels: tuple = (4, 4)
    template_size: int = 40
    search_size: int = 60
    heads: int = 4
    batch_size: int = 2
    step: float = 1e-5
    tolerance: float = 1e-4
    entries_per_param: int = 3


@dataclass
class AblateSection:
    steps: int = 300
    variants: tuple = ("Baseline", "Baseline+OT", "Baseline+FT",
                       "Baseline+HFT+PE", "Baseline+HFT+RL", "Baseline+HFT")


SECTIONS = {
    "backbone": BackboneSection,
    "transformer": TransformerSection,
    "label": LabelSection,
    "loss": LossSection,
    "tracker": TrackerSection,
    "synth": SynthSection,
    "train": TrainSection,
    "gradcheck": GradcheckSection,
    "ablate": AblateSection,
}


def _parse(raw: str, default, where):
    try:
        if isinstance(default, bool):
            low = raw.strip().lower()
            if low in ("true", "yes", "1", "on"):
                return True
            if low in ("false", "no", "0", "off"):
                return False
            raise ValueError(raw)
        if isinstance(default, tuple):
            items = [s.strip() for s in raw.split(",") if s.strip()]
            kind = type(default[0]) if default else str
            return tuple(kind(s) for s in items)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        return raw.strip()
    except ValueError as e:
        raise ConfigError(f"{where}: cannot parse {raw!r}") from e


def _format(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ", ".join(_format(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


@dataclass
class RunConfig:
    backbone: BackboneSection = field(default_factory=BackboneSection)
    transformer: TransformerSection = field(default_factory=TransformerSection)
    label: LabelSection = field(default_factory=LabelSection)
    loss: LossSection = field(default_factory=LossSection)
    tracker: TrackerSection = field(default_factory=TrackerSection)
    synth: SynthSection = field(default_factory=SynthSection)
    train: TrainSection = field(default_factory=TrainSection)
    gradcheck: GradcheckSection = field(default_factory=GradcheckSection)
    ablate: AblateSection = field(default_factory=AblateSection)

    @classmethod
    def from_string(cls, text: str) -> "RunConfig":
        parser = configparser.ConfigParser(interpolation=None, default_section="__none__")
        parser.optionxform = str
        try:
            parser.read_string(text)
        except configparser.Error as e:
            raise ConfigError(str(e)) from e
        cfg = cls()
        for name in parser.sections():
            if name not in SECTIONS:
                raise ConfigError(f"unknown config section [{name}]")
            section = getattr(cfg, name)
            known = {f.name: f for f in fields(section)}
            for key, raw in parser.items(name):
                if key not in known:
                    raise ConfigError(f"unknown config key {name}.{key}")
                default = getattr(section, key)
                setattr(section, key, _parse(raw, default, f"{name}.{key}"))
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "RunConfig":
        with open(path, encoding="utf-8") as f:
            return cls.from_string(f.read())

    def to_ini(self) -> str:
        lines = []
        for name in SECTIONS:
            lines.append(f"[{name}]")
            for f in fields(getattr(self, name)):
                lines.append(f"{f.name} = {_format(getattr(getattr(self, name), f.name))}")
            lines.append("")
        return "\n".join(lines)

    def replace(self, **sections) -> "RunConfig":
        """Copy with per-section overrides, e.g. ``replace(train={"steps": 5})``."""
        out = dataclasses.replace(self, **{n: dataclasses.replace(getattr(self, n)) for n in SECTIONS})
        for name, values in sections.items():
            if name not in SECTIONS:
                raise ConfigError(f"unknown config section [{name}]")
            section = getattr(out, name)
            for key, value in values.items():
                if not hasattr(section, key):
                    raise ConfigError(f"unknown config key {name}.{key}")
                setattr(section, key, value)
        out.validate()
        return out

    def validate(self):
        self.model_config()
        self.label_config()
        self.loss_weights()
        if self.train.precision not in (32, 64):
            raise ConfigError("train.precision must be 32 or 64")
        if self.train.steps < 0 or self.train.batch_size < 1:
            raise ConfigError("train.steps must be >= 0 and train.batch_size >= 1")
        if not 0 <= self.tracker.window_influence <= 1:
            raise ConfigError("tracker.window_influence must lie in [0, 1]")

    def backbone_config(self) -> BackboneConfig:
        b = self.backbone
        return BackboneConfig(b.channels, b.stem_channels, b.kernels, b.strides,
                              b.template_size, b.search_size, b.freeze_first)

    def model_config(self) -> ModelConfig:
        t = self.transformer
        return ModelConfig(self.backbone_config(), t.channels, t.heads, t.ffn_mult,
                           t.decoder_layers, t.variant, t.decoder_pe, t.reg_bias)

    def label_config(self) -> LabelConfig:
        lab = self.label
        return LabelConfig(lab.mode, lab.r_pos_strides, lab.r_ign_strides,
                           lab.neg_cap_ratio, lab.neg_cap_floor)

    def loss_weights(self) -> LossWeights:
        return LossWeights(self.loss.lambda1, self.loss.lambda2, self.loss.lambda3)

    def tracker_config(self) -> TrackerConfig:
        t = self.tracker
        return TrackerConfig(t.window_influence, t.size_lr, t.context, t.min_size)
