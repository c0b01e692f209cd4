"""Siamese aerial tracker with a hierarchical feature transformer, in numpy."""
from .config import RunConfig
from .heads import BBox
from .model import HiFT, ModelConfig

__all__ = ["BBox", "HiFT", "ModelConfig", "RunConfig"]
__version__ = "0.1.0"
