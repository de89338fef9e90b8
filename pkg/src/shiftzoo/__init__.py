"""Encoder-zoo shift profiling and shift-aware head training."""

__version__ = "0.1.0"
