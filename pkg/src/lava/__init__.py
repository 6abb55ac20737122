"""Hierarchical audio-deepfake attribution on raw waveforms."""

__version__ = "0.1.0"
