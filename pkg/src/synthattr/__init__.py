"""Synthetic speech attribution: which synthesizer produced a clip."""

__version__ = "0.1.0"
