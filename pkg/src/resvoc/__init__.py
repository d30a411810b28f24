"""Residual-codebook vocoder: pitch-synchronous residual frames, RN
signatures, K-means codebooks and copy-synthesis."""
from .dsp import Frame, Waveform
from .errors import (BadMagicError, ChecksumError, DegenerateFrameError, FormatError, InvalidArgument,
                     ResvocError, TruncatedError, VersionError, WavError)
from .pipeline import Config, MetricsReport, analyze, compare_metrics, copy_synthesis, train

__version__ = "0.1.0"

__all__ = [
    "BadMagicError", "ChecksumError", "Config", "DegenerateFrameError", "FormatError", "Frame",
    "InvalidArgument", "MetricsReport", "ResvocError", "TruncatedError", "VersionError", "WavError",
    "Waveform", "analyze", "compare_metrics", "copy_synthesis", "train",
]
