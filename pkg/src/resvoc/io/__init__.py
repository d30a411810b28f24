"""File formats: WAV audio, RSCB codebooks, TRK target tracks, eigen-frame CSV."""
from .formats import (load_codebook, load_track, read_codebook_bytes, save_codebook, save_track,
                      codebook_bytes, track_bytes, parse_track, write_eigen_csv)
from .wav import read_wav, write_wav

__all__ = [
    "codebook_bytes", "load_codebook", "load_track", "parse_track", "read_codebook_bytes", "read_wav",
    "save_codebook", "save_track", "track_bytes", "write_eigen_csv", "write_wav",
]
