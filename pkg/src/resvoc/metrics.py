"""Objective comparison of a resynthesized waveform with its reference."""
from __future__ import annotations

import numpy as np

from .dsp import Waveform, hann_window
from .errors import InvalidArgument

SNR_CEILING_DB = 80.0
SILENCE_DB = -60.0
LSD_FLOOR_DB = -80.0
FFT_SIZE = 512


def _frames(x: np.ndarray, size: int) -> np.ndarray:
    n = len(x) // size
    return x[:n * size].reshape(n, size)


def active_frames(ref: np.ndarray, size: int, silence_db: float = SILENCE_DB) -> np.ndarray:
    """Mask of frames whose energy lies within ``silence_db`` of the loudest frame."""
    e = np.sum(_frames(ref, size) ** 2, axis=1)
    if len(e) == 0 or e.max() == 0:
        return np.zeros(len(e), bool)
    return e > e.max() * 10 ** (silence_db / 10)


def frame_snr_db(ref: np.ndarray, test: np.ndarray, size: int) -> np.ndarray:
    r = _frames(ref, size)
    err = r - _frames(test, size)
    sig = np.sum(r * r, axis=1)
    noise = np.sum(err * err, axis=1)
    with np.errstate(divide="ignore"):
        snr = 10 * np.log10(np.where(noise > 0, sig / np.where(noise > 0, noise, 1.0), np.inf))
    return np.minimum(snr, SNR_CEILING_DB)


def frame_lsd_db(ref: np.ndarray, test: np.ndarray, size: int) -> np.ndarray:
    win = hann_window(size)
    floor = 10 ** (LSD_FLOOR_DB / 20)
    sr = np.abs(np.fft.rfft(_frames(ref, size) * win, FFT_SIZE, axis=1))
    st = np.abs(np.fft.rfft(_frames(test, size) * win, FFT_SIZE, axis=1))
    diff = 20 * np.log10(np.maximum(sr, floor)) - 20 * np.log10(np.maximum(st, floor))
    return np.sqrt(np.mean(diff * diff, axis=1))


def compare(ref: Waveform, test: Waveform, voiced_mask: np.ndarray | None = None,
            frame_ms: float = 20.0) -> dict:
    """Segmental SNR and log-spectral distortion over non-silent 20 ms frames.

    With ``voiced_mask`` (one flag per sample), a second segmental SNR is
    restricted to frames that are mostly voiced.
    """
    if len(ref) != len(test):
        raise InvalidArgument(f"length mismatch: {len(ref)} vs {len(test)}")
    if ref.sample_rate != test.sample_rate:
        raise InvalidArgument("sample rate mismatch")
    size = int(round(frame_ms * ref.sample_rate / 1000))
    active = active_frames(ref.samples, size)
    snr = frame_snr_db(ref.samples, test.samples, size)
    lsd = frame_lsd_db(ref.samples, test.samples, size)
    out = {
        "segmental_snr_db": float(np.mean(snr[active])) if active.any() else 0.0,
        "log_spectral_distortion_db": float(np.mean(lsd[active])) if active.any() else 0.0,
    }
    if voiced_mask is not None:
        v = _frames(np.asarray(voiced_mask, dtype=float), size).mean(axis=1) > 0.5
        sel = active & v
        out["voiced_segmental_snr_db"] = float(np.mean(snr[sel])) if sel.any() else 0.0
    return out
