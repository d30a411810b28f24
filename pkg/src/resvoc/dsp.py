"""Elementary frame operations: windowing, whole-frame resampling, energy.

Everything here is a pure function on real-valued numpy arrays.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import DegenerateFrameError, InvalidArgument

# Half-width of the interpolation kernel, in zero crossings of the
# lower of the two sample rates (16 taps total).
HALF_TAPS = 8


@dataclass(frozen=True)
class Waveform:
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise InvalidArgument("waveform must be mono (1-D)")
        if int(self.sample_rate) <= 0:
            raise InvalidArgument(f"sample_rate must be positive, got {self.sample_rate}")
        if not np.all(np.isfinite(samples)):
            raise InvalidArgument("waveform contains NaN or Inf")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    def __len__(self):
        return len(self.samples)

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


@dataclass(frozen=True)
class Frame:
    samples: np.ndarray
    anchor: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1 or len(samples) < 2:
            raise InvalidArgument("frame needs at least 2 samples")
        if not 0 <= self.anchor < len(samples):
            raise InvalidArgument(f"anchor {self.anchor} outside frame of length {len(samples)}")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "anchor", int(self.anchor))

    def __len__(self):
        return len(self.samples)


def _as_frame(f) -> Frame:
    if isinstance(f, Frame):
        return f
    x = np.asarray(f, dtype=np.float64)
    return Frame(x, len(x) // 2)


def hann_window(n: int) -> np.ndarray:
    """Symmetric n-point Hann window as a bare array."""
    if n < 2:
        raise InvalidArgument(f"window length must be >= 2, got {n}")
    i = np.arange(n)
    w = 0.5 - 0.5 * np.cos(2.0 * np.pi * i / (n - 1))
    # Averaging with the mirror image makes the symmetry exact.
    return 0.5 * (w + w[::-1])


def hanning(n: int) -> Frame:
    """Symmetric Hann window with both endpoints exactly zero."""
    w = hann_window(n)
    w[0] = w[-1] = 0.0
    return Frame(w, n // 2)


def _odd_extend(x: np.ndarray, pad: int) -> np.ndarray:
    # Point reflection about each endpoint keeps linear trends intact;
    # repeated when the frame is shorter than the pad.
    ext = x
    done = 0
    while done < pad:
        k = min(len(ext) - 1, pad - done)
        ext = np.concatenate([2.0 * ext[0] - ext[1:k + 1][::-1], ext])
        done += k
    done = 0
    while done < pad:
        k = min(len(ext) - 1, pad - done)
        ext = np.concatenate([ext, 2.0 * ext[-1] - ext[-k - 1:-1][::-1]])
        done += k
    return ext


@lru_cache(maxsize=2048)
def _kernel(n: int, m: int) -> tuple[np.ndarray, np.ndarray, int]:
    # Interpolation weights and tap indices depend only on the two lengths.
    step = (n - 1) / (m - 1)
    cutoff = min(1.0, 1.0 / step)
    half = HALF_TAPS / cutoff
    pad = int(np.ceil(half)) + 2
    t = np.arange(m) * (n - 1) / (m - 1)
    base = np.floor(t - half).astype(np.int64) + 1
    width = int(np.floor(2 * half)) + 2
    idx = base[:, None] + np.arange(width)[None, :]
    d = idx - t[:, None]
    h = cutoff * np.sinc(cutoff * d) * np.where(
        np.abs(d) < half, 0.5 + 0.5 * np.cos(np.pi * d / half), 0.0
    )
    h /= h.sum(axis=1, keepdims=True)
    h.setflags(write=False)
    idx = idx + pad
    idx.setflags(write=False)
    return h, idx, pad


def resample_frame(f, m: int) -> Frame:
    """Resample a frame to ``m`` samples with a Hann-windowed sinc kernel.

    The first and last samples map onto each other, so a frame covering
    ``[0, 1]`` in continuous time still covers ``[0, 1]`` afterwards. When
    shrinking, the kernel cutoff is lowered to the new Nyquist rate. Weights
    are normalized to unit sum, which makes the kernel reproduce constant
    and (where the support is symmetric) linear signals exactly.
    """
    f = _as_frame(f)
    if m < 2:
        raise InvalidArgument(f"target length must be >= 2, got {m}")
    x = f.samples
    n = len(x)
    h, idx, pad = _kernel(n, m)
    ext = _odd_extend(x, pad)
    y = np.sum(h * ext[idx], axis=1)

    anchor = int(round(f.anchor * (m - 1) / (n - 1)))
    return Frame(y, anchor)


def frame_energy(f) -> float:
    """Sum of squares of the frame samples."""
    x = f.samples if isinstance(f, Frame) else np.asarray(f, dtype=np.float64)
    if x.size == 0:
        raise InvalidArgument("energy of an empty frame")
    return float(np.dot(x, x))


def scale_to_energy(f, e: float) -> Frame:
    f = _as_frame(f)
    if e < 0:
        raise InvalidArgument(f"target energy must be >= 0, got {e}")
    current = frame_energy(f)
    if current == 0.0:
        if e > 0:
            raise DegenerateFrameError("cannot scale a zero-energy frame to positive energy")
        return Frame(f.samples.copy(), f.anchor)
    return Frame(f.samples * np.sqrt(e / current), f.anchor)
