"""Spectral envelope: per-position LPC analysis, inverse and synthesis filtering.

Filters use the convention ``A(z) = 1 - sum_i a_i z^-i``. Coefficients are
held constant over a cell that runs from the midpoint with the previous
analysis position to the midpoint with the next one.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter

from .dsp import Waveform, hann_window
from .errors import InvalidArgument

REFLECTION_LIMIT = 0.999
GAIN_FLOOR = 1e-10


@dataclass(frozen=True)
class EnvelopeTrack:
    order: int
    positions: np.ndarray
    coeffs: np.ndarray
    gains: np.ndarray

    def __post_init__(self):
        positions = np.asarray(self.positions, dtype=np.int64)
        coeffs = np.asarray(self.coeffs, dtype=np.float64).reshape(len(positions), self.order)
        gains = np.asarray(self.gains, dtype=np.float64)
        if self.order < 1:
            raise InvalidArgument("envelope order must be positive")
        if len(gains) != len(positions):
            raise InvalidArgument("one gain per position required")
        if len(positions) > 1 and np.any(np.diff(positions) <= 0):
            raise InvalidArgument("envelope positions must be strictly increasing")
        if not np.all(np.isfinite(coeffs)) or not np.all(np.isfinite(gains)):
            raise InvalidArgument("envelope coefficients and gains must be finite")
        if len(positions):
            k = reflection_coefficients(coeffs)
            bad = np.flatnonzero(np.any(~(np.abs(k) < 1.0), axis=1))
            if len(bad):
                raise InvalidArgument(f"unstable synthesis filter at position {positions[bad[0]]}")
        object.__setattr__(self, "positions", positions)
        object.__setattr__(self, "coeffs", coeffs)
        object.__setattr__(self, "gains", gains)

    def __len__(self):
        return len(self.positions)

    @classmethod
    def identity(cls, order: int, positions) -> "EnvelopeTrack":
        positions = np.asarray(positions, dtype=np.int64)
        return cls(order, positions, np.zeros((len(positions), order)), np.ones(len(positions)))

    def cell_bounds(self, length: int) -> np.ndarray:
        """Start index of every coefficient cell, plus ``length`` at the end."""
        mids = (self.positions[:-1] + self.positions[1:]) // 2
        return np.concatenate([[0], np.clip(mids, 0, length), [length]]).astype(np.int64)


def reflection_coefficients(coeffs) -> np.ndarray:
    """Step-down recursion: predictor coefficients back to reflection coefficients.

    The all-pole filter is stable iff every reflection coefficient has
    magnitude below one. Rows that hit ``|k| >= 1`` report that value and
    stop recursing (later entries are left at zero).
    """
    a = np.atleast_2d(np.array(coeffs, dtype=np.float64))
    nf, p = a.shape
    k = np.zeros((nf, p))
    live = np.ones(nf, bool)
    for i in range(p - 1, -1, -1):
        ki = a[:, i].copy()
        k[live, i] = ki[live]
        live &= np.abs(ki) < 1.0
        if i == 0:
            break
        denom = np.where(live, 1.0 - ki * ki, 1.0)
        prev = a[:, :i]
        a[:, :i] = (prev + ki[:, None] * prev[:, ::-1]) / denom[:, None]
    return k


def levinson(r: np.ndarray, order: int):
    """Batched Levinson-Durbin with reflection-coefficient clamping.

    ``r`` has shape ``(frames, order + 1)``. Returns predictor coefficients
    ``(frames, order)``, reflection coefficients and final prediction error.
    """
    r = np.atleast_2d(np.asarray(r, dtype=np.float64))
    nf = r.shape[0]
    a = np.zeros((nf, order))
    k = np.zeros((nf, order))
    err = r[:, 0].copy()
    for i in range(order):
        acc = r[:, i + 1] - np.einsum("fj,fj->f", a[:, :i], r[:, i:0:-1])
        ki = np.clip(acc / err, -REFLECTION_LIMIT, REFLECTION_LIMIT)
        prev = a[:, :i].copy()
        a[:, :i] = prev - ki[:, None] * prev[:, ::-1]
        a[:, i] = ki
        k[:, i] = ki
        err = err * (1.0 - ki * ki)
    return a, k, err


def _segments(x: np.ndarray, positions: np.ndarray, window_len: int) -> np.ndarray:
    start = positions - window_len // 2
    padded = np.concatenate([np.zeros(window_len), x, np.zeros(window_len)])
    idx = start[:, None] + window_len + np.arange(window_len)[None, :]
    return padded[idx]


def estimate_envelope(w: Waveform, positions, order: int = 24, window_len: int = 400) -> EnvelopeTrack:
    """Autocorrelation-method LPC on Hann-windowed segments centered at ``positions``."""
    positions = np.asarray(positions, dtype=np.int64)
    if order < 2:
        raise InvalidArgument(f"order must be >= 2, got {order}")
    if window_len < 2 * order:
        raise InvalidArgument(f"window_len {window_len} shorter than 2*order")
    if len(positions) and (positions[0] < 0 or positions[-1] >= len(w)):
        raise InvalidArgument("analysis positions outside the waveform")

    coeffs = np.zeros((len(positions), order))
    gains = np.full(len(positions), GAIN_FLOOR)
    win = hann_window(window_len)
    chunk = 4096
    for lo in range(0, len(positions), chunk):
        seg = _segments(w.samples, positions[lo:lo + chunk], window_len) * win
        spec = np.fft.rfft(seg, n=2 * window_len, axis=1)
        r = np.fft.irfft(np.abs(spec) ** 2, axis=1)[:, :order + 1]
        silent = r[:, 0] <= 1e-20
        r[silent] = 0.0
        r[silent, 0] = 1.0
        r[:, 0] *= 1.0 + 1e-9
        a, _, err = levinson(r, order)
        a[silent] = 0.0
        g = np.sqrt(np.maximum(err, 0.0) / window_len)
        g[silent] = GAIN_FLOOR
        coeffs[lo:lo + chunk] = a
        gains[lo:lo + chunk] = np.maximum(g, GAIN_FLOOR)
    return EnvelopeTrack(order, positions, coeffs, gains)


def _check(w: Waveform, env: EnvelopeTrack):
    if len(env) == 0:
        raise InvalidArgument("empty envelope track")


def inverse_filter(w: Waveform, env: EnvelopeTrack) -> Waveform:
    """Residual ``e[n] = x[n] - sum_i a_i x[n - i]`` with cell-wise coefficients."""
    _check(w, env)
    x = w.samples
    n = len(x)
    bounds = env.cell_bounds(n)
    cell = np.repeat(np.arange(len(env)), np.diff(bounds))
    p = env.order
    xp = np.concatenate([np.zeros(p), x])
    e = x.copy()
    for i in range(1, p + 1):
        e -= env.coeffs[cell, i - 1] * xp[p - i:p - i + n]
    return Waveform(e, w.sample_rate)


def synth_filter(excitation: Waveform, env: EnvelopeTrack) -> Waveform:
    """All-pole filter ``1/A(z)``; exact inverse of :func:`inverse_filter`."""
    _check(excitation, env)
    x = excitation.samples
    n = len(x)
    p = env.order
    bounds = env.cell_bounds(n)
    # Direct-form II transposed state carried across a coefficient switch:
    # zi[m] = sum_j a[m + j] * y[s - 1 - j].
    lag = np.arange(p)[:, None] + np.arange(p)[None, :]
    inside = lag < p
    lag = np.where(inside, lag, 0)
    y = np.zeros(p + n)
    for c in range(len(env)):
        s, t = bounds[c], bounds[c + 1]
        if s == t:
            continue
        a = env.coeffs[c]
        past = y[s:s + p][::-1]
        zi = np.sum(np.where(inside, a[lag], 0.0) * past[None, :], axis=1)
        y[p + s:p + t], _ = lfilter([1.0], np.concatenate([[1.0], -a]), x[s:t], zi=zi)
    y = y[p:]
    return Waveform(y, excitation.sample_rate)
