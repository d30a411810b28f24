"""Voicing/F0 tracking and glottal closure instant (GCI) detection.

GCIs are located with a running center of gravity (CoG) of speech energy
over a two-period window. With CoG measured as an offset ahead of the
window center, a quasi-periodic signal gives a sawtooth: the CoG falls
steadily between excitations and jumps upward through zero as each new
excitation enters the window while the previous one leaves it. Those
upward crossings sit on the excitations; the dominant residual peak near
each one is taken as the GCI.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import median_filter
from scipy.signal import butter, sosfiltfilt

from .dsp import Waveform
from .errors import InvalidArgument


@dataclass(frozen=True)
class F0Track:
    """Frame-wise F0; frame ``i`` is centered on sample ``i * hop``."""

    hop: int
    f0: np.ndarray
    voiced: np.ndarray
    sample_rate: int

    def __post_init__(self):
        f0 = np.asarray(self.f0, dtype=np.float64)
        voiced = np.asarray(self.voiced, dtype=bool)
        if len(f0) != len(voiced):
            raise InvalidArgument("f0 and voiced arrays differ in length")
        if np.any((f0 > 0) != voiced):
            raise InvalidArgument("f0 > 0 must coincide with voiced frames")
        object.__setattr__(self, "f0", f0)
        object.__setattr__(self, "voiced", voiced)

    def __len__(self):
        return len(self.f0)

    def frame_of(self, n):
        """Frame owning sample ``n``: frame ``i`` owns ``[i*hop - hop//2, i*hop - hop//2 + hop)``."""
        n = np.asarray(n, dtype=np.int64)
        return np.clip((n + self.hop // 2) // self.hop, 0, len(self.f0) - 1)

    def period_at(self, n):
        """Local period in samples (0 where unvoiced)."""
        f = self.f0[self.frame_of(n)]
        with np.errstate(divide="ignore"):
            return np.where(f > 0, np.rint(self.sample_rate / np.where(f > 0, f, 1.0)), 0).astype(np.int64)

    def voiced_at(self, n):
        return self.voiced[self.frame_of(n)]

    def voiced_regions(self, length: int) -> list[tuple[int, int]]:
        """Half-open sample spans covered by runs of voiced frames."""
        v = np.concatenate([[False], self.voiced, [False]]).astype(np.int8)
        starts = np.flatnonzero(np.diff(v) == 1)
        stops = np.flatnonzero(np.diff(v) == -1)
        half = self.hop // 2
        spans = []
        for a, b in zip(starts, stops):
            lo = max(0, a * self.hop - half)
            hi = min(length, (b - 1) * self.hop + (self.hop - half))
            if hi > lo:
                spans.append((int(lo), int(hi)))
        return spans


CANDIDATE_RATIO = 0.5
# Closest allowed GCI spacing, as a fraction of the local period.
MIN_SPACING = 0.6


def estimate_f0(w: Waveform, f_min: float = 60.0, f_max: float = 400.0, hop_ms: float = 10.0,
                window_ms: float = 40.0, threshold: float = 0.3, silence_db: float = -50.0,
                octave_ratio: float = 0.85, lowpass_hz: float | None = 1000.0,
                smooth: int = 5, decision_ms: float = 10.0, multiples: tuple[int, ...] = (2, 3),
                min_run: int = 3) -> F0Track:
    """Normalized cross-correlation pitch tracker.

    A frame is voiced when its correlation peak reaches ``threshold`` and its
    RMS is within ``silence_db`` of the loudest frame. Among correlation
    peaks, the shortest lag reaching ``octave_ratio`` of the best one wins,
    which suppresses period-doubling. The correlation runs on a low-passed
    copy of the signal so that jitter does not decorrelate high resonances.
    F0 is median-smoothed over ``smooth`` frames within each voiced run.

    The long window picks the lag; the voicing decision is then confirmed
    three ways. The same window must still correlate at each of
    ``multiples`` times the lag, which true periodicity does and chance
    peaks of band-limited noise rarely do. A short window (``decision_ms``,
    at least one period) centered on the frame must correlate too, so
    voicing does not spill half a window into neighbouring noise. Finally,
    voiced runs shorter than ``min_run`` frames are dropped.
    """
    if not 20 <= f_min < f_max <= 500:
        raise InvalidArgument(f"need 20 <= f_min < f_max <= 500, got {f_min}, {f_max}")
    fs = w.sample_rate
    hop = int(round(hop_ms * fs / 1000))
    win = int(round(window_ms * fs / 1000))
    if len(w) < hop:
        raise InvalidArgument("waveform shorter than one hop")
    lag_lo = int(np.floor(fs / f_max))
    lag_hi = int(np.ceil(fs / f_min))
    x = w.samples
    if lowpass_hz is not None and lowpass_hz < fs / 2:
        x = sosfiltfilt(butter(4, lowpass_hz, fs=fs, output="sos"), x)
    n_frames = int(np.ceil(len(x) / hop))
    span = win + lag_hi + 1
    pad = np.concatenate([np.zeros(win // 2), x, np.zeros(span)])
    nfft = 1 << int(np.ceil(np.log2(span + win)))
    lags = np.arange(lag_lo, lag_hi + 1)

    peak = np.zeros(n_frames)
    best_lag = np.zeros(n_frames)
    rms = np.zeros(n_frames)
    cands: list[list[tuple[float, float]]] = [[] for _ in range(n_frames)]
    chunk = 2048
    for lo in range(0, n_frames, chunk):
        centers = np.arange(lo, min(n_frames, lo + chunk)) * hop
        seg = pad[centers[:, None] + np.arange(span)[None, :]]
        ref = seg[:, :win]
        xc = np.fft.irfft(np.conj(np.fft.rfft(ref, nfft, axis=1)) * np.fft.rfft(seg, nfft, axis=1),
                          nfft, axis=1)[:, lags]
        csum = np.concatenate([np.zeros((len(seg), 1)), np.cumsum(seg * seg, axis=1)], axis=1)
        e0 = csum[:, win]
        el = csum[:, lags + win] - csum[:, lags]
        denom = np.sqrt(e0[:, None] * el)
        nccf = np.where(denom > 1e-20, xc / np.maximum(denom, 1e-300), 0.0)
        rms[lo:lo + len(seg)] = np.sqrt(e0 / win)
        for j, r in enumerate(nccf):
            i = _pick_lag(r, octave_ratio)
            peak[lo + j] = r[i]
            best_lag[lo + j] = lags[i] + _parabolic(r, i)
            cands[lo + j] = [(lags[c] + _parabolic(r, c), r[c]) for c in _peaks(r, CANDIDATE_RATIO)]

    floor = max(rms.max() * 10 ** (silence_db / 20), 1e-7)
    voiced = (peak >= threshold) & (rms > floor)
    short = int(round(decision_ms * fs / 1000))
    signal = (win // 2, win // 2 + len(x))
    for j in np.flatnonzero(voiced):
        start = j * hop
        if not (all(_correlates(pad, start, m * best_lag[j], win, threshold, signal) for m in multiples)
                and _confirm(pad, start + win // 2, best_lag[j], short, floor, threshold, signal)):
            voiced[j] = False
    v = np.concatenate([[0], voiced.astype(np.int8), [0]])
    for a, b in zip(np.flatnonzero(np.diff(v) == 1), np.flatnonzero(np.diff(v) == -1)):
        if b - a < min_run:
            voiced[a:b] = False
    _fix_octaves(best_lag, voiced, cands)
    f0 = np.where(voiced, np.clip(fs / np.maximum(best_lag, 1.0), f_min, f_max), 0.0)
    if smooth > 1:
        # The log-domain median can land an ulp outside the clip range.
        f0 = np.where(voiced, np.clip(_smooth_runs(f0, voiced, smooth), f_min, f_max), 0.0)
    return F0Track(hop, f0, voiced, fs)


def _correlates(x: np.ndarray, start: int, lag: float, size: int, threshold: float,
                signal: tuple[int, int], tolerance: float = 0.1) -> bool:
    # Normalized correlation of x[start:start + size] with the window ``lag``
    # (+-tolerance) samples later, or earlier when the later one would leave
    # the ``signal`` span of the padded x.
    a = x[start:start + size]
    ea = np.dot(a, a)
    if ea <= 0:
        return False
    lags = range(max(1, int(np.floor(lag * (1 - tolerance)))), int(np.ceil(lag * (1 + tolerance))) + 1)
    sign = 1 if start + size + lags[-1] <= signal[1] or start - lags[-1] < signal[0] else -1
    for lag_k in lags:
        b = x[max(0, start + sign * lag_k):][:size]
        eb = np.dot(b, b)
        if len(b) == size and eb > 0 and np.dot(a, b) >= threshold * np.sqrt(ea * eb):
            return True
    return False


def _confirm(x: np.ndarray, center: int, lag: float, short: int, floor: float, threshold: float,
             signal: tuple[int, int], tolerance: float = 0.1) -> bool:
    # Short-window check around ``center``: enough energy, and some lag within
    # ``tolerance`` of the long-window lag still correlates (jitter-tolerant).
    # The window is kept on the real signal span ``signal`` of the padded x.
    lo_lag = max(1, int(np.floor(lag * (1 - tolerance))))
    hi_lag = int(np.ceil(lag * (1 + tolerance)))
    size = max(short, int(round(lag)))
    start = center - (size + int(round(lag))) // 2
    start = max(min(start, signal[1] - size - hi_lag), signal[0])
    a = x[start:start + size]
    ea = np.dot(a, a)
    if np.sqrt(ea / size) <= floor:
        return False
    for lag_k in range(lo_lag, hi_lag + 1):
        b = x[start + lag_k:start + lag_k + size]
        eb = np.dot(b, b)
        if len(b) == size and eb > 0 and np.dot(a, b) >= threshold * np.sqrt(ea * eb):
            return True
    return False


def _smooth_runs(f0: np.ndarray, voiced: np.ndarray, size: int) -> np.ndarray:
    out = f0.copy()
    v = np.concatenate([[0], voiced.astype(np.int8), [0]])
    for a, b in zip(np.flatnonzero(np.diff(v) == 1), np.flatnonzero(np.diff(v) == -1)):
        out[a:b] = np.exp(median_filter(np.log(f0[a:b]), size=min(size, b - a), mode="nearest"))
    return out


def _parabolic(r: np.ndarray, i: int) -> float:
    if 0 < i < len(r) - 1:
        a, b, c = r[i - 1], r[i], r[i + 1]
        den = a - 2 * b + c
        if den < 0:
            return float(np.clip(0.5 * (a - c) / den, -0.5, 0.5))
    return 0.0


def _peaks(r: np.ndarray, ratio: float) -> np.ndarray:
    """Local maxima of ``r`` reaching ``ratio`` times its maximum."""
    top = r.max()
    if top <= 0:
        return np.zeros(0, np.int64)
    inner = r[1:-1]
    return np.flatnonzero((inner >= r[:-2]) & (inner >= r[2:]) & (inner >= ratio * top)) + 1


def _fix_octaves(lag: np.ndarray, voiced: np.ndarray, cands) -> None:
    # Within each voiced run, a frame more than half an octave away from the
    # run's median lag switches to its candidate closest to that median.
    v = np.concatenate([[0], voiced.astype(np.int8), [0]])
    for a, b in zip(np.flatnonzero(np.diff(v) == 1), np.flatnonzero(np.diff(v) == -1)):
        ref = np.median(np.log2(lag[a:b]))
        for j in range(a, b):
            if abs(np.log2(lag[j]) - ref) > 0.5 and cands[j]:
                lag[j] = min(cands[j], key=lambda c: abs(np.log2(c[0]) - ref))[0]


def _pick_lag(r: np.ndarray, octave_ratio: float) -> int:
    best = int(np.argmax(r))
    if r[best] <= 0:
        return best
    inner = r[1:-1]
    is_peak = np.flatnonzero((inner >= r[:-2]) & (inner >= r[2:]) & (inner >= octave_ratio * r[best])) + 1
    return int(is_peak[0]) if len(is_peak) and is_peak[0] < best else best


def cog_track(w: Waveform, f0t: F0Track) -> np.ndarray:
    """Energy center of gravity over ``[n - T, n + T]``, in samples relative to ``n``."""
    x2 = w.samples ** 2
    n = len(x2)
    cog = np.zeros(n)
    for lo, hi in f0t.voiced_regions(n):
        idx = np.arange(lo, hi)
        T = f0t.period_at(idx)
        a = max(0, lo - T.max())
        b = min(n, hi + T.max() + 1)
        local = x2[a:b]
        k = np.arange(b - a, dtype=np.float64)
        p0 = np.concatenate([[0.0], np.cumsum(local)])
        p1 = np.concatenate([[0.0], np.cumsum(k * local)])
        rel = idx - a
        left = np.clip(rel - T, 0, b - a)
        right = np.clip(rel + T + 1, 0, b - a)
        s0 = p0[right] - p0[left]
        s1 = p1[right] - p1[left] - rel * s0
        cog[lo:hi] = np.where(s0 > 0, s1 / np.where(s0 > 0, s0, 1.0), 0.0)
    return cog


@dataclass(frozen=True)
class GciList:
    positions: np.ndarray

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=np.int64)
        if len(pos) > 1 and np.any(np.diff(pos) <= 0):
            raise InvalidArgument("GCI positions must be strictly increasing")
        object.__setattr__(self, "positions", pos)

    def __len__(self):
        return len(self.positions)

    def __iter__(self):
        return iter(self.positions.tolist())


def _merge_close(cands: list[int], r: np.ndarray, T: np.ndarray, frac: float) -> list[int]:
    kept: list[int] = []
    for g, t in zip(cands, T):
        if kept and g - kept[-1] < frac * t:
            if abs(r[g]) > abs(r[kept[-1]]):
                kept[-1] = g
        else:
            kept.append(g)
    return kept


def _fill_gaps(g: list[int], r: np.ndarray, f0t: F0Track, lo: int, hi: int, search: float) -> list[int]:
    # Extrapolate one period outward from detected GCIs into gaps (region
    # edges, missed pulses). A candidate must be a residual peak at least
    # half as strong as the GCI it was predicted from, unless leaving it out
    # would open a gap wider than two periods between detected GCIs.
    def step(cur: int, direction: int, limit: int, bounded: bool) -> int | None:
        t = int(f0t.period_at(cur))
        if t <= 0 or abs(limit - cur) < 1.5 * t:
            return None
        rad = int(round(search * t))
        centre = cur + direction * t
        a, b = max(lo, centre - rad), min(hi, centre + rad + 1)
        # Stay clear of the GCI on the far side.
        if direction < 0:
            a = max(a, limit + int(np.ceil(MIN_SPACING * t)))
        else:
            b = min(b, limit - int(np.ceil(MIN_SPACING * t)) + 1)
        if b <= a:
            return None
        cand = a + int(np.argmax(np.abs(r[a:b])))
        if abs(cand - cur) < MIN_SPACING * t:
            return None
        forced = bounded and abs(limit - cur) > 2 * t
        if abs(r[cand]) < 0.5 * abs(r[cur]) and not forced:
            return None
        return cand

    out: list[int] = []
    for cur in g:
        bounded = bool(out)
        left = out[-1] if out else lo - 1
        back: list[int] = []
        probe = cur
        while (c := step(probe, -1, left, bounded)) is not None:
            back.append(c)
            probe = c
        out.extend(back[::-1])
        out.append(cur)
    probe = out[-1] if out else None
    while probe is not None and (c := step(probe, 1, hi, False)) is not None:
        out.append(c)
        probe = c
    return out


def detect_gci(residual: Waveform, speech: Waveform, f0t: F0Track, search: float = 0.3) -> GciList:
    """GCIs from CoG zero-crossings on ``speech`` refined on ``residual`` peaks."""
    if len(residual) != len(speech):
        raise InvalidArgument("residual and speech lengths differ")
    r = residual.samples
    n = len(r)
    cog = cog_track(speech, f0t)
    out: list[int] = []
    for lo, hi in f0t.voiced_regions(n):
        T = f0t.period_at(np.arange(lo, hi))
        if hi - lo < T.max():
            continue
        c = cog[lo:hi]
        cross = np.flatnonzero((c[:-1] < 0) & (c[1:] >= 0)) + 1
        cands = []
        for j in cross:
            t = T[j]
            rad = int(round(search * t))
            a = max(lo, lo + j - rad)
            b = min(hi, lo + j + rad + 1)
            cands.append(a + int(np.argmax(np.abs(r[a:b]))))
        cands = sorted(set(cands))
        if not cands:
            continue
        periods = f0t.period_at(np.asarray(cands))
        cands = _merge_close(cands, r, periods, 0.25)
        periods = f0t.period_at(np.asarray(cands))
        cands = _merge_close(cands, r, periods, MIN_SPACING)
        out.extend(_fill_gaps(cands, r, f0t, lo, hi, search))
    return GciList(np.asarray(out, dtype=np.int64))
