"""Synthetic speech with known glottal closure instants.

A Rosenberg-style glottal flow derivative drives a cascade of formant
resonators whose frequencies glide between vowel targets; unvoiced stretches
are band-passed noise. Used for ground-truth tests and as a demo corpus.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.signal import lfilter

from .dsp import Waveform
from .envelope import EnvelopeTrack, synth_filter

VOWELS = {
    "a": [(730, 90), (1090, 110), (2440, 170), (3400, 250)],
    "i": [(270, 60), (2290, 100), (3010, 200), (3700, 250)],
    "u": [(300, 60), (870, 90), (2240, 170), (3300, 250)],
    "e": [(530, 70), (1840, 100), (2480, 180), (3500, 250)],
    "o": [(570, 80), (840, 90), (2410, 170), (3400, 250)],
}


@dataclass(frozen=True)
class Speaker:
    f0: float
    f0_swing: float = 0.15
    open_quotient: float = 0.6
    speed_quotient: float = 0.7
    formant_scale: float = 1.0
    jitter: float = 0.01
    shimmer: float = 0.05
    aspiration: float = 0.01


SPEAKERS = {
    "m1": Speaker(f0=105, open_quotient=0.55, speed_quotient=0.8),
    "m2": Speaker(f0=120, open_quotient=0.65, speed_quotient=0.78, formant_scale=1.03),
    "m3": Speaker(f0=95, open_quotient=0.5, speed_quotient=0.84, formant_scale=0.97),
    "f1": Speaker(f0=200, open_quotient=0.7, speed_quotient=0.8, formant_scale=1.15),
    "f2": Speaker(f0=185, open_quotient=0.75, speed_quotient=0.82, formant_scale=1.12),
}


def glottal_pulse(period: float, open_quotient: float, speed_quotient: float, offset: float = 0.0,
                  length: int | None = None) -> tuple[np.ndarray, float]:
    """Sampled flow-derivative pulse starting at fractional time ``offset``.

    Returns the samples and the closure instant (the GCI) in the same
    sample coordinates.
    """
    t_open = open_quotient * period
    t_rise = speed_quotient * t_open
    t_fall = t_open - t_rise
    n = int(np.ceil(offset + period)) if length is None else length
    t = np.arange(n) - offset
    d = np.zeros(n)
    rise = (t >= 0) & (t < t_rise)
    fall = (t >= t_rise) & (t < t_open)
    d[rise] = np.pi / (2 * t_rise) * np.sin(np.pi * t[rise] / t_rise)
    d[fall] = -np.pi / (2 * t_fall) * np.sin(np.pi * (t[fall] - t_rise) / (2 * t_fall))
    return d, offset + t_open


def formant_polynomial(formants, fs: int, scale: float = 1.0) -> np.ndarray:
    """Predictor coefficients (``A(z) = 1 - sum a_i z^-i``) of a resonator cascade."""
    poly = np.array([1.0])
    for f, bw in formants:
        r = np.exp(-np.pi * bw / fs)
        theta = 2 * np.pi * f * scale / fs
        poly = np.convolve(poly, [1.0, -2 * r * np.cos(theta), r * r])
    return -poly[1:]


@dataclass
class Utterance:
    wave: Waveform
    gcis: np.ndarray
    voiced: np.ndarray
    periods: np.ndarray = field(default_factory=lambda: np.zeros(0))


def _vocal_tract(source: np.ndarray, fs: int, vowels: list[str], scale: float,
                 block: int = 80) -> np.ndarray:
    n = len(source)
    positions = np.arange(block // 2, n, block)
    if len(positions) == 0:
        positions = np.array([0])
    targets = [np.array(VOWELS[v], dtype=float) for v in vowels]
    u = np.linspace(0, len(targets) - 1, len(positions))
    coeffs = []
    for x in u:
        i = min(int(x), len(targets) - 2) if len(targets) > 1 else 0
        frac = x - i if len(targets) > 1 else 0.0
        fm = targets[i] if len(targets) == 1 else (1 - frac) * targets[i] + frac * targets[i + 1]
        coeffs.append(formant_polynomial(fm, fs, scale))
    env = EnvelopeTrack(8, positions, np.array(coeffs), np.ones(len(positions)))
    out = synth_filter(Waveform(source, fs), env).samples
    # Lip-radiation / tilt compensation keeps the spectrum speech-like.
    return lfilter([1.0, -0.5], [1.0], out)


def voiced_segment(speaker: Speaker, n: int, fs: int, rng: np.random.Generator,
                   vowels: list[str] | None = None, f0_start: float | None = None,
                   open_quotient: float | None = None, speed_quotient: float | None = None,
                   jitter: float | None = None) -> Utterance:
    """A single voiced stretch of ``n`` samples with an F0 glide."""
    vowels = vowels or list(rng.choice(list(VOWELS), size=2))
    oq = speaker.open_quotient if open_quotient is None else open_quotient
    sq = speaker.speed_quotient if speed_quotient is None else speed_quotient
    jit = speaker.jitter if jitter is None else jitter
    f0a = f0_start or speaker.f0 * (1 + speaker.f0_swing * rng.uniform(-1, 1))
    f0b = speaker.f0 * (1 + speaker.f0_swing * rng.uniform(-1, 1))

    source = np.zeros(n + 2 * fs // 50)
    gcis, periods = [], []
    t = 0.0
    while True:
        f0 = f0a + (f0b - f0a) * min(t / n, 1.0)
        period = fs / f0 * (1 + jit * rng.uniform(-1, 1))
        amp = 1 + speaker.shimmer * rng.uniform(-1, 1)
        start = int(np.floor(t))
        pulse, closure = glottal_pulse(period, oq, sq, t - start)
        if start + closure >= n:
            break
        stop = min(len(source), start + len(pulse))
        source[start:stop] += amp * period / 100.0 * pulse[:stop - start]
        gcis.append(start + closure)
        periods.append(period)
        t += period
    source = source[:n]
    source += speaker.aspiration * rng.standard_normal(n) * np.sqrt(np.mean(source ** 2) + 1e-12)
    speech = _vocal_tract(source, fs, vowels, speaker.formant_scale)
    ramp = min(n // 4, fs // 100)
    env = np.ones(n)
    if ramp:
        env[:ramp] = np.linspace(0, 1, ramp)
        env[-ramp:] = np.linspace(1, 0, ramp)
    speech = speech * env
    return Utterance(Waveform(speech, fs), np.rint(gcis).astype(np.int64), np.ones(n, bool),
                     np.asarray(periods))


def unvoiced_segment(n: int, fs: int, rng: np.random.Generator, level: float = 0.02) -> np.ndarray:
    centre = rng.uniform(2500, 5500)
    r = 0.9
    theta = 2 * np.pi * centre / fs
    noise = rng.standard_normal(n)
    y = lfilter([1.0, -1.0], [1.0, -2 * r * np.cos(theta), r * r], noise)
    y *= level / (np.sqrt(np.mean(y ** 2)) + 1e-12)
    ramp = min(n // 4, fs // 200)
    if ramp:
        y[:ramp] *= np.linspace(0, 1, ramp)
        y[-ramp:] *= np.linspace(1, 0, ramp)
    return y


def utterance(speaker: Speaker, duration: float, seed: int, fs: int = 16000,
              level: float = 0.3) -> Utterance:
    """Alternating voiced/unvoiced/silent segments totalling ``duration`` seconds."""
    rng = np.random.default_rng(seed)
    total = int(duration * fs)
    parts, gcis, voiced = [], [], []
    pos = 0

    def push(x, g=None, v=False):
        nonlocal pos
        parts.append(x)
        if g is not None:
            gcis.extend((g + pos).tolist())
        voiced.append(np.full(len(x), v))
        pos += len(x)

    push(1e-4 * rng.standard_normal(int(0.1 * fs)))
    while pos < total - int(0.2 * fs):
        n = int(rng.uniform(0.15, 0.4) * fs)
        seg = voiced_segment(speaker, n, fs, rng)
        x = seg.wave.samples
        push(level * x / (np.max(np.abs(x)) + 1e-12), seg.gcis, True)
        kind = rng.uniform()
        if kind < 0.6:
            push(unvoiced_segment(int(rng.uniform(0.05, 0.15) * fs), fs, rng, level * 0.1))
        else:
            push(1e-4 * rng.standard_normal(int(rng.uniform(0.04, 0.1) * fs)))
    push(1e-4 * rng.standard_normal(max(total - pos, int(0.1 * fs))))
    samples = np.concatenate(parts)
    return Utterance(Waveform(samples, fs), np.asarray(gcis, dtype=np.int64), np.concatenate(voiced))


def corpus(speaker: Speaker, n_utterances: int, duration: float, seed: int, fs: int = 16000) -> list[Utterance]:
    return [utterance(speaker, duration, seed * 1000 + i, fs) for i in range(n_utterances)]
