"""Source-signal construction from target RN signatures.

Voiced events pick the codebook entry whose RN key is nearest to the
target, resample it to the target period, scale it to the target energy and
overlap-add it centered on the event. Runs of unvoiced events become one
stretch of white noise carrying the summed target energy.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .codebook import RN_SIZE, Codebook, ResidualFrame
from .dsp import Frame, Waveform, hann_window, resample_frame, scale_to_energy
from .errors import InvalidArgument

log = logging.getLogger(__name__)

CODEBOOK = "codebook"
PULSE = "pulse"
# Gain-correction passes after overlap-add (0 gives the plain sum).
ENERGY_PASSES = 8


@dataclass(frozen=True)
class Event:
    position: int
    voiced: bool
    period: int = 0
    energy: float = 0.0
    target_rn: np.ndarray | None = None
    # Per-event flip relative to the track polarity (see ResidualFrame.sign).
    sign: int = 1

    def __post_init__(self):
        if self.energy < 0:
            raise InvalidArgument("event energy must be >= 0")
        if self.sign not in (1, -1):
            raise InvalidArgument("event sign must be +1 or -1")
        if self.voiced:
            if self.period <= 0:
                raise InvalidArgument(f"voiced event at {self.position} needs a positive period")
            rn = np.asarray(self.target_rn, dtype=np.float64)
            if rn.shape != (RN_SIZE,):
                raise InvalidArgument(f"voiced event at {self.position} needs a {RN_SIZE}-value RN target")
            object.__setattr__(self, "target_rn", rn)


@dataclass(frozen=True)
class TargetTrack:
    events: tuple[Event, ...]
    total_length: int
    sample_rate: int
    # Sign that maps the source recording's residual onto the codebook's
    # canonical (negative-peak) polarity; applied again on synthesis.
    polarity: int = 1

    def __post_init__(self):
        events = tuple(self.events)
        pos = [e.position for e in events]
        if any(b <= a for a, b in zip(pos, pos[1:])):
            raise InvalidArgument("event positions must be strictly increasing")
        if pos and (pos[0] < 0 or pos[-1] >= self.total_length):
            raise InvalidArgument("event positions must lie in [0, total_length)")
        if self.polarity not in (1, -1):
            raise InvalidArgument("polarity must be +1 or -1")
        object.__setattr__(self, "events", events)

    @property
    def positions(self) -> np.ndarray:
        return np.array([e.position for e in self.events], dtype=np.int64)

    def cell_bounds(self) -> np.ndarray:
        """Each event owns the samples between its midpoints with its neighbours."""
        pos = self.positions
        mids = (pos[:-1] + pos[1:]) // 2
        return np.concatenate([[0], mids, [self.total_length]]).astype(np.int64)

    def unvoiced_spans(self) -> list[tuple[int, int, float]]:
        """Maximal runs of unvoiced events as ``(start, stop, energy)``."""
        bounds = self.cell_bounds()
        spans = []
        run = None
        for i, e in enumerate(self.events):
            if e.voiced:
                if run is not None:
                    spans.append(run)
                    run = None
                continue
            if run is None:
                run = (int(bounds[i]), int(bounds[i + 1]), e.energy)
            else:
                run = (run[0], int(bounds[i + 1]), run[2] + e.energy)
        if run is not None:
            spans.append(run)
        return spans


@dataclass
class Selection:
    entry: int
    distance: float
    ratio: float


@dataclass
class SelectionReport:
    records: list[Selection] = field(default_factory=list)
    clipped: int = 0

    @property
    def energy_holes(self) -> int:
        return sum(1 for r in self.records if r.ratio > 1.0)

    @property
    def mean_distance(self) -> float:
        return float(np.mean([r.distance for r in self.records])) if self.records else 0.0


def select(cb: Codebook, target) -> tuple[int, float]:
    """Index and RN distance of the nearest key; lowest index wins ties."""
    d = cb.keys - np.asarray(target, dtype=np.float64)[None, :]
    dist = np.einsum("ij,ij->i", d, d) / RN_SIZE
    i = int(np.argmin(dist))
    return i, float(dist[i])


def adapt(f: ResidualFrame, period: int, energy: float) -> Frame:
    """Resample a payload to ``2 * period`` samples and set its energy."""
    if period < 1:
        raise InvalidArgument(f"period must be >= 1, got {period}")
    if energy < 0:
        raise InvalidArgument("energy must be >= 0")
    frame = f.as_frame() if isinstance(f, ResidualFrame) else f
    if len(frame) != 2 * period:
        frame = resample_frame(frame, 2 * period)
    out = scale_to_energy(frame, energy)
    return Frame(out.samples, period)


def overlap_add(frames, length: int) -> tuple[np.ndarray, int]:
    """Sum frames into a zero buffer with each anchor on its position.

    Returns the buffer and how many frames had to be clipped at its edges.
    """
    out = np.zeros(length)
    clipped = 0
    for frame, pos in frames:
        start = pos - frame.anchor
        stop = start + len(frame)
        a, b = max(0, start), min(length, stop)
        if a != start or b != stop:
            clipped += 1
        if b > a:
            out[a:b] += frame.samples[a - start:b - start]
    return out, clipped


def noise_fill(length: int, energy: float, seed) -> np.ndarray:
    """Uniform white noise scaled to the given sum of squares."""
    if energy < 0:
        raise InvalidArgument("energy must be >= 0")
    if length <= 0 or energy == 0:
        return np.zeros(max(length, 0))
    x = np.random.default_rng(seed).uniform(-1.0, 1.0, length)
    return x * np.sqrt(energy / np.dot(x, x))


def pulse_frame(period: int, energy: float) -> Frame:
    # A single (negative, canonical-polarity) impulse whose energy under the
    # two-period analysis window equals the target.
    peak = hann_window(2 * period)[period]
    x = np.zeros(2 * period)
    x[period] = -np.sqrt(energy) / peak
    return Frame(x, period)


def windowed_energy(x: np.ndarray, position: int, period: int) -> float:
    """Energy of ``x`` under the two-period Hann window centered on ``position``."""
    w = hann_window(2 * period)
    start = position - period
    a, b = max(0, start), min(len(x), start + 2 * period)
    seg = x[a:b] * w[a - start:b - start]
    return float(np.dot(seg, seg))


def _gain_curve(events, gains: np.ndarray, length: int) -> np.ndarray:
    """Per-event gains interpolated in time with each event's two-period window."""
    num = np.zeros(length)
    den = np.zeros(length)
    for e, g in zip(events, gains):
        w = hann_window(2 * e.period)
        start = e.position - e.period
        a, b = max(0, start), min(length, start + 2 * e.period)
        num[a:b] += g * w[a - start:b - start]
        den[a:b] += w[a - start:b - start]
    return np.where(den > 0, num / np.where(den > 0, den, 1.0), 1.0)


def _match_energies(placed, events, length: int, passes: int) -> tuple[np.ndarray, int]:
    # Overlapping neighbours add to each event's two-period energy. A smooth
    # gain curve, refined by a few multiplicative fixed-point passes, pulls
    # every realized windowed energy toward its target.
    out, clipped = overlap_add(placed, length)
    if passes == 0 or not events:
        return out, clipped
    target = np.array([e.energy for e in events])
    gains = np.ones(len(events))
    # A frame with no overlapping neighbour already carries its exact energy.
    lo = np.array([e.position - e.period for e in events])
    hi = np.array([e.position + e.period for e in events])
    overlapped = np.zeros(len(events), bool)
    overlapped[1:] |= lo[1:] < hi[:-1]
    overlapped[:-1] |= lo[1:] < hi[:-1]
    shaped = out
    for _ in range(passes):
        real = np.array([windowed_energy(shaped, e.position, e.period) for e in events])
        ok = (real > 0) & (target > 0) & overlapped
        gains[ok] *= np.sqrt(target[ok] / real[ok])
        shaped = out * _gain_curve(events, gains, length)
    return shaped, clipped


def build_excitation(track: TargetTrack, cb: Codebook | None = None, mode: str = CODEBOOK,
                     seed: int = 0, energy_passes: int = ENERGY_PASSES) -> tuple[Waveform, SelectionReport]:
    """Voiced frames (codebook entries or pulses) overlap-added, unvoiced spans noise-filled.

    Unvoiced spans overwrite whatever the voiced frames left there, so each
    span carries exactly its target energy.
    """
    if mode not in (CODEBOOK, PULSE):
        raise InvalidArgument(f"unknown excitation mode {mode!r}")
    voiced = [e for e in track.events if e.voiced]
    if mode == CODEBOOK and voiced and cb is None:
        raise InvalidArgument("codebook mode needs a codebook")
    report = SelectionReport()
    placed = []
    for e in voiced:
        if mode == CODEBOOK:
            i, dist = select(cb, e.target_rn)
            payload = cb.frames[i]
            frame = adapt(payload, e.period, e.energy)
            report.records.append(Selection(i, dist, e.period / payload.period))
        else:
            frame = pulse_frame(e.period, e.energy)
        placed.append((Frame(e.sign * frame.samples, frame.anchor) if e.sign < 0 else frame, e.position))
    out, report.clipped = _match_energies(placed, voiced, track.total_length, energy_passes)
    if report.clipped:
        log.warning("%d frame(s) clipped at buffer edges", report.clipped)
    out *= track.polarity

    for j, (a, b, energy) in enumerate(track.unvoiced_spans()):
        out[a:b] = noise_fill(b - a, energy, [seed, j])
    return Waveform(out, track.sample_rate), report
