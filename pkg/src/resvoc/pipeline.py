"""Analysis, codebook training and copy-synthesis."""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from . import codebook as cbk
from .codebook import Codebook, ResidualFrame, extract_frames, rn, rn_matrix
from .dsp import Waveform
from .eigen import PcaModel, fit_pca
from .envelope import EnvelopeTrack, estimate_envelope, inverse_filter, synth_filter
from .errors import InvalidArgument
from .excitation import CODEBOOK, PULSE, Event, SelectionReport, TargetTrack, build_excitation
from .metrics import compare
from .pitchmarks import F0Track, GciList, detect_gci, estimate_f0

log = logging.getLogger(__name__)

MODES = ("full", "compressed", "pulse")


@dataclass(frozen=True)
class Config:
    sample_rate: int = 16000
    f_min: float = 60.0
    f_max: float = 400.0
    f0_hop_ms: float = 10.0
    f0_window_ms: float = 40.0
    voicing_threshold: float = 0.3
    lpc_order: int = 24
    lpc_window_ms: float = 25.0
    unvoiced_hop_ms: float = 5.0
    gci_search: float = 0.3
    energy_floor_db: float = -60.0

    def ms(self, value: float) -> int:
        return int(round(value * self.sample_rate / 1000))


@dataclass
class Analysis:
    track: TargetTrack
    envelope: EnvelopeTrack
    residual: Waveform
    gcis: GciList
    f0: F0Track
    frames: list[ResidualFrame]

    def voiced_mask(self) -> np.ndarray:
        return voiced_mask(self.track)


def voiced_mask(track: TargetTrack) -> np.ndarray:
    bounds = track.cell_bounds()
    mask = np.zeros(track.total_length, bool)
    for i, e in enumerate(track.events):
        if e.voiced:
            mask[bounds[i]:bounds[i + 1]] = True
    return mask


def analyze(w: Waveform, config: Config = Config(), source: str = "") -> Analysis:
    """F0, GCIs, pitch-synchronous envelope, residual and the target track.

    Envelope analysis positions are the GCIs in voiced stretches and a
    fixed grid elsewhere; the same positions become the track's events.
    """
    if w.sample_rate != config.sample_rate:
        raise InvalidArgument(f"expected {config.sample_rate} Hz input, got {w.sample_rate} Hz")
    n = len(w)
    order = config.lpc_order
    win = max(config.ms(config.lpc_window_ms), 2 * order)
    hop = config.ms(config.unvoiced_hop_ms)

    f0t = estimate_f0(w, config.f_min, config.f_max, config.f0_hop_ms, config.f0_window_ms,
                      config.voicing_threshold)
    grid = np.arange(hop // 2, n, hop)
    if len(grid) == 0:
        grid = np.array([n // 2])
    first = inverse_filter(w, estimate_envelope(w, grid, order, win))
    detected = detect_gci(first, w, f0t, config.gci_search).positions
    periods = f0t.period_at(detected) if len(detected) else np.zeros(0, np.int64)
    fits = np.array([cbk.frame_fits(g, t, n) for g, t in zip(detected.tolist(), periods.tolist())], bool)
    gcis = GciList(detected[fits] if len(detected) else detected)
    periods = periods[fits] if len(detected) else periods

    covered = np.zeros(n, bool)
    for g, t in zip(gcis.positions.tolist(), periods.tolist()):
        covered[g - t:g + t] = True
    unvoiced_pos = grid[~covered[grid]]
    positions = np.union1d(gcis.positions, unvoiced_pos)

    env = estimate_envelope(w, positions, order, win)
    residual = inverse_filter(w, env)
    peaks = residual.samples[gcis.positions]
    polarity = -1 if peaks.sum() > 0 else 1
    frames, _ = extract_frames(residual, gcis, f0t, source, polarity)

    by_pos = {int(g): f for g, f in zip(gcis.positions.tolist(), frames)}
    bounds = np.concatenate([[0], (positions[:-1] + positions[1:]) // 2, [n]])
    r2 = residual.samples ** 2
    events = []
    kept_frames = []
    for i, p in enumerate(positions.tolist()):
        f = by_pos.get(p)
        if f is not None and f.energy > 0:
            events.append(Event(p, True, f.period, f.energy, rn(f), f.sign))
            kept_frames.append(f)
        else:
            a, b = bounds[i], bounds[i + 1]
            events.append(Event(p, False, 0, float(np.sum(r2[a:b]))))
    track = TargetTrack(tuple(events), n, w.sample_rate, polarity)
    return Analysis(track, env, residual, gcis, f0t, kept_frames)


@dataclass
class TrainResult:
    full: Codebook
    compressed: Codebook
    pca: PcaModel | None
    distortion: list[float] = field(default_factory=list)
    frame_count: int = 0


def pool_frames(corpus, config: Config = Config(), names=None) -> list[ResidualFrame]:
    """Analyze every utterance and pool its frames above the energy floor."""
    frames: list[ResidualFrame] = []
    for i, w in enumerate(corpus):
        name = names[i] if names is not None else f"utt{i:05d}"
        frames.extend(analyze(w, config, name).frames)
    if frames:
        energies = np.array([f.energy for f in frames])
        floor = np.median(energies) * 10 ** (config.energy_floor_db / 10)
        frames = [f for f, e in zip(frames, energies) if e > floor]
    return frames


def train(corpus, k: int = 100, n_closest: int = 10, seed: int = 0, config: Config = Config(),
          names=None) -> TrainResult:
    """Full and compressed codebooks plus a PCA model from a list of waveforms."""
    frames = pool_frames(corpus, config, names)
    if len(frames) < max(k, n_closest, 1):
        raise InvalidArgument(f"corpus yields {len(frames)} frames; need at least {max(k, n_closest, 1)}")
    keys = rn_matrix(frames)
    km = cbk.kmeans(keys, k, seed)
    pca = fit_pca(keys) if len(keys) > cbk.RN_SIZE else None
    full = cbk.full_codebook(frames, config.sample_rate, keys).with_pca(pca)
    compressed = cbk.compress(km.centroids, frames, n_closest, config.sample_rate, keys).with_pca(pca)
    log.info("trained on %d frames; k-means converged after %d iterations", len(frames), km.iterations)
    return TrainResult(full, compressed, pca, km.distortion, len(frames))


@dataclass
class MetricsReport:
    segmental_snr_db: float = 0.0
    voiced_segmental_snr_db: float = 0.0
    log_spectral_distortion_db: float = 0.0
    mean_rn_selection_error: float = 0.0
    energy_hole_count: int = 0
    voiced_frame_count: int = 0
    unvoiced_span_count: int = 0

    def as_dict(self) -> dict:
        return asdict(self)

    def to_text(self) -> str:
        lines = []
        for key, value in asdict(self).items():
            lines.append(f"{key}\t{value:.6f}" if isinstance(value, float) else f"{key}\t{value}")
        return "\n".join(lines) + "\n"


def compare_metrics(ref: Waveform, test: Waveform, voiced: np.ndarray | None = None) -> MetricsReport:
    m = compare(ref, test, voiced)
    return MetricsReport(
        segmental_snr_db=m["segmental_snr_db"],
        voiced_segmental_snr_db=m.get("voiced_segmental_snr_db", 0.0),
        log_spectral_distortion_db=m["log_spectral_distortion_db"],
    )


def synthesize(track: TargetTrack, env: EnvelopeTrack, cb: Codebook | None, mode: str = CODEBOOK,
               seed: int = 0) -> tuple[Waveform, SelectionReport]:
    excitation, report = build_excitation(track, cb, mode, seed)
    return synth_filter(excitation, env), report


def copy_synthesis(w: Waveform, cb: Codebook | None, mode: str, seed: int = 0,
                   config: Config = Config()) -> tuple[Waveform, MetricsReport]:
    """Analyze ``w`` and rebuild it with codebook or pulse excitation."""
    if mode not in MODES:
        raise InvalidArgument(f"mode must be one of {MODES}, got {mode!r}")
    if mode != "pulse":
        if cb is None:
            raise InvalidArgument(f"mode {mode!r} needs a codebook")
        if cb.kind != mode:
            raise InvalidArgument(f"mode {mode!r} given a {cb.kind} codebook")
        if cb.sample_rate != w.sample_rate:
            raise InvalidArgument("codebook and waveform sample rates differ")
    a = analyze(w, config)
    out, sel = synthesize(a.track, a.envelope, cb, PULSE if mode == "pulse" else CODEBOOK, seed)
    report = compare_metrics(w, out, a.voiced_mask())
    report.mean_rn_selection_error = sel.mean_distance
    report.energy_hole_count = sel.energy_holes
    report.voiced_frame_count = sum(1 for e in a.track.events if e.voiced)
    report.unvoiced_span_count = len(a.track.unvoiced_spans())
    return out, report
