"""Pitch-synchronous residual frames, RN signatures, K-means and codebooks.

An RN ("resampled and normalized") frame is the 20-sample, unit-energy
low-frequency signature of a residual frame. All distances between frames
are mean squared errors between their RN signatures.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from .dsp import Frame, Waveform, frame_energy, hanning, resample_frame
from .errors import DegenerateFrameError, InvalidArgument
from .pitchmarks import F0Track, GciList

RN_SIZE = 20

FULL = "full"
COMPRESSED = "compressed"


@dataclass(frozen=True, eq=False)
class ResidualFrame:
    samples: np.ndarray
    period: int
    energy: float
    source_id: tuple[str, int] = ("", 0)
    # Sign that turned the (polarity-corrected) source residual into these
    # samples; -1 when the frame was flipped to put its dominant peak negative.
    sign: int = 1

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if len(samples) != 2 * self.period:
            raise InvalidArgument(f"frame length {len(samples)} != 2 * period {self.period}")
        if self.sign not in (1, -1):
            raise InvalidArgument("frame sign must be +1 or -1")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "period", int(self.period))
        object.__setattr__(self, "energy", float(self.energy))

    def __len__(self):
        return len(self.samples)

    def as_frame(self) -> Frame:
        return Frame(self.samples, self.period)


@dataclass(frozen=True, eq=False)
class Codebook:
    keys: np.ndarray
    frames: tuple[ResidualFrame, ...]
    kind: str
    sample_rate: int
    k: int = 0
    n_closest: int = 0
    digest: bytes = b"\0" * 32
    pca: object = field(default=None)

    def __post_init__(self):
        keys = np.asarray(self.keys, dtype=np.float64).reshape(-1, RN_SIZE)
        frames = tuple(self.frames)
        if len(frames) == 0:
            raise InvalidArgument("a codebook needs at least one entry")
        if len(keys) != len(frames):
            raise InvalidArgument("one key per payload frame required")
        if self.kind not in (FULL, COMPRESSED):
            raise InvalidArgument(f"unknown codebook kind {self.kind!r}")
        if self.kind == COMPRESSED and len(frames) != self.k:
            raise InvalidArgument(f"compressed codebook must hold k={self.k} entries, has {len(frames)}")
        keys.setflags(write=False)
        object.__setattr__(self, "keys", keys)
        object.__setattr__(self, "frames", frames)

    def __len__(self):
        return len(self.frames)

    def entry(self, i: int) -> tuple[np.ndarray, ResidualFrame]:
        return self.keys[i], self.frames[i]

    def with_pca(self, model) -> "Codebook":
        return Codebook(self.keys, self.frames, self.kind, self.sample_rate, self.k,
                        self.n_closest, self.digest, model)


def extract_frames(residual: Waveform, gcis: GciList, f0t: F0Track, source: str = "",
                   polarity: int = 1) -> tuple[list[ResidualFrame], int]:
    """Cut a Hann-windowed, two-period frame around every GCI.

    Returns the frames and the number of GCIs skipped because their frame
    would cross the signal edge. ``polarity`` multiplies every frame; a frame
    whose dominant sample is still positive is then negated (canonical
    polarity) and records ``sign = -1``.
    """
    x = residual.samples
    n = len(x)
    frames = []
    skipped = 0
    positions = gcis.positions
    periods = f0t.period_at(positions) if len(positions) else np.zeros(0, np.int64)
    windows: dict[int, np.ndarray] = {}
    for idx, (g, t) in enumerate(zip(positions.tolist(), periods.tolist())):
        if t < 1 or g - t < 0 or g + t > n:
            skipped += 1
            continue
        if t not in windows:
            windows[t] = hanning(2 * t).samples
        seg = polarity * x[g - t:g + t] * windows[t]
        sign = -1 if seg[np.argmax(np.abs(seg))] > 0 else 1
        if sign < 0:
            seg = -seg
        frames.append(ResidualFrame(seg, t, float(np.dot(seg, seg)), (source, idx), sign))
    return frames, skipped


def frame_fits(g: int, t: int, n: int) -> bool:
    return t >= 1 and g - t >= 0 and g + t <= n


def rn(f) -> np.ndarray:
    """Resample to 20 samples, then scale to unit energy."""
    samples = f.samples if isinstance(f, (ResidualFrame, Frame)) else np.asarray(f, dtype=np.float64)
    y = resample_frame(samples, RN_SIZE).samples
    e = frame_energy(y)
    if e == 0.0:
        raise DegenerateFrameError("zero-energy frame has no RN signature")
    return y / np.sqrt(e)


def rn_distance(a, b) -> float:
    d = np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)
    return float(np.dot(d, d) / RN_SIZE)


def _sq_distances(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    # cdist sums the coordinates sequentially in a single-threaded C loop, so
    # the result does not depend on BLAS threading.
    return cdist(points, centroids, "sqeuclidean")


@dataclass
class KMeansResult:
    centroids: np.ndarray
    labels: np.ndarray
    distortion: list[float]
    iterations: int


def _kmeanspp(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = len(points)
    chosen = [int(rng.integers(n))]
    closest = _sq_distances(points, points[chosen]).ravel()
    for _ in range(1, k):
        total = closest.sum()
        if total <= 0:
            # All remaining points coincide with a chosen centroid.
            pick = next(i for i in range(n) if i not in set(chosen))
        else:
            pick = int(np.searchsorted(np.cumsum(closest), rng.uniform(0, total), side="right"))
            pick = min(pick, n - 1)
        chosen.append(pick)
        closest = np.minimum(closest, _sq_distances(points, points[[pick]]).ravel())
    return points[chosen].copy()


def kmeans(points, k: int, seed: int = 0, max_iter: int = 300) -> KMeansResult:
    """Lloyd's algorithm with k-means++ seeding.

    Runs until the assignment stops changing or ``max_iter`` is reached.
    Empty clusters are re-seeded with the point farthest from its centroid.
    ``distortion`` records the mean squared distance to the assigned
    centroid after every assignment step.
    """
    points = np.asarray(points, dtype=np.float64)
    n = len(points)
    if k < 1:
        raise InvalidArgument(f"k must be positive, got {k}")
    if n < k:
        raise InvalidArgument(f"need at least k={k} points, got {n}")
    rng = np.random.default_rng(seed)
    centroids = _kmeanspp(points, k, rng)

    labels = None
    history: list[float] = []
    it = 0
    for it in range(1, max_iter + 1):
        d = _sq_distances(points, centroids)
        new = np.argmin(d, axis=1)
        dist = d[np.arange(n), new]
        counts = np.bincount(new, minlength=k)
        while np.any(counts == 0):
            empty = int(np.flatnonzero(counts == 0)[0])
            far = int(np.argmax(np.where(counts[new] > 1, dist, -1.0)))
            centroids[empty] = points[far]
            counts[new[far]] -= 1
            counts[empty] += 1
            new[far] = empty
            dist[far] = 0.0
        history.append(float(dist.mean()))
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        for c in range(k):
            members = points[labels == c]
            if len(members):
                centroids[c] = members.mean(axis=0)
    return KMeansResult(centroids, labels, history, it)


def corpus_digest(frames) -> bytes:
    h = hashlib.sha256()
    for f in frames:
        h.update(np.int64(f.period).tobytes())
        h.update(np.ascontiguousarray(f.samples, dtype="<f8").tobytes())
    return h.digest()


def rn_matrix(frames) -> np.ndarray:
    return np.array([rn(f) for f in frames]).reshape(-1, RN_SIZE)


def full_codebook(frames, sample_rate: int = 16000, keys: np.ndarray | None = None) -> Codebook:
    """One entry per frame."""
    frames = list(frames)
    if not frames:
        raise InvalidArgument("cannot build a codebook from zero frames")
    keys = rn_matrix(frames) if keys is None else keys
    return Codebook(keys, tuple(frames), FULL, sample_rate, k=len(frames), n_closest=0,
                    digest=corpus_digest(frames))


def compress(centroids, frames, n_closest: int = 10, sample_rate: int = 16000,
             keys: np.ndarray | None = None) -> Codebook:
    """Pick one real frame per centroid: the longest among its N nearest.

    Ties on period go to the smaller RN distance, then the lower source id.
    """
    frames = list(frames)
    centroids = np.asarray(centroids, dtype=np.float64).reshape(-1, RN_SIZE)
    if len(frames) < n_closest:
        raise InvalidArgument(f"need at least N={n_closest} frames, got {len(frames)}")
    keys = rn_matrix(frames) if keys is None else keys
    dist = _sq_distances(keys, centroids) / RN_SIZE
    periods = np.array([f.period for f in frames])
    chosen = []
    for c in range(len(centroids)):
        order = np.lexsort((np.arange(len(frames)), dist[:, c]))
        near = order[:n_closest]
        best = min(near.tolist(), key=lambda i: (-periods[i], dist[i, c], frames[i].source_id))
        chosen.append(best)
    return Codebook(keys[chosen], tuple(frames[i] for i in chosen), COMPRESSED, sample_rate,
                    k=len(centroids), n_closest=n_closest, digest=corpus_digest(frames))
