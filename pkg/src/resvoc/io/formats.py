"""Binary codebook container (RSCB), text target tracks (TRK) and eigen-frame CSV.

RSCB layout, all little-endian::

    "RSCB" u16 version
    u32 sample_rate, u8 kind, u32 k, u32 N, u32 entry_count, 32-byte corpus digest, u8 has_pca
    entry_count x [u16 period, f64 energy, 20 x f64 key, u32 payload_length, payload x f32]
    optional PCA block: 20 x f64 mean, 400 x f64 basis (row-major), 20 x f64 eigenvalues
    u32 CRC-32 of everything above

Payload samples are stored in single precision; keys, energies and the PCA
model stay in double precision.
"""
from __future__ import annotations

import csv
import struct
import zlib
from pathlib import Path

import numpy as np

from ..codebook import COMPRESSED, FULL, RN_SIZE, Codebook, ResidualFrame
from ..eigen import PcaModel
from ..envelope import EnvelopeTrack
from ..errors import BadMagicError, ChecksumError, FormatError, InvalidArgument, TruncatedError, VersionError
from ..excitation import Event, TargetTrack

MAGIC = b"RSCB"
VERSION = 1
KINDS = (FULL, COMPRESSED)

_HEADER = struct.Struct("<IBIII32sB")
_ENTRY_HEAD = struct.Struct("<Hd")
_U32 = struct.Struct("<I")

TRACK_MAGIC = "RSTRK"
TRACK_VERSION = 1


# ----------------------------------------------------------------------
# Codebooks
# ----------------------------------------------------------------------

def codebook_bytes(cb: Codebook) -> bytes:
    out = bytearray(MAGIC)
    out += struct.pack("<H", VERSION)
    digest = bytes(cb.digest).ljust(32, b"\0")[:32]
    out += _HEADER.pack(cb.sample_rate, KINDS.index(cb.kind), cb.k, cb.n_closest, len(cb),
                        digest, cb.pca is not None)
    for key, f in zip(cb.keys, cb.frames):
        if not 0 < f.period < 65536:
            raise InvalidArgument(f"period {f.period} does not fit the file format")
        out += _ENTRY_HEAD.pack(f.period, f.energy)
        out += np.ascontiguousarray(key, dtype="<f8").tobytes()
        out += _U32.pack(len(f.samples))
        out += np.ascontiguousarray(f.samples, dtype="<f4").tobytes()
    if cb.pca is not None:
        for arr in (cb.pca.mean, cb.pca.basis, cb.pca.eigenvalues):
            out += np.ascontiguousarray(arr, dtype="<f8").tobytes()
    out += _U32.pack(zlib.crc32(out))
    return bytes(out)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.data):
            raise TruncatedError(f"byte {self.pos}: truncated {what} (need {n} bytes, "
                                 f"{len(self.data) - self.pos} remain)")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: struct.Struct, what: str):
        return fmt.unpack(self.take(fmt.size, what))

    def f64(self, n: int, what: str) -> np.ndarray:
        return np.frombuffer(self.take(8 * n, what), dtype="<f8").astype(np.float64)


def read_codebook_bytes(data: bytes) -> Codebook:
    r = _Reader(data)
    magic = r.take(4, "magic")
    if magic != MAGIC:
        raise BadMagicError(f"byte 0: expected magic {MAGIC!r}, found {magic!r}")
    version, = struct.unpack("<H", r.take(2, "version"))
    if version != VERSION:
        raise VersionError(f"byte 4: unsupported codebook version {version} (expected {VERSION})")
    rate, kind, k, n_closest, count, digest, has_pca = r.unpack(_HEADER, "header")
    if kind >= len(KINDS):
        raise FormatError(f"byte 10: unknown codebook kind {kind}")
    keys = np.empty((count, RN_SIZE))
    frames = []
    for i in range(count):
        at = r.pos
        period, energy = r.unpack(_ENTRY_HEAD, f"entry {i} header")
        keys[i] = r.f64(RN_SIZE, f"entry {i} key")
        length, = r.unpack(_U32, f"entry {i} payload length")
        if length != 2 * period:
            raise FormatError(f"byte {at}: entry {i} payload length {length} != 2 * period {period}")
        payload = np.frombuffer(r.take(4 * length, f"entry {i} payload"), dtype="<f4").astype(np.float64)
        frames.append(ResidualFrame(payload, period, energy, ("", i)))
    pca = None
    if has_pca:
        mean = r.f64(RN_SIZE, "PCA mean")
        basis = r.f64(RN_SIZE * RN_SIZE, "PCA basis").reshape(RN_SIZE, RN_SIZE)
        pca = PcaModel(mean, basis, r.f64(RN_SIZE, "PCA eigenvalues"))
    body_end = r.pos
    stored, = r.unpack(_U32, "checksum")
    if r.pos != len(data):
        raise FormatError(f"byte {r.pos}: {len(data) - r.pos} unexpected trailing bytes")
    if zlib.crc32(data[:body_end]) != stored:
        raise ChecksumError("checksum mismatch: file is corrupted")
    try:
        return Codebook(keys, tuple(frames), KINDS[kind], rate, k, n_closest, digest, pca)
    except InvalidArgument as e:
        raise FormatError(f"inconsistent codebook: {e}") from e


def save_codebook(path, cb: Codebook) -> int:
    """Write ``cb`` and return the file size in bytes."""
    data = codebook_bytes(cb)
    Path(path).write_bytes(data)
    return len(data)


def load_codebook(path) -> Codebook:
    return read_codebook_bytes(Path(path).read_bytes())


# ----------------------------------------------------------------------
# Target tracks
# ----------------------------------------------------------------------

def _g(x: float) -> str:
    return format(float(x), ".17g")


def track_bytes(track: TargetTrack, env: EnvelopeTrack) -> bytes:
    """Text header and one tab-separated line per event, then the envelope in binary."""
    lines = [
        f"{TRACK_MAGIC}\t{TRACK_VERSION}",
        f"sample_rate\t{track.sample_rate}",
        f"total_length\t{track.total_length}",
        f"polarity\t{track.polarity}",
        f"events\t{len(track.events)}",
    ]
    for e in track.events:
        fields = [str(e.position), "1" if e.voiced else "0", str(e.period), _g(e.energy)]
        if e.voiced:
            fields.append(str(e.sign))
            fields.extend(_g(v) for v in e.target_rn)
        lines.append("\t".join(fields))
    blob = (np.ascontiguousarray(env.positions, dtype="<i8").tobytes()
            + np.ascontiguousarray(env.gains, dtype="<f8").tobytes()
            + np.ascontiguousarray(env.coeffs, dtype="<f8").tobytes())
    lines.append(f"envelope\t{env.order}\t{len(env)}\t{len(blob)}")
    return ("\n".join(lines) + "\n").encode("ascii") + blob


def _field(line: bytes, lineno: int, name: str) -> str:
    parts = line.decode("ascii", "replace").split("\t")
    if len(parts) != 2 or parts[0] != name:
        raise FormatError(f"line {lineno}: expected '{name}<TAB>value', found {line[:60]!r}")
    return parts[1]


def _int(text: str, lineno: int) -> int:
    try:
        return int(text)
    except ValueError:
        raise FormatError(f"line {lineno}: not an integer: {text!r}") from None


def parse_track(data: bytes) -> tuple[TargetTrack, EnvelopeTrack]:
    pos = 0
    lineno = 0

    def line() -> bytes:
        nonlocal pos, lineno
        end = data.find(b"\n", pos)
        if end < 0:
            raise TruncatedError(f"line {lineno + 1}: unexpected end of track file")
        out = data[pos:end]
        pos = end + 1
        lineno += 1
        return out

    head = line().decode("ascii", "replace").split("\t")
    if head[0] != TRACK_MAGIC:
        raise BadMagicError(f"line 1: expected {TRACK_MAGIC!r} header, found {head[0]!r}")
    if len(head) != 2 or _int(head[1], 1) != TRACK_VERSION:
        raise VersionError(f"line 1: unsupported track version {head[1:]!r}")
    rate = _int(_field(line(), 2, "sample_rate"), 2)
    total = _int(_field(line(), 3, "total_length"), 3)
    polarity = _int(_field(line(), 4, "polarity"), 4)
    count = _int(_field(line(), 5, "events"), 5)
    events = []
    for _ in range(count):
        parts = line().decode("ascii", "replace").split("\t")
        try:
            voiced = parts[1] == "1"
            if len(parts) != (5 + RN_SIZE if voiced else 4) or parts[1] not in ("0", "1"):
                raise ValueError("wrong field count")
            sign = int(parts[4]) if voiced else 1
            rn = np.array([float(v) for v in parts[5:]]) if voiced else None
            events.append(Event(int(parts[0]), voiced, int(parts[2]), float(parts[3]), rn, sign))
        except (ValueError, IndexError) as e:
            raise FormatError(f"line {lineno}: bad event record ({e})") from None
    tail = line().decode("ascii", "replace").split("\t")
    if len(tail) != 4 or tail[0] != "envelope":
        raise FormatError(f"line {lineno}: expected 'envelope' section header")
    order, n_env, nbytes = (_int(t, lineno) for t in tail[1:])
    if nbytes != n_env * (16 + 8 * order):
        raise FormatError(f"line {lineno}: envelope size {nbytes} inconsistent with {n_env} x order {order}")
    blob = data[pos:]
    if len(blob) < nbytes:
        raise TruncatedError(f"byte {pos}: envelope section has {len(blob)} of {nbytes} bytes")
    if len(blob) > nbytes:
        raise FormatError(f"byte {pos + nbytes}: {len(blob) - nbytes} unexpected trailing bytes")
    positions = np.frombuffer(blob, "<i8", n_env).astype(np.int64)
    gains = np.frombuffer(blob, "<f8", n_env, 8 * n_env).astype(np.float64)
    coeffs = np.frombuffer(blob, "<f8", n_env * order, 16 * n_env).astype(np.float64)
    try:
        track = TargetTrack(tuple(events), total, rate, polarity)
        env = EnvelopeTrack(order, positions, coeffs.reshape(n_env, order), gains)
    except InvalidArgument as e:
        raise FormatError(f"inconsistent track: {e}") from e
    return track, env


def save_track(path, track: TargetTrack, env: EnvelopeTrack) -> None:
    Path(path).write_bytes(track_bytes(track, env))


def load_track(path) -> tuple[TargetTrack, EnvelopeTrack]:
    return parse_track(Path(path).read_bytes())


# ----------------------------------------------------------------------
# Eigen-frames
# ----------------------------------------------------------------------

def write_eigen_csv(path, pca: PcaModel) -> None:
    """One row per eigen-RN frame, in decreasing-variance order."""
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["index", "eigenvalue"] + [f"c{i}" for i in range(RN_SIZE)])
        for i, (val, row) in enumerate(zip(pca.eigenvalues, pca.basis)):
            out.writerow([i, _g(val)] + [_g(v) for v in row])
