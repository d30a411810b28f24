"""Minimal RIFF/WAVE reader and PCM16 writer for mono audio.

Reads 16-bit PCM and 32-bit IEEE float (plain or WAVE_FORMAT_EXTENSIBLE).
Every parse error carries the byte offset where the problem was found.
"""
from __future__ import annotations

import logging
import struct
from math import gcd
from pathlib import Path

import numpy as np
from scipy.signal import resample_poly

from ..dsp import Waveform
from ..errors import WavError

log = logging.getLogger(__name__)

PCM = 0x0001
IEEE_FLOAT = 0x0003
EXTENSIBLE = 0xFFFE
DEFAULT_RATE = 16000


def _chunks(data: bytes):
    """Yield ``(chunk_id, offset_of_body, body)`` for every top-level chunk."""
    if len(data) < 12:
        raise WavError(f"byte 0: file is {len(data)} bytes, too short for a RIFF header")
    if data[:4] != b"RIFF":
        raise WavError(f"byte 0: expected 'RIFF', found {data[:4]!r}")
    if data[8:12] != b"WAVE":
        raise WavError(f"byte 8: expected 'WAVE', found {data[8:12]!r}")
    pos = 12
    while pos < len(data):
        if pos + 8 > len(data):
            raise WavError(f"byte {pos}: truncated chunk header ({len(data) - pos} of 8 bytes)")
        cid = data[pos:pos + 4]
        size, = struct.unpack_from("<I", data, pos + 4)
        body = pos + 8
        if body + size > len(data):
            raise WavError(f"byte {pos}: chunk {cid.decode('latin-1')!r} declares {size} bytes "
                           f"but only {len(data) - body} remain")
        yield cid, body, data[body:body + size]
        pos = body + size + (size & 1)


def parse_wav(data: bytes) -> tuple[np.ndarray, int]:
    """Decode WAV bytes into float samples in [-1, 1] and the sample rate."""
    fmt = None
    fmt_at = None
    samples = None
    for cid, at, body in _chunks(data):
        if cid == b"fmt ":
            if len(body) < 16:
                raise WavError(f"byte {at}: 'fmt ' chunk is {len(body)} bytes, need at least 16")
            tag, channels, rate, _, _, bits = struct.unpack_from("<HHIIHH", body)
            if tag == EXTENSIBLE:
                if len(body) < 26:
                    raise WavError(f"byte {at}: extensible 'fmt ' chunk too short for its sub-format")
                tag, = struct.unpack_from("<H", body, 24)
            fmt, fmt_at = (tag, channels, rate, bits), at
        elif cid == b"data":
            if fmt is None:
                raise WavError(f"byte {at - 8}: 'data' chunk before the 'fmt ' chunk")
            tag, channels, rate, bits = fmt
            if channels != 1:
                raise WavError(f"byte {fmt_at}: {channels} channels; only mono input is supported")
            if tag == PCM and bits == 16:
                samples = np.frombuffer(body[:len(body) // 2 * 2], dtype="<i2").astype(np.float64) / 32768.0
            elif tag == IEEE_FLOAT and bits == 32:
                samples = np.frombuffer(body[:len(body) // 4 * 4], dtype="<f4").astype(np.float64)
            else:
                raise WavError(f"byte {fmt_at}: unsupported codec (format tag {tag:#06x}, {bits} bits); "
                               "expected 16-bit PCM or 32-bit float")
    if fmt is None:
        raise WavError(f"byte {len(data)}: missing 'fmt ' chunk")
    if samples is None:
        raise WavError(f"byte {len(data)}: missing 'data' chunk")
    return samples, fmt[2]


def read_wav(path, sample_rate: int = DEFAULT_RATE) -> Waveform:
    """Read a mono WAV file, resampling to ``sample_rate`` when needed."""
    samples, rate = parse_wav(Path(path).read_bytes())
    if rate <= 0:
        raise WavError("byte 24: sample rate must be positive")
    if rate != sample_rate:
        log.warning("%s: resampling %d Hz input to %d Hz", path, rate, sample_rate)
        g = gcd(rate, sample_rate)
        samples = resample_poly(samples, sample_rate // g, rate // g)
    return Waveform(samples, sample_rate)


def wav_bytes(w: Waveform) -> tuple[bytes, int]:
    """Encode as 16-bit PCM; returns the bytes and the number of clipped samples."""
    scaled = np.round(np.asarray(w.samples) * 32768.0)
    clipped = int(np.count_nonzero((scaled > 32767) | (scaled < -32768)))
    pcm = np.clip(scaled, -32768, 32767).astype("<i2").tobytes()
    header = struct.pack("<4sI4s4sIHHIIHH4sI", b"RIFF", 36 + len(pcm), b"WAVE", b"fmt ", 16, PCM, 1,
                         w.sample_rate, 2 * w.sample_rate, 2, 16, b"data", len(pcm))
    return header + pcm, clipped


def write_wav(path, w: Waveform) -> int:
    """Write ``w`` as mono PCM16 and return how many samples were clipped."""
    data, clipped = wav_bytes(w)
    Path(path).write_bytes(data)
    if clipped:
        log.warning("%s: %d sample(s) clipped to the 16-bit range", path, clipped)
    return clipped
