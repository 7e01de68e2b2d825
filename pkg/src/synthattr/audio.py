"""Mono PCM16 clips: WAV I/O, resampling and fixed-length canonicalization."""

from __future__ import annotations

import struct
import wave
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .errors import EmptyClip, EmptyPayload, NotWav, UnsupportedEncoding

CANONICAL_RATE = 16000
PCM16_SCALE = 32768.0

_WAVE_FORMAT_PCM = 0x0001
_WAVE_FORMAT_EXTENSIBLE = 0xFFFE


@dataclass(frozen=True, eq=False)
class AudioClip:
    """A mono waveform.

    ``samples`` is a float64 array in [-1, 1]; ``label`` is a class id in
    0..5 or None for unlabeled clips.
    """

    samples: np.ndarray
    sample_rate: int
    label: Optional[int] = None
    source_id: str = ""

    def __post_init__(self):
        if self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        arr = np.asarray(self.samples, dtype=np.float64)
        if arr.ndim != 1:
            raise ValueError("AudioClip holds a single channel")
        arr.setflags(write=False)
        object.__setattr__(self, "samples", arr)

    def __len__(self) -> int:
        return self.samples.shape[0]

    @property
    def duration(self) -> float:
        return len(self) / self.sample_rate

    def with_samples(self, samples: np.ndarray, **changes) -> "AudioClip":
        return replace(self, samples=samples, **changes)


def _iter_chunks(data: bytes):
    pos = 12
    while pos + 8 <= len(data):
        cid, size = struct.unpack_from("<4sI", data, pos)
        body = data[pos + 8 : pos + 8 + size]
        yield cid, body
        pos += 8 + size + (size & 1)


def load_wav(
    path: Union[str, Path],
    target_rate: Optional[int] = None,
    label: Optional[int] = None,
    source_id: Optional[str] = None,
) -> AudioClip:
    """Read a PCM16 RIFF/WAVE file as a mono clip.

    Channels are averaged. When ``target_rate`` is given the clip is
    resampled to it after decoding.
    """
    path = Path(path)
    data = path.read_bytes()
    if len(data) < 12 or data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise NotWav(f"{path}: missing RIFF/WAVE magic")

    fmt = None
    payload = None
    for cid, body in _iter_chunks(data):
        if cid == b"fmt ":
            fmt = body
        elif cid == b"data":
            payload = body
    if fmt is None or len(fmt) < 16:
        raise NotWav(f"{path}: no fmt chunk")
    tag, channels, rate, _, block_align, bits = struct.unpack_from("<HHIIHH", fmt)
    if tag == _WAVE_FORMAT_EXTENSIBLE and len(fmt) >= 26:
        tag = struct.unpack_from("<H", fmt, 24)[0]
    if tag != _WAVE_FORMAT_PCM or bits != 16:
        raise UnsupportedEncoding(f"{path}: format tag {tag:#x}, {bits} bits; need PCM16")
    if channels < 1:
        raise UnsupportedEncoding(f"{path}: {channels} channels")
    if payload is None:
        raise EmptyPayload(f"{path}: no data chunk")

    n_frames = len(payload) // (2 * channels)
    if n_frames == 0:
        raise EmptyPayload(f"{path}: zero frames")
    ints = np.frombuffer(payload[: n_frames * 2 * channels], dtype="<i2")
    frames = ints.reshape(n_frames, channels).astype(np.float64)
    samples = frames.mean(axis=1) / PCM16_SCALE

    clip = AudioClip(samples, rate, label, source_id if source_id is not None else path.name)
    if target_rate is not None:
        clip = resample(clip, target_rate)
    return clip


def to_pcm16(samples: np.ndarray) -> np.ndarray:
    """Clip to [-1, 1] and quantize to int16 by rounding."""
    scaled = np.rint(np.clip(samples, -1.0, 1.0) * PCM16_SCALE)
    return np.clip(scaled, -32768, 32767).astype("<i2")


def write_wav(path: Union[str, Path], clip: AudioClip) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with wave.open(str(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(clip.sample_rate)
        w.writeframes(to_pcm16(clip.samples).tobytes())
    return path


def resample(clip: AudioClip, target_rate: int) -> AudioClip:
    """Linear-interpolation resampling; no anti-alias filtering."""
    if target_rate <= 0:
        raise ValueError(f"target_rate must be positive, got {target_rate}")
    if target_rate == clip.sample_rate:
        return clip
    n_in = len(clip)
    n_out = int(round(n_in * target_rate / clip.sample_rate))
    positions = np.arange(n_out) * (clip.sample_rate / target_rate)
    out = np.interp(positions, np.arange(n_in), clip.samples)
    return clip.with_samples(out, sample_rate=target_rate)


def normalize_length(clip: AudioClip, target_seconds: float) -> AudioClip:
    """Tile short clips and trim long ones to exactly ``target_seconds``."""
    if target_seconds <= 0:
        raise ValueError(f"target_seconds must be positive, got {target_seconds}")
    n = len(clip)
    if n == 0:
        raise EmptyClip(f"clip {clip.source_id!r} has no samples")
    target = int(round(target_seconds * clip.sample_rate))
    if n == target:
        return clip
    if n > target:
        return clip.with_samples(clip.samples[:target])
    reps = -(-target // n)
    return clip.with_samples(np.tile(clip.samples, reps)[:target])
