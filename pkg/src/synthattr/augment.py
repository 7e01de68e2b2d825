"""Seeded parametric degradations: noise, reverberation, lossy-codec simulation.

Every transform is a pure function of (clip, parameters, seed) and preserves
length, sample rate and label.
"""

from __future__ import annotations

import hashlib
import math
import shlex
import subprocess
import tempfile
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import TYPE_CHECKING, Optional, Sequence

import numpy as np
from scipy.signal import fftconvolve

from .audio import AudioClip, load_wav, resample, write_wav
from .errors import BandwidthAboveNyquist, ConfigError, SilentClip

if TYPE_CHECKING:
    from .pipeline.manifest import DatasetManifest

# ln(10**3): amplitude decays 60 dB at t = rt60
RT60_DECAY = 6.91

SNR_RANGE_DB = (5.0, 30.0)
RT60_RANGE_S = (0.1, 0.7)
BANDWIDTH_RANGE_HZ = (4000.0, 8000.0)
BIT_DEPTHS = (8, 12, 16)
CODEC_TAPS = 129

KINDS = ("noise", "reverb", "codec")


@dataclass(frozen=True)
class AugmentationSpec:
    """One degradation. Parameters left as None are drawn per clip from the
    default ranges using the clip's derived seed."""

    kind: str
    snr_db: Optional[float] = None
    rt60_seconds: Optional[float] = None
    bandwidth_hz: Optional[float] = None
    bit_depth: Optional[int] = None
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown augmentation kind {self.kind!r}")

    def resolved(self, seed: int, sample_rate: int) -> "AugmentationSpec":
        """Fill unset parameters from the default ranges, deterministically."""
        rng = np.random.default_rng(seed)
        changes = {"seed": seed}
        if self.kind == "noise" and self.snr_db is None:
            changes["snr_db"] = float(rng.uniform(*SNR_RANGE_DB))
        elif self.kind == "reverb" and self.rt60_seconds is None:
            changes["rt60_seconds"] = float(rng.uniform(*RT60_RANGE_S))
        elif self.kind == "codec":
            if self.bandwidth_hz is None:
                hi = min(BANDWIDTH_RANGE_HZ[1], sample_rate / 2)
                changes["bandwidth_hz"] = float(rng.uniform(BANDWIDTH_RANGE_HZ[0], hi))
            if self.bit_depth is None:
                changes["bit_depth"] = int(rng.choice(BIT_DEPTHS))
        return replace(self, **changes)

    def to_tag(self) -> str:
        parts = [self.kind]
        for f in fields(self):
            if f.name == "kind":
                continue
            value = getattr(self, f.name)
            if value is not None:
                parts.append(f"{f.name}={value!r}")
        return ";".join(parts)

    @classmethod
    def from_tag(cls, tag: str) -> "AugmentationSpec":
        kind, *rest = tag.split(";")
        kwargs = {}
        for item in rest:
            key, value = item.split("=", 1)
            if key == "bit_depth" or key == "seed":
                kwargs[key] = int(value)
            else:
                kwargs[key] = float(value)
        return cls(kind, **kwargs)


def default_specs() -> list:
    """One randomized spec per kind: the three-copy expansion."""
    return [AugmentationSpec(kind) for kind in KINDS]


def derive_seed(master_seed: int, source_id: str, index: int) -> int:
    digest = hashlib.sha256(f"{master_seed}|{source_id}|{index}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


def signal_power(x: np.ndarray) -> float:
    return float(np.mean(np.square(x)))


def measure_snr_db(clean: np.ndarray, degraded: np.ndarray) -> float:
    noise = np.asarray(degraded) - np.asarray(clean)
    return 10.0 * math.log10(signal_power(clean) / signal_power(noise))


def add_noise(clip: AudioClip, snr_db: float, seed: int, clamp: bool = True) -> AudioClip:
    """Add white Gaussian noise at exactly ``snr_db`` (before clamping).

    ``snr_db = inf`` is the pass-through sentinel.
    """
    if math.isinf(snr_db) and snr_db > 0:
        return clip
    p_signal = signal_power(clip.samples)
    if p_signal == 0.0:
        raise SilentClip(f"clip {clip.source_id!r} has zero power; SNR undefined")
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal(len(clip))
    noise *= math.sqrt(p_signal / 10.0 ** (snr_db / 10.0) / signal_power(noise))
    out = clip.samples + noise
    if clamp:
        out = np.clip(out, -1.0, 1.0)
    return clip.with_samples(out)


def room_impulse_response(rt60_seconds: float, sample_rate: int, seed: int) -> np.ndarray:
    """Gaussian noise under exp(-6.91 t / rt60), truncated at rt60."""
    if rt60_seconds < 0:
        raise ConfigError(f"rt60 must be >= 0, got {rt60_seconds}")
    n = int(round(rt60_seconds * sample_rate))
    if n <= 1:
        return np.ones(1)
    t = np.arange(n) / sample_rate
    rng = np.random.default_rng(seed)
    return rng.standard_normal(n) * np.exp(-RT60_DECAY * t / rt60_seconds)


def add_reverb(clip: AudioClip, rt60_seconds: float, seed: int) -> AudioClip:
    """Convolve with a synthetic RIR and restore the input's peak amplitude."""
    rir = room_impulse_response(rt60_seconds, clip.sample_rate, seed)
    if rir.shape[0] == 1:
        return clip
    wet = fftconvolve(clip.samples, rir)[: len(clip)]
    peak_in = np.max(np.abs(clip.samples))
    peak_out = np.max(np.abs(wet))
    if peak_out > 0:
        wet = wet * (peak_in / peak_out)
    return clip.with_samples(wet)


def lowpass_fir(cutoff_hz: float, sample_rate: int, taps: int = CODEC_TAPS) -> np.ndarray:
    """Hamming-windowed sinc, unit DC gain. At Nyquist this is a unit impulse."""
    fc = cutoff_hz / sample_rate
    n = np.arange(taps) - (taps - 1) / 2
    h = 2 * fc * np.sinc(2 * fc * n) * np.hamming(taps)
    return h / h.sum()


def quantize(x: np.ndarray, bit_depth: int) -> np.ndarray:
    half = 2 ** (bit_depth - 1)
    return np.clip(np.rint(x * half), -half, half - 1) / half


def simulate_codec(clip: AudioClip, bandwidth_hz: float, bit_depth: int) -> AudioClip:
    """Low-pass at ``bandwidth_hz`` then requantize to ``bit_depth`` bits."""
    nyquist = clip.sample_rate / 2
    if bandwidth_hz > nyquist:
        raise BandwidthAboveNyquist(f"bandwidth {bandwidth_hz} Hz exceeds Nyquist {nyquist} Hz")
    if bandwidth_hz <= 0:
        raise ConfigError("bandwidth must be positive")
    if not 2 <= bit_depth <= 16:
        raise ConfigError(f"bit_depth must be in [2, 16], got {bit_depth}")
    h = lowpass_fir(bandwidth_hz, clip.sample_rate)
    filtered = np.convolve(clip.samples, h, mode="same") if bandwidth_hz < nyquist else clip.samples
    return clip.with_samples(quantize(filtered, bit_depth))


@dataclass(frozen=True)
class ExternalCodec:
    """Round-trip through a real encoder/decoder pair.

    Commands are templates with ``{in}`` and ``{out}`` placeholders, e.g.
    ``lame --quiet -b 64 {in} {out}`` and ``lame --quiet --decode {in} {out}``.
    """

    encode_cmd: str
    decode_cmd: str
    suffix: str = ".mp3"

    def __call__(self, clip: AudioClip) -> AudioClip:
        with tempfile.TemporaryDirectory() as tmp:
            src = Path(tmp) / "in.wav"
            enc = Path(tmp) / f"enc{self.suffix}"
            dec = Path(tmp) / "dec.wav"
            write_wav(src, clip)
            for template, a, b in ((self.encode_cmd, src, enc), (self.decode_cmd, enc, dec)):
                cmd = template.format(**{"in": shlex.quote(str(a)), "out": shlex.quote(str(b))})
                subprocess.run(cmd, shell=True, check=True, capture_output=True)
            out = resample(load_wav(dec), clip.sample_rate).samples
        # encoder delay and frame padding change the length; restore it
        if len(out) < len(clip):
            out = np.pad(out, (0, len(clip) - len(out)))
        return clip.with_samples(out[: len(clip)])


def apply_spec(clip: AudioClip, spec: AugmentationSpec, codec: Optional[ExternalCodec] = None) -> AudioClip:
    spec = spec.resolved(spec.seed, clip.sample_rate)
    if spec.kind == "noise":
        return add_noise(clip, spec.snr_db, spec.seed)
    if spec.kind == "reverb":
        return add_reverb(clip, spec.rt60_seconds, spec.seed)
    if codec is not None:
        return codec(clip)
    return simulate_codec(clip, spec.bandwidth_hz, spec.bit_depth)


def expand_with_augmentations(
    manifest: "DatasetManifest",
    specs: Sequence[AugmentationSpec],
    sample_rate: int = 16000,
) -> "DatasetManifest":
    """Keep every entry and append one augmented variant per spec.

    Variant paths are virtual (``<source>@aug<i>``); the aug tag records the
    fully resolved spec so the variant can be rebuilt from its source.
    """
    from .pipeline.manifest import ManifestEntry

    if not specs:
        raise ConfigError("at least one augmentation spec is required")
    originals = [e for e in manifest.entries if not e.is_augmented]
    added = []
    for entry in originals:
        for i, spec in enumerate(specs):
            seed = derive_seed(manifest.seed, entry.relative_path, i)
            resolved = spec.resolved(seed, sample_rate)
            added.append(
                ManifestEntry(
                    relative_path=f"{entry.relative_path}@aug{i}",
                    label=entry.label,
                    split=entry.split,
                    aug_tag=resolved.to_tag(),
                )
            )
    return manifest.with_entries(list(manifest.entries) + added)
