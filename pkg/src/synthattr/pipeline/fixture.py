"""Synthetic stand-in corpus with one parametric "synthesizer" per class.

Each class is a source-filter voice: a harmonic glottal source with a
class-specific spectral tilt and odd/even balance, three formant
resonators, and a band of filtered breath noise. Pitch, formant positions,
speaking rate and level vary per clip so the classes overlap in pitch and
loudness and differ only in their synthesis signature.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.signal import butter, lfilter, sosfilt

from ..audio import AudioClip, write_wav
from ..errors import IoFailure
from .manifest import DatasetManifest, ManifestEntry, write_manifest

SAMPLE_RATE = 16000

# mean and std of clip duration in seconds per label
TABLE_I_DURATIONS: Dict[int, Tuple[float, float]] = {
    0: (8.26, 2.75),
    1: (6.43, 2.08),
    2: (6.36, 2.12),
    3: (8.14, 2.56),
    4: (5.62, 1.91),
    5: (6.79, 2.22),
}
MIN_DURATION = 0.5


@dataclass(frozen=True)
class VoiceSignature:
    formants: Tuple[float, float, float]
    bandwidths: Tuple[float, float, float]
    tilt: float  # harmonic amplitude ~ h ** -tilt
    even_gain: float  # relative level of even harmonics
    noise_band: Tuple[float, float]
    noise_db: float  # breath noise level relative to the voiced part
    vibrato_cents: float
    formant_spread: float = 0.06


SIGNATURES: Dict[int, VoiceSignature] = {
    0: VoiceSignature((500, 1500, 2500), (80, 100, 140), 1.0, 1.0, (3000, 6000), -24, 15),
    1: VoiceSignature((700, 1200, 2600), (110, 120, 160), 1.5, 1.0, (1000, 3000), -20, 10),
    2: VoiceSignature((400, 2000, 2800), (70, 110, 150), 0.8, 0.25, (4000, 7000), -28, 20),
    3: VoiceSignature((600, 1700, 3300), (90, 130, 180), 1.2, 1.0, (5000, 7500), -16, 8),
    4: VoiceSignature((450, 1100, 2400), (60, 90, 120), 0.6, 0.7, (2000, 4000), -30, 60),
    5: VoiceSignature((800, 1900, 3000), (120, 150, 200), 1.1, 0.5, (500, 1500), -22, 30, 0.12),
}


def _resonator(freq: float, bandwidth: float, sample_rate: int):
    r = np.exp(-np.pi * bandwidth / sample_rate)
    theta = 2 * np.pi * freq / sample_rate
    a = [1.0, -2 * r * np.cos(theta), r * r]
    return [sum(a)], a  # unit gain at DC


def synthesize_clip(label: int, duration: float, rng: np.random.Generator, sample_rate: int = SAMPLE_RATE) -> np.ndarray:
    sig = SIGNATURES[label]
    n = max(1, int(round(duration * sample_rate)))
    t = np.arange(n) / sample_rate

    f0_base = rng.uniform(90.0, 260.0)
    drift = np.cumsum(rng.standard_normal(n)) / np.sqrt(sample_rate) * 0.05
    vib_rate = rng.uniform(4.0, 6.5)
    cents = sig.vibrato_cents * np.sin(2 * np.pi * vib_rate * t + rng.uniform(0, 2 * np.pi))
    f0 = f0_base * 2.0 ** ((cents / 1200.0) + drift)
    phase = 2 * np.pi * np.cumsum(f0) / sample_rate

    n_harm = int(min(60, (sample_rate / 2 - 500) // (f0_base * 1.1)))
    # sin(h * phase) as Im(z ** h), stepping z ** h by repeated multiplication
    z = np.exp(1j * phase)
    zh = z.copy()
    source = np.zeros(n)
    for h in range(1, n_harm + 1):
        amp = h ** -sig.tilt * (sig.even_gain if h % 2 == 0 else 1.0)
        source += amp * zh.imag
        zh *= z

    voiced = source
    for f, bw in zip(sig.formants, sig.bandwidths):
        f = f * (1.0 + sig.formant_spread * rng.uniform(-1, 1))
        b, a = _resonator(f, bw, sample_rate)
        voiced = lfilter(b, a, voiced)
    voiced /= np.sqrt(np.mean(voiced**2)) + 1e-12

    sos = butter(4, sig.noise_band, btype="bandpass", fs=sample_rate, output="sos")
    breath = sosfilt(sos, rng.standard_normal(n))
    breath *= 10 ** (sig.noise_db / 20) / (np.sqrt(np.mean(breath**2)) + 1e-12)

    # syllable-rate envelope keeps the signal speech-like and non-stationary
    syl_rate = rng.uniform(3.0, 6.0)
    envelope = 0.55 + 0.45 * np.sin(2 * np.pi * syl_rate * t + rng.uniform(0, 2 * np.pi))
    x = (voiced + breath) * envelope

    peak_db = rng.uniform(-14.0, -4.0)
    return x * (10 ** (peak_db / 20) / np.max(np.abs(x)))


def sample_duration(label: int, rng: np.random.Generator, durations: Dict[int, Tuple[float, float]]) -> float:
    mean, std = durations[label]
    return max(MIN_DURATION, rng.normal(mean, std))


def generate_fixture_corpus(
    classes: Sequence[int] = tuple(range(6)),
    per_class: int = 10,
    seed: int = 0,
    out_dir: Union[str, Path, None] = None,
    durations: Optional[Dict[int, Tuple[float, float]]] = None,
    sample_rate: int = SAMPLE_RATE,
    manifest_only: bool = False,
) -> DatasetManifest:
    """Write ``per_class`` WAV clips per class plus ``manifest.csv``.

    ``durations`` maps label to (mean, std) seconds and defaults to the
    per-class figures of the original corpus. Every clip has its own
    generator derived from (seed, label, index), so the corpus is
    byte-identical for a given seed. ``manifest_only`` skips synthesis and
    just lists the files.
    """
    durations = dict(TABLE_I_DURATIONS if durations is None else durations)
    root = Path(out_dir) if out_dir is not None else Path(".")
    entries = []
    for label in classes:
        for i in range(per_class):
            rel = f"class{label}/clip{i:05d}.wav"
            entries.append(ManifestEntry(rel, int(label)))
            if manifest_only:
                continue
            rng = np.random.default_rng([seed, int(label), i])
            samples = synthesize_clip(int(label), sample_duration(int(label), rng, durations), rng, sample_rate)
            try:
                write_wav(root / rel, AudioClip(samples, sample_rate, int(label), rel))
            except OSError as exc:
                raise IoFailure(f"cannot write {root / rel}: {exc}") from exc
    manifest = DatasetManifest(entries, root, seed)
    if not manifest_only:
        try:
            write_manifest(manifest, root / "manifest.csv")
        except OSError as exc:
            raise IoFailure(f"cannot write manifest under {root}: {exc}") from exc
    return manifest


def scaled_durations(scale: float) -> Dict[int, Tuple[float, float]]:
    """Table I duration model shrunk by ``scale`` (desk-scale corpora)."""
    return {k: (m * scale, s * scale) for k, (m, s) in TABLE_I_DURATIONS.items()}
