"""Short-time spectra, mel filterbanks and MFCCs.

Shapes are frames x coefficients throughout. Defaults assume 16 kHz input:
25 ms frames, 10 ms hop, 64 mel bands between 20 Hz and 8 kHz, 20 MFCCs.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field, replace
from functools import lru_cache
from pathlib import Path
from typing import Union

import numpy as np

from .audio import AudioClip
from .errors import BadBandEdges, ClipTooShort, ConfigError, TooFewFrames

FRAME_LENGTH = 400
HOP_LENGTH = 160
N_MELS = 64
N_MFCC = 20
F_MIN = 20.0
F_MAX = 8000.0
LOG_FLOOR = 1e-10

KINDS = ("stft_power", "mel_spectrogram", "log_mel", "mfcc")


@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    values: np.ndarray
    kind: str
    frame_length: int
    hop_length: int
    sample_rate: int
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown feature kind {self.kind!r}")

    @property
    def shape(self):
        return self.values.shape


def hann_window(n: int) -> np.ndarray:
    """Periodic Hann window."""
    return 0.5 - 0.5 * np.cos(2 * np.pi * np.arange(n) / n)


def frame_signal(x: np.ndarray, frame_length: int, hop_length: int) -> np.ndarray:
    if hop_length < 1:
        raise ConfigError(f"hop_length must be >= 1, got {hop_length}")
    if frame_length > x.shape[0]:
        raise ClipTooShort(f"{x.shape[0]} samples cannot hold a {frame_length}-sample frame")
    return np.lib.stride_tricks.sliding_window_view(x, frame_length)[::hop_length]


def stft_power(
    clip: AudioClip,
    frame_length: int = FRAME_LENGTH,
    hop_length: int = HOP_LENGTH,
    window: str = "hann",
) -> FeatureMatrix:
    """Squared-magnitude real FFT of windowed frames.

    ``window="rect"`` disables tapering; it exists for bin-exact checks.
    """
    frames = frame_signal(clip.samples, frame_length, hop_length)
    if window == "hann":
        frames = frames * hann_window(frame_length)
    elif window != "rect":
        raise ConfigError(f"unknown window {window!r}")
    spec = np.fft.rfft(frames, n=frame_length, axis=1)
    power = spec.real**2 + spec.imag**2
    return FeatureMatrix(power, "stft_power", frame_length, hop_length, clip.sample_rate, {"window": window})


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


@lru_cache(maxsize=32)
def _filterbank(sample_rate: int, n_fft: int, n_mels: int, f_min: float, f_max: float) -> np.ndarray:
    edges = mel_to_hz(np.linspace(hz_to_mel(f_min), hz_to_mel(f_max), n_mels + 2))
    freqs = np.arange(n_fft // 2 + 1) * sample_rate / n_fft
    lo, center, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (freqs - lo) / (center - lo)
    falling = (hi - freqs) / (hi - center)
    weights = np.maximum(0.0, np.minimum(rising, falling))
    # area normalization: each triangle integrates to the same value in Hz
    weights *= 2.0 / (hi - lo)
    if not np.all(weights.max(axis=1) > 0):
        empty = np.flatnonzero(weights.max(axis=1) <= 0).tolist()
        raise BadBandEdges(f"mel filters {empty} cover no FFT bin; use fewer mels or longer frames")
    weights.setflags(write=False)
    return weights


@dataclass(frozen=True, eq=False)
class MelFilterbank:
    weights: np.ndarray
    f_min: float
    f_max: float


def mel_filterbank(
    sample_rate: int,
    n_fft: int,
    n_mels: int = N_MELS,
    f_min: float = F_MIN,
    f_max: float = F_MAX,
) -> MelFilterbank:
    """HTK-scale triangular filters, cached per configuration."""
    if n_mels < 2:
        raise ConfigError(f"n_mels must be >= 2, got {n_mels}")
    if not 0 <= f_min < f_max <= sample_rate / 2:
        raise BadBandEdges(f"need 0 <= f_min < f_max <= Nyquist, got {f_min}, {f_max}")
    w = _filterbank(int(sample_rate), int(n_fft), int(n_mels), float(f_min), float(f_max))
    return MelFilterbank(w, float(f_min), float(f_max))


def mel_spectrogram(
    power: FeatureMatrix,
    n_mels: int = N_MELS,
    f_min: float = F_MIN,
    f_max: float = F_MAX,
) -> FeatureMatrix:
    if power.kind != "stft_power":
        raise ConfigError(f"mel_spectrogram needs stft_power input, got {power.kind}")
    fb = mel_filterbank(power.sample_rate, power.frame_length, n_mels, f_min, f_max)
    params = dict(power.params, n_mels=n_mels, f_min=f_min, f_max=f_max)
    return replace(power, values=power.values @ fb.weights.T, kind="mel_spectrogram", params=params)


def log_mel(mel: FeatureMatrix, floor: float = LOG_FLOOR) -> FeatureMatrix:
    return replace(mel, values=np.log(mel.values + floor), kind="log_mel")


@lru_cache(maxsize=16)
def dct_matrix(n: int) -> np.ndarray:
    """Orthonormal DCT-II: row k holds basis k, so ``c = M @ v``."""
    k = np.arange(n)[:, None]
    i = np.arange(n)[None, :]
    m = np.cos(np.pi * k * (2 * i + 1) / (2 * n)) * np.sqrt(2.0 / n)
    m[0] /= np.sqrt(2.0)
    m.setflags(write=False)
    return m


def cepstrum(logmel: FeatureMatrix, n_mfcc: int = N_MFCC) -> FeatureMatrix:
    n_mels = logmel.values.shape[1]
    if n_mfcc > n_mels:
        raise ConfigError(f"n_mfcc ({n_mfcc}) exceeds n_mels ({n_mels})")
    coeffs = logmel.values @ dct_matrix(n_mels)[:n_mfcc].T
    return replace(logmel, values=coeffs, kind="mfcc", params=dict(logmel.params, n_mfcc=n_mfcc))


def mfcc(
    clip: AudioClip,
    n_mfcc: int = N_MFCC,
    n_mels: int = N_MELS,
    frame_length: int = FRAME_LENGTH,
    hop_length: int = HOP_LENGTH,
    f_min: float = F_MIN,
    f_max: float = F_MAX,
) -> FeatureMatrix:
    if n_mfcc > n_mels:
        raise ConfigError(f"n_mfcc ({n_mfcc}) exceeds n_mels ({n_mels})")
    power = stft_power(clip, frame_length, hop_length)
    return cepstrum(log_mel(mel_spectrogram(power, n_mels, f_min, f_max)), n_mfcc)


def mfcc_stats(feat: FeatureMatrix) -> np.ndarray:
    """Per-coefficient mean then standard deviation over frames."""
    values = feat.values
    if values.shape[0] < 2:
        raise TooFewFrames(f"pooling needs >= 2 frames, got {values.shape[0]}")
    return np.concatenate([values.mean(axis=0), values.std(axis=0)])


def pooled_features(clip: AudioClip, kind: str = "MFCC", **kwargs) -> np.ndarray:
    """Fixed-length vector for the classical models (MFCC or log-mel stats)."""
    if kind == "MFCC":
        return mfcc_stats(mfcc(clip, **kwargs))
    if kind == "MS":
        power = stft_power(clip, kwargs.get("frame_length", FRAME_LENGTH), kwargs.get("hop_length", HOP_LENGTH))
        mel = mel_spectrogram(power, kwargs.get("n_mels", N_MELS), kwargs.get("f_min", F_MIN), kwargs.get("f_max", F_MAX))
        return mfcc_stats(log_mel(mel))
    raise ConfigError(f"no pooled representation for feature kind {kind!r}")


_BIN_MAGIC = b"SAFM"


def _header(feat: FeatureMatrix) -> str:
    params = ";".join(f"{k}={v}" for k, v in sorted(feat.params.items()))
    rows, cols = feat.values.shape
    return (
        f"kind={feat.kind};shape={rows}x{cols};frame_length={feat.frame_length};"
        f"hop_length={feat.hop_length};sample_rate={feat.sample_rate}" + (f";{params}" if params else "")
    )


def write_feature_csv(feat: FeatureMatrix, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w") as fh:
        fh.write("# " + _header(feat) + "\n")
        np.savetxt(fh, feat.values, delimiter=",", fmt="%.17g")
    return path


def write_feature_bin(feat: FeatureMatrix, path: Union[str, Path]) -> Path:
    """Packed little-endian layout: magic, header length, header, float64 rows."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = _header(feat).encode()
    with path.open("wb") as fh:
        fh.write(_BIN_MAGIC + struct.pack("<I", len(header)) + header)
        fh.write(np.ascontiguousarray(feat.values, dtype="<f8").tobytes())
    return path


def _parse_header(text: str) -> dict:
    return dict(item.split("=", 1) for item in text.strip().split(";"))


def _from_header(meta: dict, values: np.ndarray) -> FeatureMatrix:
    core = {"kind", "shape", "frame_length", "hop_length", "sample_rate"}
    rows, cols = (int(v) for v in meta["shape"].split("x"))
    return FeatureMatrix(
        values.reshape(rows, cols),
        meta["kind"],
        int(meta["frame_length"]),
        int(meta["hop_length"]),
        int(meta["sample_rate"]),
        {k: v for k, v in meta.items() if k not in core},
    )


def read_feature_bin(path: Union[str, Path]) -> FeatureMatrix:
    data = Path(path).read_bytes()
    if data[:4] != _BIN_MAGIC:
        raise ConfigError(f"{path}: not a feature dump")
    (n,) = struct.unpack_from("<I", data, 4)
    meta = _parse_header(data[8 : 8 + n].decode())
    return _from_header(meta, np.frombuffer(data[8 + n :], dtype="<f8").copy())


def read_feature_csv(path: Union[str, Path]) -> FeatureMatrix:
    with Path(path).open() as fh:
        meta = _parse_header(fh.readline().lstrip("# "))
        values = np.loadtxt(fh, delimiter=",", ndmin=2)
    return _from_header(meta, values)
