"""Slow, obviously-correct reference implementations for cross-checking.

Nothing here imports from the production modules except the error types;
agreement between the two is the evidence the tests rely on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from .errors import NonFiniteFunctionValue

DEFAULT_STEP = 1e-5
DEFAULT_TOL = 1e-5
ABS_FLOOR = 1e-8


def finite_diff_gradient(fn: Callable[[np.ndarray], float], x, step: float = DEFAULT_STEP) -> np.ndarray:
    """Central differences with a per-coordinate step h = step * max(1, |x_i|)."""
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        h = step * max(1.0, abs(orig))
        flat[i] = orig + h
        fp = float(fn(x))
        flat[i] = orig - h
        fm = float(fn(x))
        flat[i] = orig
        if not (math.isfinite(fp) and math.isfinite(fm)):
            raise NonFiniteFunctionValue(f"function is not finite near coordinate {i}")
        gflat[i] = (fp - fm) / (2 * h)
    return grad


def relative_error(analytic, numeric, floor: float = ABS_FLOOR) -> np.ndarray:
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    return np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)


@dataclass
class GradCheckReport:
    errors: Dict[str, float]
    tolerance: float
    shapes: Dict[str, Tuple[int, ...]] = field(default_factory=dict)

    @property
    def max_error(self) -> float:
        return max(self.errors.values(), default=0.0)

    @property
    def passed(self) -> bool:
        return self.max_error < self.tolerance

    def __str__(self) -> str:
        worst = max(self.errors, key=self.errors.get) if self.errors else "-"
        return f"gradcheck {'ok' if self.passed else 'FAILED'}: max rel err {self.max_error:.3e} ({worst}), tol {self.tolerance:g}"


def grad_check(
    fn: Callable[[], float],
    params: Dict[str, np.ndarray],
    analytic: Dict[str, np.ndarray],
    step: float = DEFAULT_STEP,
    tol: float = DEFAULT_TOL,
    max_coords: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
) -> GradCheckReport:
    """Compare analytic gradients with central differences.

    ``fn`` reads the arrays in ``params`` (mutated in place while probing).
    With ``max_coords`` only a random subset of each array's entries is
    probed, which keeps whole-network checks affordable.
    """
    errors, shapes = {}, {}
    rng = rng or np.random.default_rng(0)
    for name, arr in params.items():
        flat = arr.reshape(-1)
        coords = np.arange(flat.size)
        if max_coords is not None and flat.size > max_coords:
            coords = rng.choice(flat.size, max_coords, replace=False)
        num = np.empty(len(coords))
        for j, i in enumerate(coords):
            orig = flat[i]
            h = step * max(1.0, abs(orig))
            flat[i] = orig + h
            fp = float(fn())
            flat[i] = orig - h
            fm = float(fn())
            flat[i] = orig
            if not (math.isfinite(fp) and math.isfinite(fm)):
                raise NonFiniteFunctionValue(f"{name}[{i}] gives a non-finite value")
            num[j] = (fp - fm) / (2 * h)
        ana = np.asarray(analytic[name], dtype=np.float64).reshape(-1)[coords]
        errors[name] = float(relative_error(ana, num).max()) if len(coords) else 0.0
        shapes[name] = tuple(arr.shape)
    return GradCheckReport(errors, tol, shapes)


def naive_conv1d(x, w, bias=None, dilation: int = 1, padding: Optional[int] = None) -> np.ndarray:
    """Direct loop cross-correlation; default padding keeps the length."""
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    batch, cin, length = x.shape
    cout, _, k = w.shape
    if padding is None:
        padding = dilation * (k - 1) // 2
    out_len = length + 2 * padding - dilation * (k - 1)
    y = np.zeros((batch, cout, out_len))
    for b in range(batch):
        for o in range(cout):
            for t in range(out_len):
                acc = 0.0 if bias is None else float(bias[o])
                for c in range(cin):
                    for j in range(k):
                        src = t + j * dilation - padding
                        if 0 <= src < length:
                            acc += w[o, c, j] * x[b, c, src]
                y[b, o, t] = acc
    return y


def naive_matmul(a, b) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    out = np.zeros((a.shape[0], b.shape[1]))
    for i in range(a.shape[0]):
        for j in range(b.shape[1]):
            s = 0.0
            for k in range(a.shape[1]):
                s += a[i, k] * b[k, j]
            out[i, j] = s
    return out


def direct_dft(x) -> np.ndarray:
    """X[k] = sum_n x[n] exp(-2 pi i k n / N) for k = 0..N/2."""
    x = np.asarray(x, dtype=np.float64)
    n = len(x)
    k = np.arange(n // 2 + 1)[:, None]
    t = np.arange(n)[None, :]
    return (x[None, :] * np.exp(-2j * np.pi * k * t / n)).sum(axis=1)


def direct_power_spectrogram(signal, frame_length: int, hop_length: int, window) -> np.ndarray:
    signal = np.asarray(signal, dtype=np.float64)
    n_frames = 1 + (len(signal) - frame_length) // hop_length
    rows = []
    for f in range(n_frames):
        frame = signal[f * hop_length : f * hop_length + frame_length] * window
        rows.append(np.abs(direct_dft(frame)) ** 2)
    return np.array(rows)


def direct_dct2(v) -> np.ndarray:
    """Orthonormal DCT-II by explicit summation."""
    v = np.asarray(v, dtype=np.float64)
    n = len(v)
    out = np.empty(n)
    for k in range(n):
        s = sum(v[i] * math.cos(math.pi * k * (2 * i + 1) / (2 * n)) for i in range(n))
        out[k] = s * math.sqrt((1.0 if k == 0 else 2.0) / n)
    return out


def gaussian_blobs(
    centers, n_per: int, scale: float = 1.0, seed: int = 0
) -> Tuple[np.ndarray, np.ndarray]:
    """Isotropic clusters around ``centers``; labels are center indices."""
    centers = np.atleast_2d(np.asarray(centers, dtype=np.float64))
    rng = np.random.default_rng(seed)
    x = np.concatenate([c + scale * rng.standard_normal((n_per, centers.shape[1])) for c in centers])
    y = np.repeat(np.arange(len(centers)), n_per)
    return x, y


def two_component_1d(n_each: int = 500, means=(-5.0, 5.0), std: float = 1.0, seed: int = 0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return np.concatenate([rng.normal(m, std, n_each) for m in means])[:, None]


def sine(freq: float, seconds: float, sample_rate: int = 16000, amplitude: float = 0.5, phase: float = 0.0) -> np.ndarray:
    t = np.arange(int(round(seconds * sample_rate))) / sample_rate
    return amplitude * np.sin(2 * np.pi * freq * t + phase)


def random_waveforms(count: int, length: int, seed: int = 0, amplitude: float = 0.3) -> List[np.ndarray]:
    rng = np.random.default_rng(seed)
    return [amplitude * rng.standard_normal(length).clip(-3, 3) / 3 for _ in range(count)]
