"""Separability analysis of embeddings: PCA, exact t-SNE, silhouette-style
metrics, and SVG/CSV emitters for the 2-D maps."""

from __future__ import annotations

import html
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Optional

import numpy as np

from .errors import ConfigError, DataError, IoFailure, PerplexityTooLarge, RankDeficient, SingleClass

SOURCES = ("inc-tssd", "res-tssd", "mfcc", "other")
PALETTE = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f")


@dataclass(frozen=True)
class EmbeddingSet:
    vectors: np.ndarray
    labels: np.ndarray
    source: str = "other"

    def __post_init__(self):
        v = np.asarray(self.vectors, dtype=np.float64)
        y = np.asarray(self.labels, dtype=np.int64)
        if v.ndim != 2 or v.shape[0] < 2:
            raise DataError(f"need an N x d matrix with N >= 2, got {v.shape}")
        if y.shape != (v.shape[0],):
            raise DataError(f"{v.shape[0]} vectors but {y.shape} labels")
        if y.size and (y.min() < 0 or y.max() > 5):
            raise DataError("labels must lie in 0..5")
        if self.source not in SOURCES:
            raise ConfigError(f"source must be one of {SOURCES}, got {self.source!r}")
        object.__setattr__(self, "vectors", v)
        object.__setattr__(self, "labels", y)


# ---------------------------------------------------------------- PCA


@dataclass
class PcaResult:
    mean: np.ndarray
    components: np.ndarray  # (k, d), rows are unit loadings
    explained_variance: np.ndarray
    explained_variance_ratio: np.ndarray

    def transform(self, data: np.ndarray) -> np.ndarray:
        return (np.asarray(data, dtype=np.float64) - self.mean) @ self.components.T

    def inverse_transform(self, scores: np.ndarray) -> np.ndarray:
        return scores @ self.components + self.mean


def pca_fit(data, out_dims: int) -> PcaResult:
    x = np.asarray(data, dtype=np.float64)
    n, d = x.shape
    if not 1 <= out_dims <= min(n, d):
        raise ConfigError(f"out_dims must be in 1..{min(n, d)}, got {out_dims}")
    mean = x.mean(axis=0)
    xc = x - mean
    cov = xc.T @ xc / max(n - 1, 1)
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1]
    evals, evecs = evals[order], evecs[:, order]
    total = evals.clip(min=0).sum()
    positive = int(np.sum(evals > max(total, 1e-300) * 1e-12))
    k = out_dims
    if positive < out_dims:
        warnings.warn(f"only {positive} of {out_dims} requested components have positive variance", RankDeficient)
        k = max(positive, 1)
    comps = evecs[:, :k].T.copy()
    pivot = np.argmax(np.abs(comps), axis=1)
    comps *= np.sign(comps[np.arange(k), pivot])[:, None]
    var = evals[:k].clip(min=0)
    ratio = var / total if total > 0 else np.zeros(k)
    return PcaResult(mean, comps, var, ratio)


def pca_fit_transform(data, out_dims: int):
    """Returns (scores, explained variance ratios)."""
    res = pca_fit(data, out_dims)
    return res.transform(data), res.explained_variance_ratio


# ---------------------------------------------------------------- t-SNE


def squared_distances(x: np.ndarray) -> np.ndarray:
    sq = np.sum(x**2, axis=1)
    d = sq[:, None] + sq[None, :] - 2.0 * x @ x.T
    np.fill_diagonal(d, 0.0)
    return np.maximum(d, 0.0)


def conditional_affinities(dist2: np.ndarray, perplexity: float, tol: float = 1e-5, max_steps: int = 50):
    """Row-wise P(j|i) with the Gaussian precision chosen by bisection so that
    each row's entropy (bits) equals log2(perplexity).

    Returns (P, entropies in bits).
    """
    n = dist2.shape[0]
    target = np.log2(perplexity)
    p = np.zeros((n, n))
    ent = np.zeros(n)
    for i in range(n):
        di = np.delete(dist2[i], i)
        di = di - di.min()  # shift for stability; cancels in the normalization
        scale = np.median(di)
        beta, lo, hi = (1.0 / scale if scale > 0 else 1.0), 0.0, np.inf
        for _ in range(max_steps):
            w = np.exp(-di * beta)
            s = w.sum()
            row = w / s
            h = -np.sum(row[row > 0] * np.log2(row[row > 0]))
            diff = h - target
            if abs(diff) < tol:
                break
            if diff > 0:  # too flat, sharpen
                lo = beta
                beta = beta * 2 if hi == np.inf else (beta + hi) / 2
            else:
                hi = beta
                beta = (beta + lo) / 2
        p[i, np.arange(n) != i] = row
        ent[i] = h
    return p, ent


def _kl(p: np.ndarray, q: np.ndarray) -> float:
    mask = p > 0
    return float(np.sum(p[mask] * np.log(p[mask] / q[mask])))


@dataclass
class TsneResult:
    embedding: np.ndarray
    kl_history: np.ndarray
    entropies: np.ndarray


def tsne(
    data,
    perplexity: float = 30.0,
    iterations: int = 1000,
    seed: int = 0,
    learning_rate: float = 200.0,
    exaggeration: float = 12.0,
    exaggeration_iters: int = 250,
    pca_dims: int = 50,
) -> TsneResult:
    """Exact O(N^2) t-SNE with momentum and per-coordinate gains."""
    x = np.asarray(data, dtype=np.float64)
    n, d = x.shape
    if 3 * perplexity >= n:
        raise PerplexityTooLarge(f"perplexity {perplexity} needs more than {3 * perplexity:g} points, got {n}")
    k = min(d, pca_dims, n)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RankDeficient)
        x = pca_fit_transform(x, k)[0]

    pc, ent = conditional_affinities(squared_distances(x), perplexity)
    p = (pc + pc.T) / (2.0 * n)
    p = np.maximum(p, 1e-12)
    np.fill_diagonal(p, 0.0)

    rng = np.random.default_rng(seed)
    y = 1e-4 * rng.standard_normal((n, 2))
    velocity = np.zeros_like(y)
    gains = np.ones_like(y)
    history = np.empty(iterations)
    for it in range(iterations):
        early = it < exaggeration_iters
        pe = p * exaggeration if early else p
        num = 1.0 / (1.0 + squared_distances(y))
        np.fill_diagonal(num, 0.0)
        q = np.maximum(num / num.sum(), 1e-12)
        pq = (pe - q) * num
        grad = 4.0 * (np.diag(pq.sum(axis=1)) - pq) @ y
        momentum = 0.5 if early else 0.8
        same = np.sign(grad) == np.sign(velocity)
        gains = np.where(same, gains * 0.8, gains + 0.2).clip(min=0.01)
        velocity = momentum * velocity - learning_rate * gains * grad
        y = y + velocity
        y = y - y.mean(axis=0)
        history[it] = _kl(p, q)
    return TsneResult(y, history, ent)


def tsne_embed(data, perplexity: float = 30.0, iterations: int = 1000, seed: int = 0) -> np.ndarray:
    return tsne(data, perplexity, iterations, seed).embedding


# ---------------------------------------------------------------- metrics


def silhouette_score(x, labels) -> float:
    """Mean silhouette over samples with euclidean distance; samples in a
    singleton class score 0."""
    x = np.asarray(x, dtype=np.float64)
    labels = np.asarray(labels)
    classes = np.unique(labels)
    if len(classes) < 2:
        raise SingleClass("silhouette needs at least two classes")
    dist = np.sqrt(squared_distances(x))
    onehot = labels[:, None] == classes[None, :]
    sizes = onehot.sum(axis=0)
    sums = dist @ onehot
    own = np.argmax(onehot, axis=1)
    own_size = sizes[own]
    rows = np.arange(len(x))
    a = np.where(own_size > 1, sums[rows, own] / np.maximum(own_size - 1, 1), 0.0)
    other = sums / sizes
    other[rows, own] = np.inf
    b = other.min(axis=1)
    denom = np.maximum(a, b)
    s = np.where((own_size > 1) & (denom > 0), (b - a) / np.where(denom > 0, denom, 1), 0.0)
    return float(s.mean())


@dataclass
class SeparationReport:
    classes: np.ndarray
    silhouette: float
    centroid_distances: np.ndarray  # (C, C)
    intra_dispersion: np.ndarray  # mean distance to own centroid per class
    mean_intra_dispersion: float

    @property
    def min_centroid_distance(self) -> float:
        d = self.centroid_distances
        return float(d[~np.eye(len(d), dtype=bool)].min())


def separation_report(emb: EmbeddingSet) -> SeparationReport:
    classes = np.unique(emb.labels)
    if len(classes) < 2:
        raise SingleClass("separation report needs at least two classes")
    x = emb.vectors
    centroids = np.array([x[emb.labels == c].mean(axis=0) for c in classes])
    disp = np.array([np.linalg.norm(x[emb.labels == c] - centroids[i], axis=1).mean() for i, c in enumerate(classes)])
    cd = np.sqrt(squared_distances(centroids))
    return SeparationReport(classes, silhouette_score(x, emb.labels), cd, disp, float(disp.mean()))


# ---------------------------------------------------------------- output


def write_embedding_csv(path, points: np.ndarray, labels, source: str) -> None:
    lines = ["x,y,label,source"]
    for (px, py), lab in zip(np.asarray(points, dtype=np.float64), labels):
        lines.append(f"{float(px)!r},{float(py)!r},{int(lab)},{source}")
    try:
        Path(path).write_text("\n".join(lines) + "\n")
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def scatter_svg(
    points: np.ndarray,
    labels,
    title: str = "",
    class_names: Optional[Dict[int, str]] = None,
    size: int = 480,
) -> str:
    """Self-contained SVG scatter, one colour per class, legend on the right."""
    pts = np.asarray(points, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    margin, legend_w = 30, 110
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    span = np.where(hi > lo, hi - lo, 1.0)
    uv = (pts - lo) / span
    px = margin + uv[:, 0] * (size - 2 * margin)
    py = size - margin - uv[:, 1] * (size - 2 * margin)
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size + legend_w}" height="{size}" '
        f'viewBox="0 0 {size + legend_w} {size}">',
        f'<rect width="{size + legend_w}" height="{size}" fill="white"/>',
        f'<text x="{size / 2:.0f}" y="18" text-anchor="middle" font-family="sans-serif" font-size="14">{html.escape(title)}</text>',
    ]
    for x_, y_, lab in zip(px, py, labels):
        out.append(f'<circle cx="{x_:.2f}" cy="{y_:.2f}" r="2.5" fill="{PALETTE[lab % len(PALETTE)]}" fill-opacity="0.8"/>')
    for row, lab in enumerate(np.unique(labels)):
        name = (class_names or {}).get(int(lab), f"class {lab}")
        y0 = margin + 18 * row
        out.append(f'<rect x="{size + 5}" y="{y0 - 9}" width="10" height="10" fill="{PALETTE[lab % len(PALETTE)]}"/>')
        out.append(f'<text x="{size + 20}" y="{y0}" font-family="sans-serif" font-size="12">{html.escape(name)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_scatter_svg(path, points, labels, title: str = "", class_names=None) -> None:
    try:
        Path(path).write_text(scatter_svg(points, labels, title, class_names))
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc
