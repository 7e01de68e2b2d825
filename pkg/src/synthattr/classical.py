"""Classical baselines on pooled feature vectors: one-vs-rest linear SVM and
per-class diagonal Gaussian mixtures.

Both expect standardized inputs; :class:`Standardizer` holds train-split
statistics so val/test rows are transformed with exactly those numbers.
"""

from __future__ import annotations

import json
import struct
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np
from scipy.special import logsumexp

from .errors import (
    CheckpointMismatch,
    DegenerateDataWarning,
    DimensionMismatch,
    IoFailure,
    SingleClassData,
    TooFewSamples,
)

VARIANCE_FLOOR = 1e-6
MODEL_MAGIC = b"SACL"
MODEL_VERSION = 1


@dataclass
class Standardizer:
    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, x: np.ndarray) -> "Standardizer":
        x = np.asarray(x, dtype=np.float64)
        std = x.std(axis=0)
        # constant columns pass through centered rather than blowing up
        return cls(x.mean(axis=0), np.where(std > 0, std, 1.0))

    def transform(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.mean.shape[0]:
            raise DimensionMismatch(f"expected {self.mean.shape[0]} features, got {x.shape[-1]}")
        return (x - self.mean) / self.scale


def _as_matrix(features, labels=None):
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2:
        raise DimensionMismatch(f"features must be an N x m matrix, got shape {x.shape}")
    if labels is None:
        return x
    y = np.asarray(labels, dtype=np.int64)
    if y.shape != (x.shape[0],):
        raise DimensionMismatch(f"{x.shape[0]} rows but {y.shape} labels")
    return x, y


# ---------------------------------------------------------------- SVM


@dataclass
class SvmModel:
    weights: np.ndarray  # (C, m)
    intercepts: np.ndarray  # (C,)
    lam: float
    classes: np.ndarray  # class id of each row of ``weights``
    objective_history: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))

    @property
    def class_count(self) -> int:
        return len(self.classes)

    @property
    def dim(self) -> int:
        return self.weights.shape[1]

    def decision_function(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.dim:
            raise DimensionMismatch(f"model expects {self.dim} features, got {x.shape[-1]}")
        return x @ self.weights.T + self.intercepts

    def predict(self, x: np.ndarray) -> np.ndarray:
        return self.classes[np.argmax(self.decision_function(np.atleast_2d(x)), axis=1)]


def svm_objective(weights, intercepts, x, y_pm, lam) -> np.ndarray:
    """Per-classifier lam*||w||^2 + mean hinge; ``y_pm`` is (N, C) in {-1, +1}."""
    margins = y_pm * (x @ weights.T + intercepts)
    return lam * np.sum(weights**2, axis=1) + np.maximum(0.0, 1.0 - margins).mean(axis=0)


def svm_train(
    features,
    labels,
    lam: float = 1e-4,
    epochs: int = 50,
    seed: int = 0,
    lr0: float = 0.1,
) -> SvmModel:
    """One-vs-rest linear SVMs by averaged stochastic subgradient descent.

    Identical (row, label) pairs are merged and carried as weights, which
    keeps the trajectory the same when the training set is duplicated.
    All C classifiers step on the same sample at once.
    """
    x, y = _as_matrix(features, labels)
    classes = np.unique(y)
    if x.shape[0] < 2 or len(classes) < 2:
        raise SingleClassData(f"need >= 2 samples from >= 2 classes, got {x.shape[0]} samples of {len(classes)} classes")
    n, m = x.shape
    rows, inverse, counts = np.unique(np.column_stack([x, y]), axis=0, return_inverse=True, return_counts=True)
    ux, uy = rows[:, :m], rows[:, m].astype(np.int64)
    if len(np.unique(ux, axis=0)) == 1 or np.all(x.std(axis=0) == 0):
        warnings.warn("all feature vectors are identical; margins carry no information", DegenerateDataWarning)
    u = len(uy)
    sample_scale = u * counts / n  # unbiased estimate of the mean-hinge gradient
    y_pm = np.where(uy[:, None] == classes[None, :], 1.0, -1.0)
    full_pm = np.where(y[:, None] == classes[None, :], 1.0, -1.0)

    c = len(classes)
    w = np.zeros((c, m))
    b = np.zeros(c)
    # Polyak averaging: the returned model is the running mean of all
    # iterates, which damps the jitter of the raw last iterate.
    w_avg = np.zeros_like(w)
    b_avg = np.zeros_like(b)
    rng = np.random.default_rng(seed)
    history = np.empty((epochs, c))
    t = 0
    for epoch in range(epochs):
        for i in rng.permutation(u):
            lr = lr0 / (1.0 + t * lam)
            xi, yi = ux[i], y_pm[i]
            active = (yi * (w @ xi + b)) < 1.0
            coef = np.where(active, yi * sample_scale[i], 0.0)
            w -= lr * (2.0 * lam * w - coef[:, None] * xi[None, :])
            b += lr * coef
            t += 1
            w_avg += (w - w_avg) / t
            b_avg += (b - b_avg) / t
        history[epoch] = svm_objective(w_avg, b_avg, x, full_pm, lam)
    return SvmModel(w_avg, b_avg, float(lam), classes, history)


def svm_predict(model: SvmModel, x) -> Tuple[int, np.ndarray]:
    """Returns (class id, per-class scores); ties go to the smaller id."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise DimensionMismatch(f"expected a single feature vector, got shape {x.shape}")
    scores = model.decision_function(x)
    return int(model.classes[int(np.argmax(scores))]), scores


# ---------------------------------------------------------------- GMM


@dataclass
class ClassMixture:
    weights: np.ndarray  # (K,)
    means: np.ndarray  # (K, m)
    variances: np.ndarray  # (K, m)
    log_likelihood: np.ndarray  # mean per-sample log-likelihood per EM iteration

    def component_log_density(self, x: np.ndarray) -> np.ndarray:
        """(N, K) array of log pi_k + log N(x; mu_k, diag var_k)."""
        diff = x[:, None, :] - self.means[None, :, :]
        maha = np.sum(diff**2 / self.variances[None], axis=2)
        log_det = np.sum(np.log(self.variances), axis=1)
        m = x.shape[1]
        return np.log(self.weights)[None, :] - 0.5 * (m * np.log(2 * np.pi) + log_det[None, :] + maha)

    def log_density(self, x: np.ndarray) -> np.ndarray:
        return logsumexp(self.component_log_density(x), axis=1)


@dataclass
class GmmModel:
    mixtures: List[ClassMixture]
    log_priors: np.ndarray
    classes: np.ndarray
    variance_floor: float = VARIANCE_FLOOR

    @property
    def dim(self) -> int:
        return self.mixtures[0].means.shape[1]

    @property
    def components(self) -> int:
        return self.mixtures[0].weights.shape[0]

    def log_posteriors(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if x.shape[1] != self.dim:
            raise DimensionMismatch(f"model expects {self.dim} features, got {x.shape[1]}")
        joint = np.column_stack([mix.log_density(x) for mix in self.mixtures]) + self.log_priors
        return joint - logsumexp(joint, axis=1, keepdims=True)

    def predict(self, x: np.ndarray) -> np.ndarray:
        return self.classes[np.argmax(self.log_posteriors(x), axis=1)]


def kmeans_pp_init(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding: each new centre drawn with probability ~ D(x)^2."""
    centres = [x[rng.integers(len(x))]]
    for _ in range(1, k):
        d2 = np.min(((x[:, None, :] - np.array(centres)[None]) ** 2).sum(axis=2), axis=1)
        total = d2.sum()
        if total <= 0:
            centres.append(x[rng.integers(len(x))])
        else:
            centres.append(x[rng.choice(len(x), p=d2 / total)])
    return np.array(centres)


def _hard_assignment_init(x: np.ndarray, centres: np.ndarray, variance_floor: float) -> ClassMixture:
    """Starting mixture from a nearest-centre assignment. Starting every
    component at the global variance can leave EM on a plateau whose gain
    is already below the stopping tolerance."""
    k = len(centres)
    nearest = np.argmin(((x[:, None, :] - centres[None]) ** 2).sum(axis=2), axis=1)
    base_var = np.maximum(x.var(axis=0), variance_floor)
    weights, means, variances = np.empty(k), centres.astype(np.float64).copy(), np.tile(base_var, (k, 1))
    for j in range(k):
        members = x[nearest == j]
        weights[j] = max(len(members), 1)
        if len(members) > 1:
            means[j] = members.mean(axis=0)
            variances[j] = np.maximum(members.var(axis=0), variance_floor)
    return ClassMixture(weights / weights.sum(), means, variances, np.zeros(0))


def _responsibilities(mix: ClassMixture, x: np.ndarray) -> Tuple[np.ndarray, float]:
    logp = mix.component_log_density(x)
    norm = logsumexp(logp, axis=1, keepdims=True)
    return np.exp(logp - norm), float(norm.mean())


def fit_mixture(
    x: np.ndarray,
    k: int,
    rng: np.random.Generator,
    max_iter: int = 200,
    tol: float = 1e-6,
    variance_floor: float = VARIANCE_FLOOR,
) -> ClassMixture:
    n, m = x.shape
    if n < k:
        raise TooFewSamples(f"{n} samples cannot support {k} components")
    mix = _hard_assignment_init(x, kmeans_pp_init(x, k, rng), variance_floor)
    history = []
    for _ in range(max_iter):
        resp, ll = _responsibilities(mix, x)
        if history and ll - history[-1] < tol:
            history.append(ll)
            break
        history.append(ll)
        nk = resp.sum(axis=0) + 1e-300
        means = (resp.T @ x) / nk[:, None]
        var = (resp.T @ x**2) / nk[:, None] - means**2
        mix = ClassMixture(nk / n, means, np.maximum(var, variance_floor), np.zeros(0))
    else:
        history.append(_responsibilities(mix, x)[1])
    mix.log_likelihood = np.array(history)
    return mix


def gmm_fit(features, labels, k: int = 3, seed: int = 0, max_iter: int = 200, tol: float = 1e-6) -> GmmModel:
    """One diagonal-covariance mixture per class; priors from class counts."""
    x, y = _as_matrix(features, labels)
    classes, counts = np.unique(y, return_counts=True)
    if len(classes) == 0:
        raise TooFewSamples("no training samples")
    small = classes[counts < k]
    if len(small):
        raise TooFewSamples(f"classes {small.tolist()} have fewer than {k} samples")
    mixtures = []
    for cls in classes:
        rng = np.random.default_rng([seed, int(cls)])
        mixtures.append(fit_mixture(x[y == cls], k, rng, max_iter, tol))
    return GmmModel(mixtures, np.log(counts / counts.sum()), classes)


def gmm_predict(model: GmmModel, x) -> Tuple[int, np.ndarray]:
    """Returns (class id, per-class log posteriors)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise DimensionMismatch(f"expected a single feature vector, got shape {x.shape}")
    post = model.log_posteriors(x)[0]
    return int(model.classes[int(np.argmax(post))]), post


# ---------------------------------------------------------------- persistence


def _pack(path: Path, header: dict, arrays: List[np.ndarray]) -> None:
    header = dict(header, arrays=[list(a.shape) for a in arrays])
    blob = json.dumps(header, sort_keys=True).encode()
    try:
        with open(path, "wb") as fh:
            fh.write(MODEL_MAGIC + struct.pack("<II", MODEL_VERSION, len(blob)) + blob)
            for a in arrays:
                fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def _unpack(path: Path) -> Tuple[dict, List[np.ndarray]]:
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    if raw[:4] != MODEL_MAGIC:
        raise CheckpointMismatch(f"{path} is not a classical model file")
    version, hlen = struct.unpack("<II", raw[4:12])
    if version != MODEL_VERSION:
        raise CheckpointMismatch(f"unsupported model file version {version}")
    header = json.loads(raw[12 : 12 + hlen])
    offset = 12 + hlen
    arrays = []
    for shape in header["arrays"]:
        count = int(np.prod(shape))
        arrays.append(np.frombuffer(raw, "<f8", count, offset).reshape(shape).copy())
        offset += 8 * count
    return header, arrays


def save_classical(path, model: Union[SvmModel, GmmModel], standardizer: Optional[Standardizer] = None) -> None:
    path = Path(path)
    arrays = [] if standardizer is None else [standardizer.mean, standardizer.scale]
    header = {"standardized": standardizer is not None, "classes": model.classes.tolist()}
    if isinstance(model, SvmModel):
        header.update(kind="svm", lam=model.lam)
        arrays += [model.weights, model.intercepts]
    else:
        header.update(kind="gmm", components=model.components, variance_floor=model.variance_floor)
        arrays.append(model.log_priors)
        for mix in model.mixtures:
            arrays += [mix.weights, mix.means, mix.variances]
    _pack(path, header, arrays)


def load_classical(path) -> Tuple[Union[SvmModel, GmmModel], Optional[Standardizer]]:
    header, arrays = _unpack(Path(path))
    std = None
    if header["standardized"]:
        std = Standardizer(arrays[0], arrays[1])
        arrays = arrays[2:]
    classes = np.array(header["classes"], dtype=np.int64)
    if header["kind"] == "svm":
        return SvmModel(arrays[0], arrays[1], header["lam"], classes), std
    log_priors, rest = arrays[0], arrays[1:]
    mixtures = [ClassMixture(rest[i], rest[i + 1], rest[i + 2], np.zeros(0)) for i in range(0, len(rest), 3)]
    return GmmModel(mixtures, log_priors, classes, header["variance_floor"]), std


def export_svm_weights_csv(model: SvmModel, path) -> None:
    """One row per class: class id, intercept, then the weight vector."""
    cols = ["class", "intercept"] + [f"w{i}" for i in range(model.dim)]
    lines = [",".join(cols)]
    for cls, b, w in zip(model.classes, model.intercepts, model.weights):
        lines.append(",".join([str(int(cls)), repr(float(b))] + [repr(float(v)) for v in w]))
    try:
        Path(path).write_text("\n".join(lines) + "\n")
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc
