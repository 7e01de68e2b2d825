import math

import numpy as np
import pytest

from synthattr.analysis import (
    EmbeddingSet,
    conditional_affinities,
    pca_fit,
    pca_fit_transform,
    scatter_svg,
    separation_report,
    silhouette_score,
    squared_distances,
    tsne,
    write_embedding_csv,
)
from synthattr.errors import ConfigError, DataError, PerplexityTooLarge, RankDeficient, SingleClass
from synthattr.testkit import gaussian_blobs


# ------------------------------------------------------------------ PCA


def test_pca_collinear():
    t = np.linspace(-3, 3, 40)
    with pytest.warns(RankDeficient):
        _, ratios = pca_fit_transform(np.column_stack([t, 2 * t]), 2)
    assert ratios[0] == pytest.approx(1.0, abs=1e-12)


def test_pca_isotropic(rng):
    _, ratios = pca_fit_transform(rng.standard_normal((1000, 2)), 2)
    assert abs(ratios[0] - ratios[1]) < 0.1


def test_pca_full_rank_reconstruction(rng):
    x = rng.standard_normal((30, 5)) @ rng.standard_normal((5, 5))
    model = pca_fit(x, 5)
    assert np.max(np.abs(model.inverse_transform(model.transform(x)) - x)) < 1e-8


def test_pca_scores_uncorrelated(rng):
    x = rng.standard_normal((200, 6)) @ rng.standard_normal((6, 6))
    scores, _ = pca_fit_transform(x, 4)
    cov = np.cov(scores, rowvar=False)
    off = cov - np.diag(np.diag(cov))
    assert np.max(np.abs(off)) / np.max(np.diag(cov)) < 1e-8
    assert np.all(np.diff(np.diag(cov)) <= 0)


def test_pca_sign_convention(rng):
    x = rng.standard_normal((50, 3))
    a = pca_fit(x, 3).components
    b = pca_fit(x[::-1], 3).components
    assert np.allclose(a, b)
    for row in a:
        assert row[np.argmax(np.abs(row))] > 0


# ------------------------------------------------------------------ t-SNE


def test_perplexity_calibration(rng):
    x = rng.standard_normal((120, 4))
    _, ent = conditional_affinities(squared_distances(x), 20.0)
    assert np.max(np.abs(ent - math.log2(20.0))) < 1e-4


def test_affinity_rows_are_distributions(rng):
    p, _ = conditional_affinities(squared_distances(rng.standard_normal((40, 3))), 5.0)
    assert np.allclose(p.sum(axis=1), 1.0) and np.all(np.diag(p) == 0)


@pytest.fixture(scope="module")
def two_clusters():
    return gaussian_blobs([(0.0,) * 5, (20.0,) + (0.0,) * 4], n_per=50, scale=1.0, seed=7)


@pytest.fixture(scope="module")
def two_cluster_tsne(two_clusters):
    x, _ = two_clusters
    return tsne(x, perplexity=15, iterations=400, seed=2)


def test_tsne_separates_clusters(two_clusters, two_cluster_tsne):
    assert silhouette_score(two_cluster_tsne.embedding, two_clusters[1]) > 0.5


def test_tsne_kl_endpoint(two_cluster_tsne):
    kl = two_cluster_tsne.kl_history
    assert kl[-1] < kl[0] and np.all(np.isfinite(kl))


def test_tsne_entropies(two_cluster_tsne):
    assert np.max(np.abs(two_cluster_tsne.entropies - math.log2(15))) < 1e-4


def test_tsne_deterministic(two_clusters):
    x, _ = two_clusters
    a = tsne(x[::2], perplexity=5, iterations=60, seed=3).embedding
    b = tsne(x[::2], perplexity=5, iterations=60, seed=3).embedding
    assert np.array_equal(a, b)


def test_tsne_perplexity_too_large(rng):
    with pytest.raises(PerplexityTooLarge):
        tsne(rng.standard_normal((30, 3)), perplexity=10)


# ------------------------------------------------------------------ silhouette


def _naive_silhouette(x, labels):
    s = []
    for i in range(len(x)):
        d = np.linalg.norm(x - x[i], axis=1)
        own = labels == labels[i]
        if own.sum() == 1:
            s.append(0.0)
            continue
        a = d[own].sum() / (own.sum() - 1)
        b = min(d[labels == c].mean() for c in set(labels.tolist()) if c != labels[i])
        s.append((b - a) / max(a, b))
    return float(np.mean(s))


def test_silhouette_matches_naive(rng):
    x = rng.standard_normal((60, 3))
    y = rng.integers(0, 4, 60)
    assert silhouette_score(x, y) == pytest.approx(_naive_silhouette(x, y), abs=1e-12)


def test_silhouette_collapsed_classes():
    x = np.array([[0.0, 0.0]] * 5 + [[3.0, 4.0]] * 5)
    assert silhouette_score(x, [0] * 5 + [1] * 5) == 1.0


def test_silhouette_shuffled_labels(rng):
    x = rng.standard_normal((500, 2))
    assert abs(silhouette_score(x, rng.permutation(np.arange(500) % 2))) < 0.1


def test_silhouette_single_class(rng):
    with pytest.raises(SingleClass):
        silhouette_score(rng.standard_normal((10, 2)), np.zeros(10))


# ------------------------------------------------------------------ reports and output


def test_embedding_set_validation():
    with pytest.raises(DataError):
        EmbeddingSet(np.zeros((1, 3)), [0])
    with pytest.raises(DataError):
        EmbeddingSet(np.zeros((2, 3)), [0, 6])
    with pytest.raises(ConfigError):
        EmbeddingSet(np.zeros((2, 3)), [0, 1], source="wav2vec")


def test_separation_report():
    x = np.array([[0.0, 0.0], [0.0, 2.0], [10.0, 0.0], [10.0, 2.0]])
    rep = separation_report(EmbeddingSet(x, [0, 0, 1, 1], "mfcc"))
    assert rep.min_centroid_distance == pytest.approx(10.0)
    assert np.allclose(rep.intra_dispersion, [1.0, 1.0])
    with pytest.raises(SingleClass):
        separation_report(EmbeddingSet(x, [2, 2, 2, 2]))


def test_embedding_csv_and_svg(tmp_path):
    pts = np.array([[0.5, -1.0], [2.0, 3.0]])
    write_embedding_csv(tmp_path / "e.csv", pts, [0, 5], "inc-tssd")
    lines = (tmp_path / "e.csv").read_text().splitlines()
    assert lines == ["x,y,label,source", "0.5,-1.0,0,inc-tssd", "2.0,3.0,5,inc-tssd"]
    svg = scatter_svg(pts, [0, 5], title="a < b")
    assert svg.startswith("<svg") and svg.count("<circle") == 2 and "a &lt; b" in svg
