"""Dimension reduction and similar-search clustering."""

import numpy as np
import pytest

from adsb.ere.cluster import ClusterParams, hdbscan_fit, kmeans_fit, pick_k, train_similar_search
from adsb.ere.reducer import fit_reducer, reduce_matrix, reduce_vector


def adjusted_rand_index(labels_a, labels_b):
    """Brute-force ARI from the pair-counting contingency table."""
    labels_a = np.asarray(labels_a)
    labels_b = np.asarray(labels_b)
    classes_a = sorted(set(labels_a.tolist()))
    classes_b = sorted(set(labels_b.tolist()))
    table = np.zeros((len(classes_a), len(classes_b)), dtype=np.int64)
    for i, ca in enumerate(classes_a):
        for j, cb in enumerate(classes_b):
            table[i, j] = np.sum((labels_a == ca) & (labels_b == cb))

    def comb2(x):
        return x * (x - 1) / 2.0

    sum_ij = comb2(table).sum()
    sum_a = comb2(table.sum(axis=1)).sum()
    sum_b = comb2(table.sum(axis=0)).sum()
    n = comb2(len(labels_a))
    expected = sum_a * sum_b / n
    max_index = (sum_a + sum_b) / 2.0
    if max_index == expected:
        return 1.0
    return (sum_ij - expected) / (max_index - expected)


def planted_clusters(n_per, centers, sigma, seed):
    rng = np.random.default_rng(seed)
    points, labels = [], []
    for i, center in enumerate(centers):
        points.append(rng.normal(loc=center, scale=sigma, size=(n_per, len(center))))
        labels.extend([i] * n_per)
    return np.vstack(points), np.asarray(labels)


# ---------------------------------------------------------------------------
# Reducer
# ---------------------------------------------------------------------------


def test_full_rank_projection_preserves_distances():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(40, 6))
    reducer = fit_reducer(X, k=6)
    Z = reduce_matrix(reducer, X)
    orig = np.linalg.norm(X[:, None, :] - X[None, :, :], axis=2)
    red = np.linalg.norm(Z[:, None, :] - Z[None, :, :], axis=2)
    assert np.max(np.abs(orig - red)) < 1e-9


def test_collinear_points_compress_losslessly_to_one_dimension():
    t = np.linspace(0, 1, 30)
    X = np.stack([2 * t + 1, -3 * t + 4], axis=1)
    reducer = fit_reducer(X, k=1)
    Z = reduce_matrix(reducer, X)
    reconstructed = Z @ reducer.components + reducer.mean
    assert np.max(np.abs(reconstructed - X)) < 1e-9


def test_planted_separation_survives_reduction():
    X, labels = planted_clusters(100, centers=[np.zeros(10), np.full(10, 8.0)], sigma=1.0, seed=1)

    def separation_ratio(points):
        a, b = points[labels == 0], points[labels == 1]
        between = np.linalg.norm(a.mean(axis=0) - b.mean(axis=0))
        spread = lambda p: np.linalg.norm(p - p.mean(axis=0), axis=1).mean()
        return between / (0.5 * (spread(a) + spread(b)))

    original = separation_ratio(X)
    reduced = separation_ratio(reduce_matrix(fit_reducer(X, k=2), X))
    assert reduced >= original * 0.9


def test_k_above_dimension_rejected():
    X = np.random.default_rng(0).normal(size=(10, 3))
    with pytest.raises(ValueError):
        fit_reducer(X, k=4)


def test_reducer_deterministic_and_sign_fixed():
    X = np.random.default_rng(2).normal(size=(50, 5))
    a = fit_reducer(X, k=3)
    b = fit_reducer(X, k=3)
    assert np.array_equal(a.components, b.components)
    for row in a.components:
        assert row[np.argmax(np.abs(row))] > 0


def test_reduce_vector_dimension_checked():
    X = np.random.default_rng(0).normal(size=(10, 4))
    reducer = fit_reducer(X, k=2)
    with pytest.raises(ValueError):
        reduce_vector(reducer, np.zeros(5))


# ---------------------------------------------------------------------------
# k-means
# ---------------------------------------------------------------------------


def test_kmeans_recovers_planted_clusters():
    centers = [np.zeros(4), np.full(4, 10.0), np.array([10.0, -10.0, 0.0, 5.0])]
    X, truth = planted_clusters(120, centers, sigma=1.0, seed=7)
    model = kmeans_fit(X, k=3, seed=0)
    assert adjusted_rand_index(model.labels, truth) >= 0.9


def test_kmeans_identical_points_collapse_to_one_cluster():
    X = np.ones((25, 3))
    model = train_similar_search(X, ClusterParams(method="kmeans", k=5, seed=0))
    assert model.n_clusters == 1
    assert set(model.labels.tolist()) == {0}


def test_kmeans_deterministic_per_seed():
    X, _ = planted_clusters(50, [np.zeros(3), np.full(3, 6.0)], sigma=1.0, seed=3)
    a = kmeans_fit(X, k=2, seed=9)
    b = kmeans_fit(X, k=2, seed=9)
    assert np.array_equal(a.labels, b.labels)
    assert np.array_equal(a.centroids, b.centroids)


def test_kmeans_requires_enough_points():
    with pytest.raises(ValueError):
        kmeans_fit(np.zeros((2, 2)), k=3)


def test_pick_k_prefers_true_cluster_count():
    centers = [np.zeros(3), np.full(3, 12.0), np.array([12.0, -12.0, 0.0]), np.full(3, -12.0),
               np.array([-12.0, 12.0, 0.0]), np.array([0.0, 12.0, -12.0]), np.array([6.0, -6.0, 12.0]),
               np.array([-6.0, 6.0, -12.0])]
    X, _ = planted_clusters(40, centers, sigma=0.5, seed=5)
    k = pick_k(X, ClusterParams(seed=0, k_candidates=(8, 16, 32, 64)))
    assert k == 8


# ---------------------------------------------------------------------------
# HDBSCAN
# ---------------------------------------------------------------------------


def test_hdbscan_recovers_planted_clusters():
    centers = [np.zeros(4), np.full(4, 12.0), np.array([12.0, -12.0, 0.0, 6.0])]
    X, truth = planted_clusters(80, centers, sigma=0.8, seed=11)
    model = hdbscan_fit(X, ClusterParams(method="hdbscan", min_cluster_size=10))
    clustered = model.labels >= 0
    assert clustered.mean() > 0.9
    assert adjusted_rand_index(model.labels[clustered], truth[clustered]) >= 0.9


def test_train_similar_search_rejects_unknown_method():
    with pytest.raises(ValueError):
        train_similar_search(np.zeros((5, 2)), ClusterParams(method="dbscan"))
