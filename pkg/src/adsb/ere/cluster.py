"""Similar-accident search clustering: seeded k-means and HDBSCAN."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class ClusterParams:
    method: str = "kmeans"  # "kmeans" | "hdbscan"
    k: int | None = None  # kmeans cluster count; None -> silhouette pick
    seed: int = 0
    max_iter: int = 300
    min_cluster_size: int = 5  # hdbscan
    min_samples: int | None = None  # hdbscan
    k_candidates: tuple[int, ...] = (8, 16, 32, 64)


@dataclass(frozen=True)
class ClusterModel:
    method: str
    labels: np.ndarray  # training-point assignments; -1 marks hdbscan noise
    centroids: np.ndarray | None = None
    params: dict = field(default_factory=dict)

    @property
    def n_clusters(self) -> int:
        labels = self.labels[self.labels >= 0]
        return int(labels.max()) + 1 if labels.size else 0


def _kmeans_pp_init(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """Seeded ++-style init; stops early when no spread is left, so fully
    degenerate inputs collapse to a single centroid."""
    n = X.shape[0]
    centroids = [X[rng.integers(n)]]
    d2 = np.sum((X - centroids[0]) ** 2, axis=1)
    while len(centroids) < k:
        total = d2.sum()
        if total <= 0.0:
            break
        probs = d2 / total
        centroids.append(X[rng.choice(n, p=probs)])
        d2 = np.minimum(d2, np.sum((X - centroids[-1]) ** 2, axis=1))
    return np.array(centroids)


def kmeans_fit(X: np.ndarray, k: int, seed: int = 0, max_iter: int = 300) -> ClusterModel:
    """Lloyd's algorithm with seeded ++-style init; deterministic per seed."""
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if n < k:
        raise ValueError(f"need at least k={k} points, got {n}")
    rng = np.random.default_rng(seed)
    centroids = _kmeans_pp_init(X, k, rng)
    labels = np.zeros(n, dtype=np.int64)
    for _ in range(max_iter):
        d2 = ((X[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        new_labels = np.argmin(d2, axis=1)
        if np.array_equal(new_labels, labels) and _ > 0:
            break
        labels = new_labels
        for j in range(len(centroids)):
            members = X[labels == j]
            if len(members):
                centroids[j] = members.mean(axis=0)
    return ClusterModel(
        method="kmeans",
        labels=labels,
        centroids=centroids,
        params={"k": int(len(centroids)), "seed": int(seed)},
    )


def silhouette_sampled(X: np.ndarray, labels: np.ndarray, seed: int = 0, max_points: int = 2000) -> float:
    """Mean silhouette on a seeded subsample (full pairwise is quadratic)."""
    X = np.asarray(X, dtype=np.float64)
    labels = np.asarray(labels)
    if len(set(labels.tolist())) < 2:
        return -1.0
    idx = np.arange(len(X))
    if len(X) > max_points:
        idx = np.sort(np.random.default_rng(seed).choice(len(X), size=max_points, replace=False))
    sample = X[idx]
    sample_labels = labels[idx]
    d = np.sqrt(((sample[:, None, :] - sample[None, :, :]) ** 2).sum(axis=2))
    scores = []
    for i in range(len(sample)):
        same = sample_labels == sample_labels[i]
        same[i] = False
        if not same.any():
            continue
        a = d[i][same].mean()
        b = min(
            d[i][sample_labels == other].mean()
            for other in set(sample_labels.tolist())
            if other != sample_labels[i]
        )
        scores.append((b - a) / max(a, b) if max(a, b) > 0 else 0.0)
    return float(np.mean(scores)) if scores else -1.0


def pick_k(X: np.ndarray, params: ClusterParams) -> int:
    """Best silhouette over the candidate list, restricted to k < n."""
    n = len(X)
    candidates = [k for k in params.k_candidates if 1 < k < n]
    if not candidates:
        return max(1, min(n, int(np.sqrt(n)) or 1))
    best_k, best_score = candidates[0], -np.inf
    for k in candidates:
        model = kmeans_fit(X, k, seed=params.seed, max_iter=params.max_iter)
        score = silhouette_sampled(X, model.labels, seed=params.seed)
        if score > best_score:
            best_k, best_score = k, score
    return best_k


def hdbscan_fit(X: np.ndarray, params: ClusterParams) -> ClusterModel:
    from sklearn.cluster import HDBSCAN  # deferred: heavy import

    X = np.asarray(X, dtype=np.float64)
    min_cluster_size = min(params.min_cluster_size, max(2, len(X)))
    model = HDBSCAN(min_cluster_size=min_cluster_size, min_samples=params.min_samples)
    labels = model.fit_predict(X).astype(np.int64)
    return ClusterModel(
        method="hdbscan",
        labels=labels,
        centroids=None,
        params={
            "min_cluster_size": int(min_cluster_size),
            "min_samples": params.min_samples,
        },
    )


def train_similar_search(X: np.ndarray, params: ClusterParams) -> ClusterModel:
    """Cluster reduced training vectors for the similar-accident search."""
    X = np.asarray(X, dtype=np.float64)
    if params.method == "kmeans":
        if len(X) and not len(np.unique(X, axis=0)) > 1:
            # All points identical: a single cluster, by contract.
            return kmeans_fit(X, 1, seed=params.seed, max_iter=params.max_iter)
        k = params.k if params.k is not None else pick_k(X, params)
        k = min(k, len(X))
        return kmeans_fit(X, k, seed=params.seed, max_iter=params.max_iter)
    if params.method == "hdbscan":
        return hdbscan_fit(X, params)
    raise ValueError(f"unknown clustering method {params.method!r}")
