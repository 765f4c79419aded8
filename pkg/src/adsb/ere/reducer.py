"""Principal-component projection used before similarity clustering."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Reducer:
    mean: np.ndarray  # (d,)
    components: np.ndarray  # (k, d), orthonormal rows
    fingerprint: str

    @property
    def k(self) -> int:
        return int(self.components.shape[0])

    @property
    def input_dim(self) -> int:
        return int(self.components.shape[1])


def fit_reducer(vectors: np.ndarray, k: int, fingerprint: str = "") -> Reducer:
    """Fit a k-dimensional principal-component projection.

    Components use the full SVD basis (so k up to the input dimension is
    always available) with the sign convention that each component's
    largest-magnitude loading is positive, making the fit reproducible.
    """
    X = np.asarray(vectors, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 2:
        raise ValueError("need at least two training vectors")
    n, d = X.shape
    if not (1 <= k <= d):
        raise ValueError(f"k must be in 1..{d}, got {k}")
    mean = X.mean(axis=0)
    _, _, vt = np.linalg.svd(X - mean, full_matrices=True)
    components = vt[:k].copy()
    for row in components:
        pivot = np.argmax(np.abs(row))
        if row[pivot] < 0:
            row *= -1.0
    mean.setflags(write=False)
    components.setflags(write=False)
    return Reducer(mean=mean, components=components, fingerprint=fingerprint)


def reduce_matrix(reducer: Reducer, vectors: np.ndarray) -> np.ndarray:
    X = np.asarray(vectors, dtype=np.float64)
    return (X - reducer.mean) @ reducer.components.T


def reduce_vector(reducer: Reducer, vector: np.ndarray) -> np.ndarray:
    v = np.asarray(vector, dtype=np.float64)
    if v.shape != (reducer.input_dim,):
        raise ValueError(f"expected vector of dimension {reducer.input_dim}, got {v.shape}")
    return (v - reducer.mean) @ reducer.components.T
