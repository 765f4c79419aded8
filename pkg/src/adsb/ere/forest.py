"""Random-forest classifier built from scratch.

Bootstrap-sampled CART trees split on the Gini criterion over a per-tree
random feature subset.  The forest predicts by majority vote and reports
vote fractions as class probabilities, so a fixed seed reproduces the
model and its predictions exactly.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ForestParams:
    n_trees: int = 100
    max_depth: int = 16
    min_leaf: int = 5
    max_features: int | float | str | None = "sqrt"  # None -> all features


def _resolve_max_features(max_features, d: int) -> int:
    if max_features is None:
        return d
    if max_features == "sqrt":
        return max(1, int(np.sqrt(d)))
    if isinstance(max_features, float):
        return max(1, min(d, int(round(max_features * d))))
    return max(1, min(d, int(max_features)))


@dataclass
class DecisionTree:
    feature: np.ndarray  # -1 marks a leaf
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    counts: np.ndarray  # (n_nodes, n_classes) training class counts
    leaf_class: np.ndarray = field(init=False)

    def __post_init__(self) -> None:
        self.leaf_class = np.argmax(self.counts, axis=1)

    def predict_codes(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(len(X), dtype=np.int64)
        while True:
            feat = self.feature[node]
            active = np.nonzero(feat >= 0)[0]
            if active.size == 0:
                break
            go_left = X[active, feat[active]] <= self.threshold[node[active]]
            node[active] = np.where(go_left, self.left[node[active]], self.right[node[active]])
        return self.leaf_class[node]

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "counts": self.counts.tolist(),
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "DecisionTree":
        return cls(
            feature=np.asarray(obj["feature"], dtype=np.int64),
            threshold=np.asarray(obj["threshold"], dtype=np.float64),
            left=np.asarray(obj["left"], dtype=np.int64),
            right=np.asarray(obj["right"], dtype=np.int64),
            counts=np.asarray(obj["counts"], dtype=np.int64),
        )


class _TreeBuilder:
    def __init__(self, X, y_codes, n_classes, features, max_depth, min_leaf):
        self.X = X
        self.y = y_codes
        self.n_classes = n_classes
        self.features = features
        self.max_depth = max_depth
        self.min_leaf = min_leaf
        self.feature: list[int] = []
        self.threshold: list[float] = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.counts: list[np.ndarray] = []

    def _new_node(self, counts: np.ndarray) -> int:
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.counts.append(counts)
        return len(self.feature) - 1

    def _best_split(self, idx: np.ndarray):
        ys = self.y[idx]
        n = len(idx)
        best = None
        for f in self.features:
            xs = self.X[idx, f]
            order = np.argsort(xs, kind="stable")
            xs_sorted = xs[order]
            boundaries = np.nonzero(xs_sorted[1:] != xs_sorted[:-1])[0]
            if boundaries.size == 0:
                continue
            onehot = np.zeros((n, self.n_classes), dtype=np.float64)
            onehot[np.arange(n), ys[order]] = 1.0
            prefix = np.cumsum(onehot, axis=0)
            total = prefix[-1]
            nl = boundaries + 1
            nr = n - nl
            valid = (nl >= self.min_leaf) & (nr >= self.min_leaf)
            if not valid.any():
                continue
            pos = boundaries[valid]
            nl = nl[valid].astype(np.float64)
            nr = nr[valid].astype(np.float64)
            left_counts = prefix[pos]
            right_counts = total - left_counts
            gini_left = 1.0 - ((left_counts / nl[:, None]) ** 2).sum(axis=1)
            gini_right = 1.0 - ((right_counts / nr[:, None]) ** 2).sum(axis=1)
            weighted = (nl * gini_left + nr * gini_right) / n
            j = int(np.argmin(weighted))
            if best is None or weighted[j] < best[0]:
                thr = float((xs_sorted[pos[j]] + xs_sorted[pos[j] + 1]) / 2.0)
                best = (float(weighted[j]), int(f), thr)
        return best

    def build(self, idx: np.ndarray, depth: int = 0) -> int:
        counts = np.bincount(self.y[idx], minlength=self.n_classes).astype(np.int64)
        node = self._new_node(counts)
        if depth >= self.max_depth or len(idx) < 2 * self.min_leaf or (counts > 0).sum() <= 1:
            return node
        best = self._best_split(idx)
        if best is None:
            return node
        _, f, thr = best
        mask = self.X[idx, f] <= thr
        self.feature[node] = f
        self.threshold[node] = thr
        self.left[node] = self.build(idx[mask], depth + 1)
        self.right[node] = self.build(idx[~mask], depth + 1)
        return node

    def finish(self) -> DecisionTree:
        return DecisionTree(
            feature=np.asarray(self.feature, dtype=np.int64),
            threshold=np.asarray(self.threshold, dtype=np.float64),
            left=np.asarray(self.left, dtype=np.int64),
            right=np.asarray(self.right, dtype=np.int64),
            counts=np.asarray(self.counts, dtype=np.int64),
        )


@dataclass
class RandomForest:
    classes: tuple[int, ...]
    trees: list[DecisionTree]
    params: ForestParams
    seed: int
    constant_class: int | None = None

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        """Vote fractions per class, shape (n_samples, n_classes)."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if self.constant_class is not None:
            probs = np.zeros((len(X), len(self.classes)))
            probs[:, self.classes.index(self.constant_class)] = 1.0
            return probs
        votes = np.zeros((len(X), len(self.classes)), dtype=np.float64)
        for tree in self.trees:
            codes = tree.predict_codes(X)
            votes[np.arange(len(X)), codes] += 1.0
        return votes / len(self.trees)

    def predict(self, X: np.ndarray) -> np.ndarray:
        """Majority vote; ties break toward the lowest class."""
        probs = self.predict_proba(X)
        codes = np.argmax(probs, axis=1)
        return np.asarray([self.classes[c] for c in codes])

    def predict_one(self, x: np.ndarray) -> tuple[int, float]:
        """(label, vote fraction of that label) for a single vector."""
        probs = self.predict_proba(x.reshape(1, -1))[0]
        code = int(np.argmax(probs))
        return self.classes[code], float(probs[code])

    def to_dict(self) -> dict:
        return {
            "classes": list(self.classes),
            "seed": self.seed,
            "constant_class": self.constant_class,
            "params": {
                "n_trees": self.params.n_trees,
                "max_depth": self.params.max_depth,
                "min_leaf": self.params.min_leaf,
                "max_features": self.params.max_features,
            },
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "RandomForest":
        return cls(
            classes=tuple(int(c) for c in obj["classes"]),
            trees=[DecisionTree.from_dict(t) for t in obj["trees"]],
            params=ForestParams(**obj["params"]),
            seed=int(obj["seed"]),
            constant_class=obj.get("constant_class"),
        )


def train_forest(X: np.ndarray, y: np.ndarray, params: ForestParams, seed: int = 0) -> RandomForest:
    """Train a seeded forest; single-class data degrades to a constant
    classifier with a warning instead of failing."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    if len(X) != len(y) or len(X) == 0:
        raise ValueError("X and y must be non-empty and aligned")
    classes = tuple(int(c) for c in np.unique(y))
    if len(classes) == 1:
        logger.warning("training data contains a single class %s; constant classifier", classes[0])
        return RandomForest(classes=classes, trees=[], params=params, seed=seed, constant_class=classes[0])

    code_of = {c: i for i, c in enumerate(classes)}
    y_codes = np.asarray([code_of[int(v)] for v in y], dtype=np.int64)
    n, d = X.shape
    m = _resolve_max_features(params.max_features, d)

    master = np.random.default_rng(seed)
    tree_seeds = master.integers(0, 2**63 - 1, size=params.n_trees)
    trees: list[DecisionTree] = []
    for tree_seed in tree_seeds:
        rng = np.random.default_rng(int(tree_seed))
        bootstrap = rng.integers(0, n, size=n)
        features = np.sort(rng.choice(d, size=m, replace=False))
        builder = _TreeBuilder(
            X[bootstrap],
            y_codes[bootstrap],
            len(classes),
            features,
            params.max_depth,
            params.min_leaf,
        )
        builder.build(np.arange(n))
        trees.append(builder.finish())
    return RandomForest(classes=classes, trees=trees, params=params, seed=seed)
