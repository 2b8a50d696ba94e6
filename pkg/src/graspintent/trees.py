"""Extremely randomized trees classifier over window feature vectors.

Every tree is grown on the full training set (no bootstrap). At each node a
fixed number of candidate features is drawn without replacement; each
non-constant candidate gets a single uniform random cut between its
node-local min and max, and the (feature, cut) pair with the largest Gini
impurity decrease wins. Nodes split until pure, smaller than
``min_samples_split``, or until every drawn candidate is constant.

The forest posterior is the plain average of per-tree leaf class
frequencies. Growth is deterministic given ``random_state``: each tree uses
its own generator spawned from one seed sequence, and candidate draws and
cuts consume randomness in a fixed order.
"""

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin

DEFAULT_N_TREES = 50
DEFAULT_MIN_SAMPLES_SPLIT = 2


@dataclass
class _Tree:
    feature: np.ndarray    # (n_nodes,) int32, -1 for leaves
    threshold: np.ndarray  # (n_nodes,) float64, 0.0 for leaves
    left: np.ndarray       # (n_nodes,) int32, -1 for leaves
    right: np.ndarray      # (n_nodes,) int32, -1 for leaves
    counts: np.ndarray     # (n_nodes, n_classes) int64, zeros for internal

    @property
    def leaf_probs(self):
        probs = self.counts.astype(np.float64)
        totals = probs.sum(axis=1, keepdims=True)
        np.divide(probs, totals, out=probs, where=totals > 0)
        return probs

    def apply(self, X):
        node = np.zeros(X.shape[0], dtype=np.int64)
        active = self.feature[node] >= 0
        while active.any():
            idx = np.flatnonzero(active)
            nd = node[idx]
            go_left = X[idx, self.feature[nd]] < self.threshold[nd]
            node[idx] = np.where(go_left, self.left[nd], self.right[nd])
            active[idx] = self.feature[node[idx]] >= 0
        return node


def _gini(counts, total):
    frac = counts / total
    return 1.0 - float((frac * frac).sum())


def _grow_tree(X, y_idx, n_classes, min_samples_split, n_candidates, rng):
    feature, threshold, left, right, counts = [], [], [], [], []

    def new_node():
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        counts.append(None)
        return len(feature) - 1

    n_features = X.shape[1]
    m = min(n_candidates, n_features)
    root = new_node()
    stack = [(np.arange(X.shape[0]), root)]
    while stack:
        idx, pos = stack.pop()
        node_counts = np.bincount(y_idx[idx], minlength=n_classes)
        n = idx.size
        pure = int((node_counts > 0).sum()) <= 1
        if pure or n < min_samples_split:
            counts[pos] = node_counts
            continue

        cand = rng.choice(n_features, size=m, replace=False)
        Xn = X[idx][:, cand]
        lo, hi = Xn.min(axis=0), Xn.max(axis=0)
        varying = hi > lo
        best = None
        if varying.any():
            cuts = np.zeros(m)
            cuts[varying] = rng.uniform(lo[varying], hi[varying])
            g_parent = _gini(node_counts, n)
            for j in np.flatnonzero(varying):
                mask = Xn[:, j] < cuts[j]
                nl = int(mask.sum())
                if nl == 0 or nl == n:
                    continue
                cl = np.bincount(y_idx[idx[mask]], minlength=n_classes)
                cr = node_counts - cl
                decrease = (
                    g_parent
                    - (nl / n) * _gini(cl, nl)
                    - ((n - nl) / n) * _gini(cr, n - nl)
                )
                if best is None or decrease > best[0]:
                    best = (decrease, int(cand[j]), float(cuts[j]), mask)

        if best is None:
            counts[pos] = node_counts
            continue
        _, feat, cut, mask = best
        feature[pos] = feat
        threshold[pos] = cut
        li, ri = new_node(), new_node()
        left[pos], right[pos] = li, ri
        stack.append((idx[~mask], ri))
        stack.append((idx[mask], li))  # left subtree grown first

    count_matrix = np.zeros((len(feature), n_classes), dtype=np.int64)
    for i, c in enumerate(counts):
        if c is not None:
            count_matrix[i] = c
    return _Tree(
        feature=np.asarray(feature, dtype=np.int32),
        threshold=np.asarray(threshold, dtype=np.float64),
        left=np.asarray(left, dtype=np.int32),
        right=np.asarray(right, dtype=np.int32),
        counts=count_matrix,
    )


class ExtraTreesGraspClassifier(BaseEstimator, ClassifierMixin):
    """Forest of extremely randomized trees with averaged leaf posteriors.

    Parameters
    ----------
    n_trees : ensemble size.
    min_samples_split : smallest node the growth may still split.
    n_candidate_features : features drawn per node; default
        ``ceil(sqrt(n_features))``.
    classes : optional fixed label set (e.g. ``range(14)`` for the grasp
        taxonomy); inferred from the training labels when omitted.
    random_state : seed for deterministic growth.
    """

    def __init__(self, n_trees=DEFAULT_N_TREES,
                 min_samples_split=DEFAULT_MIN_SAMPLES_SPLIT,
                 n_candidate_features=None, classes=None, random_state=None):
        self.n_trees = n_trees
        self.min_samples_split = min_samples_split
        self.n_candidate_features = n_candidate_features
        self.classes = classes
        self.random_state = random_state

    def fit(self, X, y):
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y)
        if X.ndim != 2 or X.shape[0] < 2:
            raise ValueError(f"need a (n>=2, d) feature matrix, got {X.shape}")
        if y.shape != (X.shape[0],):
            raise ValueError("X and y lengths differ")
        if not np.isfinite(X).all():
            raise ValueError("features contain non-finite values")
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")

        if self.classes is None:
            self.classes_ = np.unique(y)
        else:
            self.classes_ = np.asarray(sorted(self.classes))
            missing = set(np.unique(y)) - set(self.classes_.tolist())
            if missing:
                raise ValueError(f"labels {sorted(missing)} not in declared classes")
        y_idx = np.searchsorted(self.classes_, y).astype(np.int64)

        n_cand = self.n_candidate_features
        if n_cand is None:
            n_cand = int(np.ceil(np.sqrt(X.shape[1])))
        if n_cand < 1:
            raise ValueError("n_candidate_features must be >= 1")

        seeds = np.random.SeedSequence(self.random_state).spawn(self.n_trees)
        self.trees_ = [
            _grow_tree(
                X, y_idx, len(self.classes_), self.min_samples_split,
                n_cand, np.random.default_rng(seed),
            )
            for seed in seeds
        ]
        self.n_features_in_ = X.shape[1]
        return self

    def _check_input(self, X):
        if not hasattr(self, "trees_"):
            raise ValueError("classifier is not fitted")
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"expected {self.n_features_in_} features, got {X.shape[1]}"
            )
        return X

    def predict_proba(self, X):
        X = self._check_input(X)
        acc = np.zeros((X.shape[0], len(self.classes_)))
        for tree in self.trees_:
            acc += tree.leaf_probs[tree.apply(X)]
        return acc / len(self.trees_)

    def predict(self, X):
        probs = self.predict_proba(X)
        return self.classes_[np.argmax(probs, axis=1)]

    # -- serialization ------------------------------------------------------

    def to_dict(self):
        if not hasattr(self, "trees_"):
            raise ValueError("classifier is not fitted")
        trees = []
        for tree in self.trees_:
            is_leaf = tree.feature < 0
            trees.append(
                {
                    "feature": tree.feature.tolist(),
                    "threshold": tree.threshold.tolist(),
                    "left": tree.left.tolist(),
                    "right": tree.right.tolist(),
                    "counts": [
                        tree.counts[i].tolist() if is_leaf[i] else []
                        for i in range(tree.feature.size)
                    ],
                }
            )
        return {
            "classes": [int(c) for c in self.classes_],
            "n_features": int(self.n_features_in_),
            "trees": trees,
        }

    @classmethod
    def from_dict(cls, payload, **params):
        clf = cls(**params)
        clf.classes_ = np.asarray(payload["classes"])
        clf.n_features_in_ = int(payload["n_features"])
        n_classes = len(clf.classes_)
        trees = []
        for entry in payload["trees"]:
            n_nodes = len(entry["feature"])
            counts = np.zeros((n_nodes, n_classes), dtype=np.int64)
            for i, row in enumerate(entry["counts"]):
                if row:
                    counts[i] = row
            trees.append(
                _Tree(
                    feature=np.asarray(entry["feature"], dtype=np.int32),
                    threshold=np.asarray(entry["threshold"], dtype=np.float64),
                    left=np.asarray(entry["left"], dtype=np.int32),
                    right=np.asarray(entry["right"], dtype=np.int32),
                    counts=counts,
                )
            )
        clf.trees_ = trees
        clf.n_trees = len(trees)
        return clf
