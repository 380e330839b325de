"""CART decision tree and bagged random forest classifiers."""
import math

import numpy as np

from .. import parallel
from .tree import Tree, grow_classifier


def _depth(max_depth):
    return None if max_depth is None or max_depth == math.inf else int(max_depth)


class DecisionTree:
    def __init__(self, max_depth=None, min_samples_split=2, min_samples_leaf=1):
        self.max_depth = max_depth
        self.min_samples_split = min_samples_split
        self.min_samples_leaf = min_samples_leaf

    def fit(self, X, y, n_classes, seed=0):
        self.n_features_ = X.shape[1]
        self.importances_ = np.zeros(X.shape[1])
        self.tree_ = grow_classifier(
            X, y, n_classes, max_depth=_depth(self.max_depth),
            min_samples_split=self.min_samples_split,
            min_samples_leaf=self.min_samples_leaf, importances=self.importances_)
        return self

    def predict_proba(self, X):
        return self.tree_.predict_value(X)

    def to_payload(self):
        return {"tree": self.tree_.to_dict()}

    def load_payload(self, p):
        self.tree_ = Tree.from_dict(p["tree"])
        return self


def resolve_max_features(max_features, d: int) -> int:
    if max_features is None:
        return d
    if max_features == "sqrt":
        return max(1, int(math.isqrt(d)))
    if max_features == "log2":
        return max(1, int(math.log2(d))) if d > 1 else 1
    if isinstance(max_features, float):
        return max(1, int(max_features * d))
    return min(d, int(max_features))


class RandomForest:
    """Bootstrap-aggregated CART trees with per-split feature subsampling.

    Tree ``i`` draws from ``default_rng([seed, i])`` so the fit does not depend
    on how trees are scheduled across workers. ``predict_proba`` returns vote
    shares.
    """

    def __init__(self, n_estimators=100, max_depth=None, min_samples_split=2,
                 min_samples_leaf=1, max_features="sqrt", bootstrap=True):
        self.n_estimators = n_estimators
        self.max_depth = max_depth
        self.min_samples_split = min_samples_split
        self.min_samples_leaf = min_samples_leaf
        self.max_features = max_features
        self.bootstrap = bootstrap

    def _fit_one(self, i, X, y, n_classes, seed, m):
        rng = np.random.default_rng([seed, i])
        n = len(y)
        rows = rng.integers(0, n, size=n) if self.bootstrap else np.arange(n)
        imp = np.zeros(X.shape[1])
        tree = grow_classifier(
            X[rows], y[rows], n_classes, max_depth=_depth(self.max_depth),
            min_samples_split=self.min_samples_split,
            min_samples_leaf=self.min_samples_leaf, max_features=m, rng=rng,
            importances=imp)
        return tree, imp

    def fit(self, X, y, n_classes, seed=0):
        m = resolve_max_features(self.max_features, X.shape[1])
        results = parallel.map_ordered(
            lambda i: self._fit_one(i, X, y, n_classes, seed, m), range(self.n_estimators))
        self.trees_ = [t for t, _ in results]
        self.importances_ = np.sum([imp for _, imp in results], axis=0)
        self.n_classes_ = n_classes
        return self

    def predict_proba(self, X):
        votes = np.zeros((len(X), self.n_classes_))
        rows = np.arange(len(X))
        for tree in self.trees_:
            votes[rows, np.argmax(tree.predict_value(X), axis=1)] += 1
        return votes / len(self.trees_)

    def to_payload(self):
        return {"n_classes": self.n_classes_, "trees": [t.to_dict() for t in self.trees_]}

    def load_payload(self, p):
        self.n_classes_ = int(p["n_classes"])
        self.trees_ = [Tree.from_dict(t) for t in p["trees"]]
        return self
