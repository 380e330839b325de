"""Multiclass softmax boosting: Newton-step gradient boosting and the
second-order (regularized gain) variant.

Each round fits one regression tree per class on the softmax cross-entropy
derivatives and adds ``learning_rate * tree`` to that class's raw score.
Scores start at the log class priors.
"""
import numpy as np

from .. import parallel
from .tree import Tree, grow_regressor


def softmax(F):
    z = F - F.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def cross_entropy(F, y):
    z = F - F.max(axis=1, keepdims=True)
    log_p = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    return float(-log_p[np.arange(len(y)), y].mean())


def newton_leaf_value(residual_sum, hess_sum):
    """Leaf output sum(y - p) / sum(p (1 - p))."""
    if abs(hess_sum) < 1e-150:
        return 0.0
    return residual_sum / hess_sum


def xgb_leaf_weight(grad_sum, hess_sum, reg_lambda):
    """Leaf output -G / (H + lambda)."""
    denom = hess_sum + reg_lambda
    if abs(denom) < 1e-150:
        return 0.0
    return -grad_sum / denom


def split_gain(g_left, h_left, g_right, h_right, reg_lambda, gamma):
    def term(g, h):
        return g * g / (h + reg_lambda)
    return 0.5 * (term(g_left, h_left) + term(g_right, h_right)
                  - term(g_left + g_right, h_left + h_right)) - gamma


class _SoftmaxBoost:
    def _init_scores(self, y, n_classes):
        counts = np.bincount(y, minlength=n_classes).astype(np.float64)
        prior = counts / counts.sum()
        with np.errstate(divide="ignore"):
            base = np.log(prior)
        # absent classes get a large negative but finite score
        return np.where(np.isfinite(base), base, -30.0)

    def fit(self, X, y, n_classes, seed=0):
        self.n_classes_ = n_classes
        self.base_score_ = self._init_scores(y, n_classes)
        Y = np.eye(n_classes)[y]
        F = np.tile(self.base_score_, (len(y), 1))
        self.trees_ = []
        self.train_loss_ = [cross_entropy(F, y)]
        for _ in range(int(self.n_rounds)):
            P = softmax(F)
            round_trees = parallel.map_ordered(
                lambda c: self._fit_class_tree(X, Y[:, c], P[:, c]), range(n_classes))
            for c, tree in enumerate(round_trees):
                F[:, c] += self.learning_rate * tree.predict_value(X)[:, 0]
            self.trees_.append(round_trees)
            self.train_loss_.append(cross_entropy(F, y))
        return self

    def decision_function(self, X):
        F = np.tile(self.base_score_, (len(X), 1))
        for round_trees in self.trees_:
            for c, tree in enumerate(round_trees):
                F[:, c] += self.learning_rate * tree.predict_value(X)[:, 0]
        return F

    def predict_proba(self, X):
        return softmax(self.decision_function(X))

    def to_payload(self):
        return {"n_classes": self.n_classes_, "base_score": self.base_score_.tolist(),
                "rounds": [[t.to_dict() for t in r] for r in self.trees_]}

    def load_payload(self, p):
        self.n_classes_ = int(p["n_classes"])
        self.base_score_ = np.asarray(p["base_score"], dtype=np.float64)
        self.trees_ = [[Tree.from_dict(t) for t in r] for r in p["rounds"]]
        return self


class GradientBoosting(_SoftmaxBoost):
    """Squared-error regression trees on the residuals ``y_c - p_c`` with
    Newton leaf values."""

    def __init__(self, learning_rate=0.1, n_rounds=100, max_depth=3, min_samples_leaf=1):
        self.learning_rate = learning_rate
        self.n_rounds = n_rounds
        self.max_depth = max_depth
        self.min_samples_leaf = min_samples_leaf

    def _fit_class_tree(self, X, yc, pc):
        residual = yc - pc
        return grow_regressor(
            X, residual, pc * (1.0 - pc), split_weight=np.ones(len(yc)), reg_lambda=0.0,
            max_depth=self.max_depth, min_samples_leaf=self.min_samples_leaf,
            leaf_value=newton_leaf_value)


class XGBStyle(_SoftmaxBoost):
    """Second-order boosting with L2 leaf regularization and a split penalty."""

    def __init__(self, learning_rate=0.1, n_rounds=100, max_depth=3, reg_lambda=1.0,
                 gamma=0.0, min_child_weight=0.0, min_samples_leaf=1):
        self.learning_rate = learning_rate
        self.n_rounds = n_rounds
        self.max_depth = max_depth
        self.reg_lambda = reg_lambda
        self.gamma = gamma
        self.min_child_weight = min_child_weight
        self.min_samples_leaf = min_samples_leaf

    def _fit_class_tree(self, X, yc, pc):
        lam = self.reg_lambda
        return grow_regressor(
            X, pc - yc, pc * (1.0 - pc), reg_lambda=lam, gamma=self.gamma,
            max_depth=self.max_depth, min_samples_leaf=self.min_samples_leaf,
            min_child_weight=self.min_child_weight, require_gain=True,
            leaf_value=lambda g, h: xgb_leaf_weight(g, h, lam))
