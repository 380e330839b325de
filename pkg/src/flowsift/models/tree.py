"""Array-backed binary trees: CART classification and second-order regression.

Split rule everywhere: ``x[feature] <= threshold`` goes left. Thresholds are
midpoints between adjacent distinct observed values. Among splits whose
score is within ``TIE_TOL`` of the best, the lowest feature index wins,
then the lowest threshold.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

TIE_TOL = 1e-12
LEAF = -1


@dataclass
class Tree:
    feature: np.ndarray    # int, LEAF for leaves
    threshold: np.ndarray  # float
    left: np.ndarray       # int
    right: np.ndarray      # int
    value: np.ndarray      # (n_nodes, k): class distribution or (n_nodes, 1) leaf value

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def depth(self) -> int:
        depth = np.zeros(self.n_nodes, dtype=np.int64)
        for i in range(self.n_nodes):  # children always follow their parent
            if self.feature[i] != LEAF:
                depth[self.left[i]] = depth[self.right[i]] = depth[i] + 1
        return int(depth.max())

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf index reached by each row."""
        node = np.zeros(len(X), dtype=np.int64)
        active = np.flatnonzero(self.feature[node] != LEAF)
        while active.size:
            n = node[active]
            go_left = X[active, self.feature[n]] <= self.threshold[n]
            node[active] = np.where(go_left, self.left[n], self.right[n])
            active = active[self.feature[node[active]] != LEAF]
        return node

    def predict_value(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(X)]

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Tree":
        value = np.asarray(d["value"], dtype=np.float64)
        return cls(
            np.asarray(d["feature"], dtype=np.int64),
            np.asarray(d["threshold"], dtype=np.float64),
            np.asarray(d["left"], dtype=np.int64),
            np.asarray(d["right"], dtype=np.int64),
            value.reshape(len(d["feature"]), -1),
        )


class _Builder:
    def __init__(self):
        self.feature, self.threshold, self.left, self.right, self.value = [], [], [], [], []

    def add(self, value) -> int:
        self.feature.append(LEAF)
        self.threshold.append(0.0)
        self.left.append(LEAF)
        self.right.append(LEAF)
        self.value.append(value)
        return len(self.feature) - 1

    def split(self, node: int, feature: int, threshold: float, left: int, right: int):
        self.feature[node] = feature
        self.threshold[node] = threshold
        self.left[node] = left
        self.right[node] = right

    def build(self) -> Tree:
        return Tree(
            np.asarray(self.feature, dtype=np.int64),
            np.asarray(self.threshold, dtype=np.float64),
            np.asarray(self.left, dtype=np.int64),
            np.asarray(self.right, dtype=np.int64),
            np.asarray(self.value, dtype=np.float64).reshape(len(self.feature), -1),
        )


def _midpoint(a: float, b: float) -> float:
    mid = (a + b) / 2.0
    if mid >= b:  # adjacent floats
        mid = a
    return mid


def _pick(candidates: list[tuple[int, np.ndarray, np.ndarray, np.ndarray]]):
    """candidates: (feature, scores, positions, sorted column). Returns best or None."""
    best = -np.inf
    for _, scores, _, _ in candidates:
        if scores.size:
            best = max(best, float(scores.max()))
    if best == -np.inf:
        return None
    cut = best - TIE_TOL * max(1.0, abs(best))
    for f, scores, pos, xs in candidates:
        hit = np.flatnonzero(scores >= cut)
        if hit.size:
            i = pos[hit[0]]
            return f, _midpoint(xs[i], xs[i + 1]), i + 1, float(scores[hit[0]])
    return None


# ---------------------------------------------------------------------------
# classification (Gini)
# ---------------------------------------------------------------------------

def gini(counts: np.ndarray) -> float:
    n = counts.sum()
    if n == 0:
        return 0.0
    p = counts / n
    return float(1.0 - np.dot(p, p))


def grow_classifier(X: np.ndarray, y: np.ndarray, n_classes: int, *,
                    max_depth: int | None = None, min_samples_split: int = 2,
                    min_samples_leaf: int = 1, max_features: int | None = None,
                    rng: np.random.Generator | None = None,
                    importances: np.ndarray | None = None) -> Tree:
    """Grow a CART tree on rows ``X`` (duplicates allowed, e.g. bootstrap).

    ``importances`` (length n_features) accumulates the node-weighted Gini
    decrease of every split: (n_node / n_root) * (G_node - weighted child G).
    """
    n_total, d = X.shape
    onehot = np.eye(n_classes, dtype=np.int64)
    b = _Builder()
    root_counts = np.bincount(y, minlength=n_classes)
    root = b.add(root_counts / len(y))
    stack = [(root, np.arange(len(y)), 0, root_counts)]
    while stack:
        node, idx, depth, counts = stack.pop()
        n = len(idx)
        if ((max_depth is not None and depth >= max_depth) or n < min_samples_split
                or n < 2 * min_samples_leaf or np.count_nonzero(counts) <= 1):
            continue
        if max_features is not None and max_features < d:
            feats = np.sort(rng.choice(d, size=max_features, replace=False))
        else:
            feats = range(d)
        yi = y[idx]
        candidates = []
        for f in feats:
            x = X[idx, f]
            order = np.argsort(x, kind="stable")
            xs = x[order]
            cum = np.cumsum(onehot[yi[order]], axis=0)
            pos = np.flatnonzero(xs[:-1] < xs[1:])
            n_left = pos + 1
            keep = (n_left >= min_samples_leaf) & (n - n_left >= min_samples_leaf)
            pos, n_left = pos[keep], n_left[keep]
            cl = cum[pos]
            cr = counts - cl
            scores = (cl * cl).sum(axis=1) / n_left + (cr * cr).sum(axis=1) / (n - n_left)
            candidates.append((f, scores, pos, xs))
        picked = _pick(candidates)
        if picked is None:
            continue
        f, thr, _, score = picked
        go_left = X[idx, f] <= thr
        li, ri = idx[go_left], idx[~go_left]
        lc = np.bincount(y[li], minlength=n_classes)
        rc = counts - lc
        if importances is not None:
            importances[f] += (score - float(np.dot(counts, counts)) / n) / n_total
        left = b.add(lc / len(li))
        right = b.add(rc / len(ri))
        b.split(node, f, thr, left, right)
        # LIFO: left subtree is expanded first
        stack.append((right, ri, depth + 1, rc))
        stack.append((left, li, depth + 1, lc))
    return b.build()


# ---------------------------------------------------------------------------
# regression on (first, second) order statistics
# ---------------------------------------------------------------------------

def grow_regressor(X: np.ndarray, grad: np.ndarray, hess: np.ndarray, *,
                   split_weight: np.ndarray | None = None, reg_lambda: float = 0.0,
                   gamma: float = 0.0, max_depth: int | None = 3,
                   min_samples_leaf: int = 1, min_child_weight: float = 0.0,
                   require_gain: bool = False, leaf_value=None) -> Tree:
    """Grow a regression tree from per-row gradient statistics.

    Split score is ``G_L^2/(W_L+lam) + G_R^2/(W_R+lam)`` where G sums ``grad``
    and W sums ``split_weight`` (defaults to ``hess``). With ``require_gain``
    the split must satisfy ``0.5 * (score - G^2/(W+lam)) - gamma > 0``.
    ``leaf_value(grad_sum, hess_sum)`` gives each leaf's output.
    """
    n_total, d = X.shape
    w = hess if split_weight is None else split_weight
    if leaf_value is None:
        def leaf_value(g, h):
            return -g / (h + reg_lambda)
    b = _Builder()
    root = b.add([leaf_value(float(grad.sum()), float(hess.sum()))])
    stack = [(root, np.arange(n_total), 0)]
    while stack:
        node, idx, depth = stack.pop()
        n = len(idx)
        if (max_depth is not None and depth >= max_depth) or n < 2 * min_samples_leaf:
            continue
        gi, wi = grad[idx], w[idx]
        g_tot, w_tot = float(gi.sum()), float(wi.sum())
        parent = g_tot * g_tot / (w_tot + reg_lambda) if w_tot + reg_lambda > 0 else 0.0
        candidates = []
        for f in range(d):
            x = X[idx, f]
            order = np.argsort(x, kind="stable")
            xs = x[order]
            cg = np.cumsum(gi[order])
            cw = np.cumsum(wi[order])
            pos = np.flatnonzero(xs[:-1] < xs[1:])
            n_left = pos + 1
            keep = (n_left >= min_samples_leaf) & (n - n_left >= min_samples_leaf)
            pos = pos[keep]
            gl, wl = cg[pos], cw[pos]
            gr, wr = g_tot - gl, w_tot - wl
            if min_child_weight > 0:
                ok = (wl >= min_child_weight) & (wr >= min_child_weight)
                pos, gl, wl, gr, wr = pos[ok], gl[ok], wl[ok], gr[ok], wr[ok]
            with np.errstate(divide="ignore", invalid="ignore"):
                scores = gl * gl / (wl + reg_lambda) + gr * gr / (wr + reg_lambda)
            scores = np.where(np.isfinite(scores), scores, -np.inf)
            good = scores > -np.inf
            candidates.append((f, scores[good], pos[good], xs))
        picked = _pick(candidates)
        if picked is None:
            continue
        f, thr, _, score = picked
        gain = 0.5 * (score - parent) - gamma
        if require_gain:
            if not gain > 0:
                continue
        elif not score - parent > TIE_TOL * max(1.0, abs(parent)):
            continue
        go_left = X[idx, f] <= thr
        li, ri = idx[go_left], idx[~go_left]
        left = b.add([leaf_value(float(grad[li].sum()), float(hess[li].sum()))])
        right = b.add([leaf_value(float(grad[ri].sum()), float(hess[ri].sum()))])
        b.split(node, f, thr, left, right)
        stack.append((right, ri, depth + 1))
        stack.append((left, li, depth + 1))
    return b.build()
