"""Feature relevance and pruning: forest importances, Pearson correlation,
equal-value overlap, ANOVA / chi-square significance, and the fixed
pruning pipeline applied to flow datasets.
"""
from __future__ import annotations

import json
import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .dataset import (
    EncodingPolicy,
    LabeledDataset,
    SplitSpec,
    encode_columns,
    encode_features,
    train_test_split,
)
from .errors import EmptyDataset
from .schema import COLUMN_KINDS

log = logging.getLogger(__name__)

ALPHA = 0.05
CORR_THRESHOLD = 0.95
EQUAL_THRESHOLD = 0.9
TIME_COLUMNS = ("min_time", "max_time")
REDUNDANT_COLUMNS = ("forward_packets", "receiving_packets")
DROP_REASONS = ("time_leak", "constant", "redundant", "p_value", "correlated")


class DegenerateVariance(UserWarning):
    pass


class ZeroImpurityDecrease(UserWarning):
    pass


# ---------------------------------------------------------------------------
# importance
# ---------------------------------------------------------------------------

def forest_importances(X: np.ndarray, y: np.ndarray, n_trees: int = 100, seed: int = 0,
                       max_depth: int | None = None, max_features="sqrt") -> np.ndarray:
    """Mean decrease in Gini impurity, summed over every split of every tree
    (weighted by the node's share of its tree's samples) and normalized to 1.

    With ``max_features=None`` every split sees all columns, which makes the
    result exactly equivariant under column permutation; feature subsampling
    is index-based and only equivariant in distribution.
    """
    from .models import N_CLASSES
    from .models.forest import RandomForest

    rf = RandomForest(n_estimators=n_trees, max_depth=max_depth, max_features=max_features).fit(
        np.asarray(X, dtype=np.float64), np.asarray(y, dtype=np.int64), N_CLASSES, seed)
    total = rf.importances_.sum()
    d = X.shape[1]
    if not total > 0:
        warnings.warn("no split decreased impurity; importances set uniform",
                      ZeroImpurityDecrease, stacklevel=2)
        return np.full(d, 1.0 / d)
    return rf.importances_ / total


def rf_feature_importance(ds: LabeledDataset, n_trees: int = 100, seed: int = 0,
                          policy: EncodingPolicy = EncodingPolicy()) -> dict[str, float]:
    X, names = encode_features(ds, policy)
    return dict(zip(names, forest_importances(X, ds.labels, n_trees, seed).tolist()))


# ---------------------------------------------------------------------------
# correlation
# ---------------------------------------------------------------------------

def pearson_matrix(X: np.ndarray) -> np.ndarray:
    """Pearson r between columns; pairs with a zero-variance column are 0."""
    X = np.asarray(X, dtype=np.float64)
    Xc = X - X.mean(axis=0)
    ss = np.sqrt((Xc * Xc).sum(axis=0))
    live = ss > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        Z = np.where(live, Xc / np.where(live, ss, 1.0), 0.0)
    R = np.clip(Z.T @ Z, -1.0, 1.0)
    R = (R + R.T) / 2.0
    np.fill_diagonal(R, 1.0)
    return R


def equal_value_fraction(a, b) -> float:
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ValueError(f"columns differ in length: {a.shape} vs {b.shape}")
    if a.size == 0:
        return 0.0
    return float(np.mean(a == b))


# ---------------------------------------------------------------------------
# significance
# ---------------------------------------------------------------------------

def f_sf(F: float, d1: float, d2: float) -> float:
    """Upper tail of the F(d1, d2) distribution via the regularized incomplete beta."""
    if F <= 0:
        return 1.0
    if np.isinf(F):
        return 0.0
    return float(special.betainc(d2 / 2.0, d1 / 2.0, d2 / (d2 + d1 * F)))


def anova_f_pvalue(values, labels) -> tuple[float, float]:
    """One-way ANOVA of ``values`` grouped by ``labels``.

    Zero within-group variance gives ``(inf, 0)`` when group means differ and
    ``(0, 1)`` when every value is identical (with a DegenerateVariance warning).
    """
    x = np.asarray(values, dtype=np.float64)
    y = np.asarray(labels)
    groups = [x[y == g] for g in np.unique(y)]
    k = len(groups)
    n = len(x)
    if k < 2 or any(len(g) < 2 for g in groups):
        raise ValueError("ANOVA needs at least two classes with two rows each")
    grand = x.mean()
    ss_between = sum(len(g) * (g.mean() - grand) ** 2 for g in groups)
    ss_within = sum(((g - g.mean()) ** 2).sum() for g in groups)
    if ss_within <= 0.0:
        warnings.warn("zero within-group variance", DegenerateVariance, stacklevel=2)
        if ss_between > 0.0:
            return float("inf"), 0.0
        return 0.0, 1.0
    F = (ss_between / (k - 1)) / (ss_within / (n - k))
    return float(F), f_sf(F, k - 1, n - k)


def chi2_independence_pvalue(values, labels) -> tuple[float, float]:
    """Pearson chi-square test of independence between a categorical column and the class."""
    x = np.asarray(values)
    y = np.asarray(labels)
    cats, xi = np.unique(x, return_inverse=True)
    cls, yi = np.unique(y, return_inverse=True)
    if len(cats) < 2 or len(cls) < 2:
        return 0.0, 1.0
    table = np.zeros((len(cats), len(cls)))
    np.add.at(table, (xi, yi), 1)
    expected = table.sum(axis=1, keepdims=True) * table.sum(axis=0, keepdims=True) / table.sum()
    stat = float(((table - expected) ** 2 / expected).sum())
    dof = (len(cats) - 1) * (len(cls) - 1)
    return stat, float(special.gammaincc(dof / 2.0, stat / 2.0))


# ---------------------------------------------------------------------------
# pipeline
# ---------------------------------------------------------------------------

@dataclass
class FeatureReport:
    importances: dict = field(default_factory=dict)
    pearson: dict = field(default_factory=dict)      # {"features": [...], "matrix": [[...]]}
    p_values: dict = field(default_factory=dict)
    constants: list = field(default_factory=list)
    near_duplicates: list = field(default_factory=list)  # [a, b, equal_fraction, r]
    drops: list = field(default_factory=list)            # [feature, reason]

    def to_dict(self) -> dict:
        return {
            "importances": self.importances,
            "pearson": self.pearson,
            "p_values": self.p_values,
            "constants": self.constants,
            "near_duplicates": self.near_duplicates,
            "drops": self.drops,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=False) + "\n"

    @property
    def dropped(self) -> list[str]:
        return [f for f, _ in self.drops]


def _holdout_accuracy(ds: LabeledDataset, policy: EncodingPolicy, seed: int) -> float:
    from .models import ModelSpec, fit

    train, test = train_test_split(ds, SplitSpec(0.8, seed, True))
    model = fit(ModelSpec("decision_tree", {"max_depth": 8}, seed), train, policy)
    return float(np.mean(model.predict_dataset(test) == test.labels))


def paper_pipeline(ds: LabeledDataset, *, seed: int = 0, importance_trees: int = 50,
                   policy: EncodingPolicy = EncodingPolicy()
                   ) -> tuple[LabeledDataset, FeatureReport]:
    """Prune a flow dataset in five fixed steps.

    1. drop min_time / max_time (flow_duration keeps their signal);
    2. drop single-valued features;
    3. drop forward_packets / receiving_packets (num_packets covers them);
    4. drop features unrelated to the class at ALPHA (chi-square for
       flow_proto and other categoricals, one-way ANOVA otherwise);
    5. for pairs with |r| > 0.95 and > 90% equal values, drop the member whose
       removal costs less held-out decision-tree accuracy (ties: the earlier column).
    """
    if len(ds) == 0:
        raise EmptyDataset("feature pipeline on an empty dataset")
    report = FeatureReport()
    y = ds.labels
    report.importances = rf_feature_importance(ds, importance_trees, seed, policy)

    def drop(names, reason):
        nonlocal ds
        present = [n for n in names if n in ds.frame.columns]
        for n in present:
            report.drops.append([n, reason])
            log.info("drop %s (%s)", n, reason)
        ds = ds.drop(present)

    drop(TIME_COLUMNS, "time_leak")

    candidates = policy.feature_names(ds)
    report.constants = [c for c in candidates if ds.frame[c].nunique(dropna=False) <= 1]
    drop(report.constants, "constant")

    drop(REDUNDANT_COLUMNS, "redundant")

    failed = []
    for c in policy.feature_names(ds):
        if COLUMN_KINDS[c] == "categorical":
            _, p = chi2_independence_pvalue(ds.frame[c].to_numpy(), y)
        else:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", DegenerateVariance)
                _, p = anova_f_pvalue(encode_columns(ds, [c])[:, 0], y)
        report.p_values[c] = p
        if p > ALPHA:
            failed.append(c)
    drop(failed, "p_value")

    names = policy.feature_names(ds)
    X = encode_columns(ds, names)
    R = pearson_matrix(X)
    report.pearson = {"features": names, "matrix": R.tolist()}
    removed: set[str] = set()
    for i in range(len(names)):
        for j in range(i + 1, len(names)):
            a, b = names[i], names[j]
            if a in removed or b in removed or abs(R[i, j]) <= CORR_THRESHOLD:
                continue
            eq = equal_value_fraction(X[:, i], X[:, j])
            if eq <= EQUAL_THRESHOLD:
                continue
            report.near_duplicates.append([a, b, eq, float(R[i, j])])
            acc_without_a = _holdout_accuracy(ds.drop([a]), policy, seed)
            acc_without_b = _holdout_accuracy(ds.drop([b]), policy, seed)
            victim = a if acc_without_a >= acc_without_b else b
            log.info("%s ~ %s: accuracy without %s=%.4f, without %s=%.4f", a, b, a,
                     acc_without_a, b, acc_without_b)
            removed.add(victim)
            drop([victim], "correlated")
    return ds, report
