"""Confusion matrices, per-class metrics, stratified k-fold CV and grid search."""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import parallel
from .dataset import EncodingPolicy, LabeledDataset
from .errors import EmptyMatrix, FlowsiftError, LengthMismatch, TooFewRows, UnknownLabel
from .schema import CLASS_NAMES

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ConfusionMatrix:
    """Rows are true labels, columns predicted labels."""

    labels: tuple
    counts: np.ndarray

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def reorder(self, labels: Sequence[str]) -> "ConfusionMatrix":
        idx = [self.labels.index(l) for l in labels]
        return ConfusionMatrix(tuple(labels), self.counts[np.ix_(idx, idx)])

    def to_dict(self) -> dict:
        return {"labels": list(self.labels), "counts": self.counts.tolist()}

    def to_text(self, title: str | None = None) -> str:
        """Aligned table: true-label rows, predicted columns, column totals."""
        names = list(self.labels)
        w = max(8, max(len(n) for n in names) + 2)
        lines = []
        if title:
            lines.append(title)
        lines.append(" " * w + "Predicted")
        lines.append("True Label".ljust(w) + "".join(n.rjust(w) for n in names))
        for i, n in enumerate(names):
            lines.append(n.ljust(w) + "".join(str(int(v)).rjust(w) for v in self.counts[i]))
        lines.append("Total".ljust(w) + "".join(str(int(v)).rjust(w)
                                                for v in self.counts.sum(axis=0)))
        return "\n".join(lines) + "\n"


def confusion_matrix(true_labels: Sequence, predicted_labels: Sequence,
                     labels: Sequence[str] = CLASS_NAMES) -> ConfusionMatrix:
    """Count (true, predicted) pairs. Labels may be class names or indices into ``labels``."""
    if len(true_labels) != len(predicted_labels):
        raise LengthMismatch(f"{len(true_labels)} true labels vs {len(predicted_labels)} "
                             f"predictions")
    labels = tuple(labels)
    k = len(labels)
    lookup = {name: i for i, name in enumerate(labels)}

    def index(v):
        if isinstance(v, (str, np.str_)):
            if v not in lookup:
                raise UnknownLabel(f"label {v!r} not in {labels}")
            return lookup[v]
        i = int(v)
        if not 0 <= i < k:
            raise UnknownLabel(f"label index {i} outside 0..{k - 1}")
        return i

    counts = np.zeros((k, k), dtype=np.int64)
    for t, p in zip(true_labels, predicted_labels):
        counts[index(t), index(p)] += 1
    return ConfusionMatrix(labels, counts)


@dataclass(frozen=True)
class EvalReport:
    accuracy: float
    per_class: dict       # name -> (precision, recall, f1)
    macro_f1: float
    confusion: ConfusionMatrix
    n: int

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "macro_f1": self.macro_f1,
            "n": self.n,
            "per_class": {k: {"precision": p, "recall": r, "f1": f}
                          for k, (p, r, f) in self.per_class.items()},
            "confusion": self.confusion.to_dict(),
        }

    def to_text(self, title: str | None = None) -> str:
        out = [self.confusion.to_text(title)]
        out.append(f"accuracy {100 * self.accuracy:.2f}%  macro-F1 {100 * self.macro_f1:.2f}%"
                   f"  n={self.n}\n")
        return "".join(out)


def metrics(cm: ConfusionMatrix) -> EvalReport:
    """Accuracy, per-class precision/recall/F1 and their unweighted (macro) F1 mean.

    Precision with an empty predicted column is 0, as is F1 when P + R = 0.
    """
    c = cm.counts.astype(np.float64)
    total = c.sum()
    if total <= 0:
        raise EmptyMatrix("confusion matrix has no samples")
    tp = np.diag(c)
    col = c.sum(axis=0)
    row = c.sum(axis=1)
    precision = np.divide(tp, col, out=np.zeros_like(tp), where=col > 0)
    recall = np.divide(tp, row, out=np.zeros_like(tp), where=row > 0)
    denom = precision + recall
    f1 = np.divide(2 * precision * recall, denom, out=np.zeros_like(tp), where=denom > 0)
    per_class = {name: (float(precision[i]), float(recall[i]), float(f1[i]))
                 for i, name in enumerate(cm.labels)}
    return EvalReport(float(tp.sum() / total), per_class, float(f1.mean()), cm, int(total))


def evaluate_predictions(y_true, y_pred, labels: Sequence[str] = CLASS_NAMES) -> EvalReport:
    return metrics(confusion_matrix(y_true, y_pred, labels))


# ---------------------------------------------------------------------------
# cross-validation
# ---------------------------------------------------------------------------

def stratified_folds(y: np.ndarray, k: int, seed: int) -> np.ndarray:
    """Fold id per row: each class is shuffled and dealt round-robin into k folds."""
    if k < 2:
        raise TooFewRows(f"k must be >= 2, got {k}")
    rng = np.random.default_rng(seed)
    fold = np.empty(len(y), dtype=np.int64)
    for c in np.unique(y):
        idx = np.flatnonzero(y == c)
        if len(idx) < k:
            name = CLASS_NAMES[c] if 0 <= c < len(CLASS_NAMES) else c
            raise TooFewRows(f"class {name} has {len(idx)} rows, fewer than k={k} folds")
        idx = idx[rng.permutation(len(idx))]
        fold[idx] = np.arange(len(idx)) % k
    return fold


@dataclass
class CVResult:
    reports: list
    fold_ids: np.ndarray
    scalers: list = field(default_factory=list)

    @property
    def accuracies(self) -> np.ndarray:
        return np.array([r.accuracy for r in self.reports])

    @property
    def mean_accuracy(self) -> float:
        return float(self.accuracies.mean())

    @property
    def std_accuracy(self) -> float:
        return float(self.accuracies.std())

    @property
    def mean_macro_f1(self) -> float:
        return float(np.mean([r.macro_f1 for r in self.reports]))

    def to_dict(self) -> dict:
        return {"folds": [r.to_dict() for r in self.reports],
                "mean_accuracy": self.mean_accuracy, "std_accuracy": self.std_accuracy,
                "mean_macro_f1": self.mean_macro_f1}


def cross_validate(spec, ds: LabeledDataset, k: int = 5, seed: int = 0,
                   policy: EncodingPolicy = EncodingPolicy()) -> CVResult:
    """Stratified k-fold CV; each fold's scaler is fit on its training part only."""
    from .models import fit

    y = ds.labels
    fold = stratified_folds(y, k, seed)

    def run(i):
        model = fit(spec, ds.take(np.flatnonzero(fold != i)), policy)
        test = ds.take(np.flatnonzero(fold == i))
        return evaluate_predictions(test.labels, model.predict_dataset(test)), model.scaler

    results = parallel.map_ordered(run, range(k))
    return CVResult([r for r, _ in results], fold, [s for _, s in results])


# ---------------------------------------------------------------------------
# grid search
# ---------------------------------------------------------------------------

def grid_points(grid: Mapping[str, Sequence] | Sequence[Mapping]) -> list[dict]:
    """Expand a grid. A mapping of axes enumerates row-major (last axis fastest);
    a sequence of dicts is taken as-is, duplicates included."""
    if isinstance(grid, Mapping):
        axes = list(grid)
        return [dict(zip(axes, combo)) for combo in itertools.product(*(grid[a] for a in axes))]
    return [dict(p) for p in grid]


@dataclass
class GridResult:
    best_spec: object
    best_index: int
    table: list            # [{"params", "mean_accuracy", "std_accuracy", "error"}]
    model: object = None

    def to_dict(self) -> dict:
        return {"best_index": self.best_index, "best_spec": self.best_spec.to_dict(),
                "table": self.table}


def grid_search(family: str, grid, ds: LabeledDataset, k: int = 5, seed: int = 0,
                policy: EncodingPolicy = EncodingPolicy(), refit: bool = True) -> GridResult:
    """Pick the grid point with the highest mean CV accuracy.

    Ties go to the earliest point in enumeration order. Points whose fit fails
    are recorded with their error and skipped.
    """
    from .models import ModelSpec, fit

    points = grid_points(grid)
    if not points:
        raise ValueError("empty hyperparameter grid")
    table = []
    best_i, best_acc = -1, -np.inf
    for i, params in enumerate(points):
        row = {"params": {k_: list(v) if isinstance(v, tuple) else v for k_, v in params.items()}}
        try:
            spec = ModelSpec(family, dict(params), seed)
            cv = cross_validate(spec, ds, k, seed, policy)
        except FlowsiftError as exc:
            log.warning("grid point %d %s failed: %s", i, params, exc)
            row.update(mean_accuracy=None, std_accuracy=None, error=str(exc))
            table.append(row)
            continue
        row.update(mean_accuracy=cv.mean_accuracy, std_accuracy=cv.std_accuracy,
                   mean_macro_f1=cv.mean_macro_f1, error=None)
        table.append(row)
        if cv.mean_accuracy > best_acc:
            best_i, best_acc = i, cv.mean_accuracy
    if best_i < 0:
        raise FlowsiftError(f"every grid point failed for {family}")
    best = ModelSpec(family, dict(points[best_i]), seed)
    model = fit(best, ds, policy) if refit else None
    return GridResult(best, best_i, table, model)

