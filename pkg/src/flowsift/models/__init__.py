"""Uniform fit / predict / serialize contract over all model families."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from ..dataset import EncodingPolicy, LabeledDataset, ScalerParams, encode_columns, encode_features
from ..errors import ArityMismatch, CorruptModel, SingleClassTrain, UnknownHyperparameter, UnknownVersion
from ..schema import CLASS_NAMES
from .boosting import GradientBoosting, XGBStyle
from .forest import DecisionTree, RandomForest
from .mlp import MLP
from .naive_bayes import GaussianNB, MultinomialNB

FORMAT_VERSION = 1
N_CLASSES = len(CLASS_NAMES)

FAMILIES = {
    "gaussian_nb": GaussianNB,
    "multinomial_nb": MultinomialNB,
    "decision_tree": DecisionTree,
    "random_forest": RandomForest,
    "gradient_boosting": GradientBoosting,
    "xgb_style": XGBStyle,
    "mlp": MLP,
}

DEFAULTS = {
    "gaussian_nb": {"var_smoothing": 1e-9},
    "multinomial_nb": {"alpha": 1.0},
    "decision_tree": {"max_depth": None, "min_samples_split": 2, "min_samples_leaf": 1},
    "random_forest": {"n_estimators": 100, "max_depth": None, "min_samples_split": 2,
                      "min_samples_leaf": 1, "max_features": "sqrt", "bootstrap": True},
    "gradient_boosting": {"learning_rate": 0.1, "n_rounds": 100, "max_depth": 3,
                          "min_samples_leaf": 1},
    "xgb_style": {"learning_rate": 0.1, "n_rounds": 100, "max_depth": 3, "reg_lambda": 1.0,
                  "gamma": 0.0, "min_child_weight": 0.0, "min_samples_leaf": 1},
    "mlp": {"hidden_layers": (64, 64), "learning_rate": 1e-2, "epochs": 50, "batch_size": 32},
}

# Grids used by ``tune``; axes enumerate in row-major order (first axis slowest).
DEFAULT_GRIDS = {
    "decision_tree": {"max_depth": [4, 8, 16, None], "min_samples_leaf": [1, 5, 20]},
    "random_forest": {"n_estimators": [100, 300], "max_depth": [None, 16]},
    "gradient_boosting": {"learning_rate": [0.05, 0.1, 0.3], "n_rounds": [100, 300],
                          "max_depth": [3, 6]},
    "xgb_style": {"learning_rate": [0.05, 0.1, 0.3], "n_rounds": [100, 300],
                  "max_depth": [3, 6], "reg_lambda": [1.0, 10.0], "gamma": [0.0, 1.0]},
    "gaussian_nb": {"var_smoothing": [1e-9, 1e-7]},
    "multinomial_nb": {"alpha": [0.5, 1.0, 2.0]},
    "mlp": {"hidden_layers": [(64, 64), (128, 64)], "learning_rate": [1e-3, 1e-2],
            "epochs": [50]},
}


def _normalize(name: str, value: Any) -> Any:
    if name == "max_depth" and (value is None or value == math.inf or value == "inf"):
        return None
    if name == "hidden_layers":
        return tuple(int(v) for v in value)
    return value


@dataclass(frozen=True)
class ModelSpec:
    family: str
    hyperparameters: dict = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise UnknownHyperparameter(
                f"unknown model family {self.family!r}; choose from {', '.join(FAMILIES)}")
        unknown = set(self.hyperparameters) - set(DEFAULTS[self.family])
        if unknown:
            raise UnknownHyperparameter(
                f"{self.family}: unknown hyperparameter(s) {sorted(unknown)}; "
                f"valid: {sorted(DEFAULTS[self.family])}")
        merged = dict(DEFAULTS[self.family])
        merged.update(self.hyperparameters)
        object.__setattr__(self, "hyperparameters",
                           {k: _normalize(k, v) for k, v in merged.items()})

    def build(self):
        return FAMILIES[self.family](**self.hyperparameters)

    def to_dict(self) -> dict:
        hp = {k: list(v) if isinstance(v, tuple) else v for k, v in self.hyperparameters.items()}
        return {"family": self.family, "hyperparameters": hp, "seed": self.seed}

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        return cls(d["family"], dict(d.get("hyperparameters", {})), int(d.get("seed", 0)))


@dataclass(frozen=True)
class TrainedModel:
    spec: ModelSpec
    scaler: ScalerParams
    feature_names: tuple
    estimator: Any

    def _prepare(self, rows) -> np.ndarray:
        X = np.asarray(rows, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        if X.ndim != 2 or X.shape[1] != len(self.feature_names):
            raise ArityMismatch(f"rows have {X.shape[-1]} features, model expects "
                                f"{len(self.feature_names)} ({', '.join(self.feature_names)})")
        return self.scaler.transform(X)

    def predict_proba(self, rows) -> np.ndarray:
        X = self._prepare(rows)
        if len(X) == 0:
            return np.zeros((0, N_CLASSES))
        return self.estimator.predict_proba(X)

    def predict(self, rows) -> np.ndarray:
        return np.argmax(self.predict_proba(rows), axis=1)

    def predict_dataset(self, ds: LabeledDataset) -> np.ndarray:
        return self.predict(encode_columns(ds, self.feature_names))


def fit_arrays(spec: ModelSpec, X, y, feature_names: Sequence[str] | None = None) -> TrainedModel:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if len(np.unique(y)) < 2:
        raise SingleClassTrain(f"{spec.family}: training data has fewer than two classes")
    if feature_names is None:
        feature_names = [f"x{i}" for i in range(X.shape[1])]
    scaler = ScalerParams.fit(X)
    est = spec.build().fit(scaler.transform(X), y, N_CLASSES, spec.seed)
    return TrainedModel(spec, scaler, tuple(feature_names), est)


def fit(spec: ModelSpec, train: LabeledDataset, policy: EncodingPolicy = EncodingPolicy()
        ) -> TrainedModel:
    X, names = encode_features(train, policy)
    return fit_arrays(spec, X, train.labels, names)


def predict(model: TrainedModel, rows) -> np.ndarray:
    return model.predict(rows)


def predict_proba(model: TrainedModel, rows) -> np.ndarray:
    return model.predict_proba(rows)


def serialize(model: TrainedModel) -> bytes:
    doc = {
        "format_version": FORMAT_VERSION,
        "spec": model.spec.to_dict(),
        "scaler": model.scaler.to_dict(),
        "feature_names": list(model.feature_names),
        "payload": model.estimator.to_payload(),
    }
    return json.dumps(doc, allow_nan=False).encode("utf-8")


def deserialize(data: bytes) -> TrainedModel:
    try:
        doc = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptModel(f"model file is not valid JSON: {exc}") from None
    if not isinstance(doc, dict) or "format_version" not in doc:
        raise CorruptModel("model file lacks format_version")
    if doc["format_version"] != FORMAT_VERSION:
        raise UnknownVersion(f"model format_version {doc['format_version']!r} "
                             f"(this build reads {FORMAT_VERSION})")
    try:
        spec = ModelSpec.from_dict(doc["spec"])
        scaler = ScalerParams.from_dict(doc["scaler"])
        names = tuple(doc["feature_names"])
        est = spec.build().load_payload(doc["payload"])
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        raise CorruptModel(f"model file is malformed: {exc!r}") from None
    if len(scaler.mins) != len(names):
        raise CorruptModel("scaler arity does not match feature_names")
    return TrainedModel(spec, scaler, names, est)


def save_model(model: TrainedModel, path) -> None:
    with open(path, "wb") as fh:
        fh.write(serialize(model))


def load_model(path) -> TrainedModel:
    with open(path, "rb") as fh:
        return deserialize(fh.read())
