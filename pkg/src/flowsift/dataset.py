"""Labeled flow datasets: loading, class mapping, splitting, scaling, encoding."""
from __future__ import annotations

import io
import math
import os
import socket
import struct
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
import pandas as pd

from .errors import (
    CsvFieldError,
    CsvSchemaMismatch,
    DegenerateSplit,
    EmptyDataset,
    UnknownColumn,
)
from .schema import (
    CLASS_INDEX,
    CLASS_NAMES,
    COLUMN_KINDS,
    FLOW_COLUMNS,
    INT_COLUMNS,
    IP_COLUMNS,
    LABEL_COLUMN,
    LABEL_NUMERIC_COLUMN,
    REAL_COLUMNS,
)

LABEL_COLUMNS = (LABEL_COLUMN, LABEL_NUMERIC_COLUMN)


@dataclass(frozen=True)
class LabeledDataset:
    """Flow-schema rows, possibly with some columns dropped.

    ``frame`` keeps the canonical column order and always carries the two
    label columns (empty for unlabeled data). Treat as immutable.
    """

    frame: pd.DataFrame

    def __post_init__(self):
        unknown = [c for c in self.frame.columns if c not in COLUMN_KINDS]
        if unknown:
            raise UnknownColumn(f"unknown columns: {unknown}")

    # -- construction -------------------------------------------------------

    @classmethod
    def from_flows(cls, flows: Iterable) -> "LabeledDataset":
        rows = []
        for f in flows:
            target = f.target
            rows.append((
                f.flow_id, f.flow_ip_src, f.flow_ip_dst, f.flow_srcport, f.flow_dstport,
                f.flow_proto, f.num_packets, f.total_length, f.avg_packet_size, f.min_time,
                f.max_time, f.tcp_window_size_avg, f.total_payload, f.forward_packets,
                f.receiving_packets, f.fragments, f.flow_duration, target,
                CLASS_INDEX[target] if target is not None else -1,
            ))
        frame = pd.DataFrame.from_records(rows, columns=list(FLOW_COLUMNS))
        return cls(_coerce(frame))

    @classmethod
    def from_columns(cls, columns: dict) -> "LabeledDataset":
        frame = pd.DataFrame({c: columns[c] for c in FLOW_COLUMNS if c in columns})
        return cls(_coerce(frame))

    # -- shape --------------------------------------------------------------

    def __len__(self) -> int:
        return len(self.frame)

    @property
    def columns(self) -> list[tuple[str, str]]:
        return [(c, COLUMN_KINDS[c]) for c in self.frame.columns]

    @property
    def column_names(self) -> list[str]:
        return list(self.frame.columns)

    @property
    def shape(self) -> tuple[int, int]:
        return self.frame.shape

    @property
    def is_labeled(self) -> bool:
        return len(self) > 0 and bool((self.frame[LABEL_NUMERIC_COLUMN] >= 0).all())

    @property
    def labels(self) -> np.ndarray:
        y = self.frame[LABEL_NUMERIC_COLUMN].to_numpy(dtype=np.int64)
        if len(y) and (y < 0).any():
            raise EmptyDataset("dataset has unlabeled rows")
        return y

    def column(self, name: str) -> np.ndarray:
        if name not in self.frame.columns:
            raise UnknownColumn(f"column {name!r} not in dataset")
        return self.frame[name].to_numpy()

    # -- derivation ---------------------------------------------------------

    def take(self, index: Sequence[int] | np.ndarray) -> "LabeledDataset":
        return LabeledDataset(self.frame.iloc[np.asarray(index, dtype=np.int64)]
                              .reset_index(drop=True))

    def drop(self, names: Iterable[str]) -> "LabeledDataset":
        names = list(names)
        for n in names:
            if n in LABEL_COLUMNS:
                raise UnknownColumn(f"label column {n!r} cannot be dropped")
        return LabeledDataset(self.frame.drop(columns=[n for n in names
                                                       if n in self.frame.columns]))

    def with_column(self, name: str, values) -> "LabeledDataset":
        frame = self.frame.copy()
        frame[name] = values
        order = [c for c in FLOW_COLUMNS if c in frame.columns]
        return LabeledDataset(_coerce(frame[order]))

    def equals(self, other: "LabeledDataset") -> bool:
        return self.frame.equals(other.frame)

    # -- io -------------------------------------------------------------------

    def to_csv(self, path: str | os.PathLike | None = None) -> str | None:
        frame = self.frame.copy()
        unlabeled = frame[LABEL_NUMERIC_COLUMN] < 0
        numeric = frame[LABEL_NUMERIC_COLUMN].astype(object)
        numeric[unlabeled] = ""
        frame[LABEL_NUMERIC_COLUMN] = numeric
        frame[LABEL_COLUMN] = frame[LABEL_COLUMN].fillna("")
        text = frame.to_csv(index=False, float_format="%.6f", lineterminator="\n")
        if path is None:
            return text
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        return None


def _coerce(frame: pd.DataFrame) -> pd.DataFrame:
    frame = frame.copy()
    for c in frame.columns:
        if c in REAL_COLUMNS:
            frame[c] = frame[c].astype(np.float64)
        elif c in INT_COLUMNS:
            frame[c] = frame[c].astype(np.int64)
        else:
            frame[c] = frame[c].astype(object)
    return frame.reset_index(drop=True)


def read_dataset_csv(source: str | os.PathLike | io.TextIOBase) -> LabeledDataset:
    """Load a flow CSV whose header is an in-order subset of the flow columns.

    Rows with unparseable fields are rejected with their row index.
    """
    name = str(source) if not hasattr(source, "read") else "<stream>"
    frame = pd.read_csv(source, dtype=str, keep_default_na=False)
    cols = list(frame.columns)
    unknown = [c for c in cols if c not in COLUMN_KINDS]
    if unknown:
        raise CsvSchemaMismatch(f"{name}: unknown columns {unknown}")
    if cols != [c for c in FLOW_COLUMNS if c in cols]:
        raise CsvSchemaMismatch(f"{name}: columns out of order: {cols}")
    for lc in LABEL_COLUMNS:
        if lc not in cols:
            raise CsvSchemaMismatch(f"{name}: missing column {lc!r}")
    out = {}
    for c in cols:
        text = frame[c]
        if c == LABEL_COLUMN:
            bad = ~text.isin(list(CLASS_NAMES) + [""])
            if bad.any():
                i = int(np.flatnonzero(bad.to_numpy())[0])
                raise CsvFieldError(i, c, f"{name}: unknown class {text.iloc[i]!r}")
            out[c] = text.where(text != "", None)
            continue
        if c == LABEL_NUMERIC_COLUMN:
            text = text.where(text != "", "-1")
        if c in IP_COLUMNS:
            ok = text.map(_is_dotted_quad)
            if not ok.all():
                i = int(np.flatnonzero(~ok.to_numpy())[0])
                raise CsvFieldError(i, c, f"{name}: bad IPv4 address {text.iloc[i]!r}")
            out[c] = text
            continue
        values = pd.to_numeric(text, errors="coerce")
        bad = values.isna().to_numpy()
        if c in INT_COLUMNS:
            bad |= ~np.isnan(values.to_numpy(dtype=float)) & (values.to_numpy(dtype=float) % 1 != 0)
        if bad.any():
            i = int(np.flatnonzero(bad)[0])
            raise CsvFieldError(i, c, f"{name}: cannot parse {text.iloc[i]!r}")
        out[c] = values
    ds = LabeledDataset(_coerce(pd.DataFrame(out)))
    expect = ds.frame[LABEL_COLUMN].map(lambda s: CLASS_INDEX.get(s, -1) if s else -1)
    mismatch = (expect.to_numpy() != ds.frame[LABEL_NUMERIC_COLUMN].to_numpy())
    if mismatch.any():
        i = int(np.flatnonzero(mismatch)[0])
        raise CsvFieldError(i, LABEL_NUMERIC_COLUMN, f"{name}: does not match Target")
    return ds


def _is_dotted_quad(s: str) -> bool:
    if s.count(".") != 3:
        return False
    try:
        socket.inet_aton(s)
    except OSError:
        return False
    return True


def ip_to_int(address: str) -> int:
    return struct.unpack("!I", socket.inet_aton(address))[0]


# ---------------------------------------------------------------------------
# class distribution & splitting
# ---------------------------------------------------------------------------

def class_distribution(ds: LabeledDataset) -> dict[str, tuple[int, float]]:
    """Per-class (count, percentage) for classes present, in class-index order."""
    if len(ds) == 0:
        raise EmptyDataset("class distribution of an empty dataset")
    y = ds.labels
    counts = np.bincount(y, minlength=len(CLASS_NAMES))
    total = int(counts.sum())
    return {CLASS_NAMES[c]: (int(n), round(100.0 * n / total, 2))
            for c, n in enumerate(counts) if n > 0}


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.8
    seed: int = 0
    stratified: bool = True

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError(f"train_fraction must be in (0, 1), got {self.train_fraction}")


def _n_train(fraction: float, n: int) -> int:
    return int(math.floor(fraction * n + 0.5))


def split_indices(y: np.ndarray, spec: SplitSpec) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng(spec.seed)
    if not spec.stratified:
        perm = rng.permutation(len(y))
        k = _n_train(spec.train_fraction, len(y))
        if k == 0:
            raise DegenerateSplit("split leaves no training rows")
        return np.sort(perm[:k]), np.sort(perm[k:])
    train, test = [], []
    for c in np.unique(y):
        idx = np.flatnonzero(y == c)
        idx = idx[rng.permutation(len(idx))]
        k = _n_train(spec.train_fraction, len(idx))
        if k == 0:
            raise DegenerateSplit(
                f"class {CLASS_NAMES[c] if 0 <= c < len(CLASS_NAMES) else c} "
                f"({len(idx)} rows) gets no training rows at fraction {spec.train_fraction}")
        train.append(idx[:k])
        test.append(idx[k:])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(test))


def train_test_split(ds: LabeledDataset, spec: SplitSpec = SplitSpec()
                     ) -> tuple[LabeledDataset, LabeledDataset]:
    if len(ds) == 0:
        raise EmptyDataset("cannot split an empty dataset")
    tr, te = split_indices(ds.labels, spec)
    return ds.take(tr), ds.take(te)


# ---------------------------------------------------------------------------
# scaling
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ScalerParams:
    mins: np.ndarray
    maxs: np.ndarray

    def transform(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        span = self.maxs - self.mins
        safe = np.where(span > 0, span, 1.0)
        out = (X - self.mins) / safe
        # constant training column maps to 0 everywhere
        out[:, span <= 0] = 0.0
        return out

    def to_dict(self) -> dict:
        return {"mins": self.mins.tolist(), "maxs": self.maxs.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "ScalerParams":
        return cls(np.asarray(d["mins"], dtype=np.float64), np.asarray(d["maxs"], dtype=np.float64))

    @classmethod
    def fit(cls, X: np.ndarray) -> "ScalerParams":
        X = np.asarray(X, dtype=np.float64)
        if X.shape[0] == 0:
            raise EmptyDataset("cannot fit a scaler on zero rows")
        return cls(X.min(axis=0), X.max(axis=0))


def min_max_scale(train: np.ndarray, *apply_to: np.ndarray
                  ) -> tuple[list[np.ndarray], ScalerParams]:
    """Fit min-max parameters on ``train`` and apply them to train and ``apply_to``.

    Values outside the training range are not clipped.
    """
    params = ScalerParams.fit(train)
    return [params.transform(train)] + [params.transform(a) for a in apply_to], params


# ---------------------------------------------------------------------------
# feature encoding
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EncodingPolicy:
    """Which columns become model inputs.

    The identifier and label columns are never features. IP addresses are
    excluded unless ``with_ips``; when included they are encoded as their
    32-bit integer value.
    """

    with_ips: bool = False
    exclude: frozenset = field(default_factory=frozenset)

    def feature_names(self, ds: LabeledDataset) -> list[str]:
        for name in self.exclude:
            if name not in COLUMN_KINDS:
                raise UnknownColumn(f"policy excludes unknown column {name!r}")
        names = []
        for c in ds.frame.columns:
            kind = COLUMN_KINDS[c]
            if kind in ("identifier", "label") or c in self.exclude:
                continue
            if c in IP_COLUMNS and not self.with_ips:
                continue
            names.append(c)
        return names


def encode_columns(ds: LabeledDataset, names: Sequence[str]) -> np.ndarray:
    """Numeric matrix of ``names`` (in that order)."""
    missing = [n for n in names if n not in ds.frame.columns]
    if missing:
        raise UnknownColumn(f"dataset lacks column(s): {', '.join(missing)}")
    cols = []
    for n in names:
        if n in IP_COLUMNS:
            cols.append(np.fromiter((ip_to_int(a) for a in ds.frame[n]), dtype=np.float64,
                                    count=len(ds)))
        else:
            cols.append(ds.frame[n].to_numpy(dtype=np.float64))
    if not cols:
        return np.zeros((len(ds), 0))
    return np.column_stack(cols)


def encode_features(ds: LabeledDataset, policy: EncodingPolicy = EncodingPolicy()
                    ) -> tuple[np.ndarray, list[str]]:
    names = policy.feature_names(ds)
    return encode_columns(ds, names), names
