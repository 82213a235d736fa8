"""Dataset loading (libsvm, CSV), splitting, standardization and synthetic
logistic-regression data."""
from __future__ import annotations

import csv
import hashlib
import os
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import expit

from .core import InvalidArgumentError, RngStream

LABEL_MAPS = (
    ((-1.0, 1.0), {-1.0: -1, 1.0: 1}),
    ((0.0, 1.0), {0.0: -1, 1.0: 1}),
    ((1.0, 2.0), {1.0: -1, 2.0: 1}),
)


class ParseError(ValueError):
    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    feature_names: Optional[List[str]] = None
    metadata: Dict = field(default_factory=dict)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64).ravel()
        if self.features.ndim != 2 or self.features.shape[0] != self.labels.size:
            raise InvalidArgumentError("features must be N x d_f with one label per row")
        if np.any(np.isnan(self.features)):
            raise InvalidArgumentError("features contain NaN")
        if not np.all(np.isin(self.labels, (-1, 1))):
            raise InvalidArgumentError("labels must be -1 or +1")

    @property
    def n(self) -> int:
        return self.labels.size

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def subset(self, idx) -> "Dataset":
        return Dataset(self.features[idx], self.labels[idx], self.feature_names, dict(self.metadata))


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def map_labels(raw: Sequence[float]) -> Tuple[np.ndarray, Dict[str, int]]:
    """Map a binary label set ({-1,1}, {0,1} or {1,2}) onto {-1,+1}."""
    raw = np.asarray(raw, dtype=np.float64)
    observed = sorted(set(raw.tolist()))
    for allowed, mapping in LABEL_MAPS:
        if set(observed) <= set(allowed):
            out = np.array([mapping[v] for v in raw.tolist()], dtype=np.int64)
            return out, {f"{k:g}": v for k, v in mapping.items()}
    raise ParseError(f"unsupported label set {observed}; expected {{-1,1}}, {{0,1}} or {{1,2}}")


def load_libsvm(path, n_features: Optional[int] = None) -> Dataset:
    """Parse ``label index:value ...`` lines (1-based indices) into a dense dataset."""
    raw_labels, rows, max_idx = [], [], 0
    with open(path) as f:
        for lineno, line in enumerate(f, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            try:
                raw_labels.append(float(parts[0]))
            except ValueError:
                raise ParseError(f"bad label {parts[0]!r}", lineno) from None
            entries = {}
            for tok in parts[1:]:
                idx_s, sep, val_s = tok.partition(":")
                try:
                    if not sep:
                        raise ValueError
                    idx, val = int(idx_s), float(val_s)
                except ValueError:
                    raise ParseError(f"bad feature token {tok!r}", lineno) from None
                if idx < 1:
                    raise ParseError(f"feature index {idx} must be >= 1", lineno)
                entries[idx] = val
                max_idx = max(max_idx, idx)
            rows.append(entries)
    if not rows:
        raise ParseError(f"no data rows in {path}")
    d = max_idx if n_features is None else n_features
    if max_idx > d:
        raise ParseError(f"feature index {max_idx} exceeds n_features={d}")
    X = np.zeros((len(rows), d))
    for i, entries in enumerate(rows):
        for idx, val in entries.items():
            X[i, idx - 1] = val
    labels, mapping = map_labels(raw_labels)
    meta = {"path": os.fspath(path), "sha256": _sha256(path), "format": "libsvm",
            "label_map": mapping, "standardized": False}
    return Dataset(X, labels, None, meta)


def write_libsvm(dataset: Dataset, path) -> None:
    with open(path, "w") as f:
        for x, y in zip(dataset.features, dataset.labels):
            toks = [f"{j + 1}:{v:.17g}" for j, v in enumerate(x) if v != 0.0]
            f.write(" ".join([f"{int(y):+d}"] + toks) + "\n")


def load_csv(path, label_column: str = "label") -> Dataset:
    with open(path, newline="") as f:
        reader = csv.reader(row for row in f if not row.startswith("#"))
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"empty CSV file {path}") from None
        if label_column not in header:
            raise ParseError(f"CSV header has no {label_column!r} column", 1)
        li = header.index(label_column)
        names = [h for i, h in enumerate(header) if i != li]
        raw_labels, rows = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ParseError(f"expected {len(header)} fields, got {len(row)}", lineno)
            try:
                vals = [float(v) for v in row]
            except ValueError:
                raise ParseError("non-numeric field", lineno) from None
            raw_labels.append(vals[li])
            rows.append(vals[:li] + vals[li + 1:])
    labels, mapping = map_labels(raw_labels)
    meta = {"path": os.fspath(path), "sha256": _sha256(path), "format": "csv",
            "label_map": mapping, "standardized": False}
    return Dataset(np.array(rows).reshape(len(rows), len(names)), labels, names, meta)


def load_dataset(path) -> Dataset:
    return load_csv(path) if str(path).lower().endswith(".csv") else load_libsvm(path)


def train_test_split(dataset: Dataset, test_fraction: float, seed: int) -> Tuple[Dataset, Dataset]:
    """Seeded shuffle, then the first floor(N * fraction) rows become the test set."""
    if not 0.0 < test_fraction < 1.0:
        raise InvalidArgumentError("test fraction must lie in (0, 1)")
    n_test = int(np.floor(dataset.n * test_fraction))
    if n_test == 0 or n_test == dataset.n:
        raise InvalidArgumentError(f"split of {dataset.n} rows at {test_fraction} leaves an empty side")
    perm = RngStream(seed, 0).permutation(dataset.n)
    test_idx, train_idx = np.sort(perm[:n_test]), np.sort(perm[n_test:])
    train, test = dataset.subset(train_idx), dataset.subset(test_idx)
    train.metadata["split"] = {"part": "train", "seed": seed, "test_fraction": test_fraction}
    test.metadata["split"] = {"part": "test", "seed": seed, "test_fraction": test_fraction}
    return train, test


@dataclass(frozen=True)
class Standardizer:
    mean: np.ndarray
    scale: np.ndarray

    def apply(self, X) -> np.ndarray:
        return (np.asarray(X, dtype=np.float64) - self.mean) / self.scale

    def inverse(self, Z) -> np.ndarray:
        return np.asarray(Z, dtype=np.float64) * self.scale + self.mean


def standardize(train: Dataset, test: Optional[Dataset] = None):
    """Zero mean / unit variance per feature using train statistics only.

    Constant features get scale 1 (shift only).
    """
    if train.n == 0:
        raise InvalidArgumentError("empty training set")
    mean = train.features.mean(axis=0)
    scale = train.features.std(axis=0)
    scale = np.where(scale > 0, scale, 1.0)
    tr = Standardizer(mean, scale)

    def _apply(ds):
        meta = dict(ds.metadata, standardized=True)
        return Dataset(tr.apply(ds.features), ds.labels, ds.feature_names, meta)

    return _apply(train), (_apply(test) if test is not None else None), tr


def synth_logistic(n: int, n_features: int, true_weights=3.0, noise: float = 0.0,
                   seed: int = 0) -> Dataset:
    """Features ~ N(0, I), P(y=+1 | x) = sigmoid(w*.x), then labels flipped w.p. ``noise``.

    ``true_weights`` is either an explicit vector or a norm, in which case the
    direction is drawn uniformly from the seed.
    """
    if n < 10:
        raise InvalidArgumentError("need N >= 10")
    if not 0.0 <= noise < 0.5:
        raise InvalidArgumentError("label noise must lie in [0, 0.5)")
    g = RngStream(seed, 0).gen
    w = np.asarray(true_weights, dtype=np.float64)
    if w.ndim == 0:
        u = g.standard_normal(n_features)
        w = float(w) * u / np.linalg.norm(u)
    if w.shape != (n_features,):
        raise InvalidArgumentError(f"true weights must have {n_features} entries")
    X = g.standard_normal((n, n_features))
    y = np.where(g.uniform(size=n) < expit(X @ w), 1, -1)
    flip = g.uniform(size=n) < noise
    y = np.where(flip, -y, y)
    meta = {"source": "synthetic", "true_weights": w.tolist(), "noise": noise, "seed": seed,
            "standardized": False}
    return Dataset(X, y, [f"x{i + 1}" for i in range(n_features)], meta)
