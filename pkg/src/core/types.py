"""
Domain types shared by every stage of the pipeline.

Matrices are plain numpy arrays; the helpers here validate them once at the
boundary and hand back read-only float64/int64 copies so later stages can share
them freely.
"""
import logging
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np
from sklearn.preprocessing import StandardScaler

from core.errors import ShapeMismatchError

logger = logging.getLogger(__name__)


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.flags.writeable = False
    return arr


def as_feature_matrix(values, name: str = "matrix") -> np.ndarray:
    """Validate an N x d real matrix (finite, at least one row and column)."""
    arr = np.array(values, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeMismatchError(f"{name} must be 2-D, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ShapeMismatchError(f"{name} must have at least one row and column, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return _frozen(arr)


def as_label_vector(values, class_count: Optional[int] = None) -> np.ndarray:
    """Validate dense 0-based integer labels, one per sample."""
    raw = np.asarray(values)
    if raw.ndim != 1:
        raise ShapeMismatchError(f"labels must be 1-D, got shape {raw.shape}")
    if raw.size and not np.all(np.equal(np.mod(raw, 1), 0)):
        raise ValueError("labels must be integers")
    labels = raw.astype(np.int64)
    if labels.size and labels.min() < 0:
        raise ValueError(f"labels must be non-negative, found {labels.min()}")
    if class_count is not None and labels.size and labels.max() >= class_count:
        raise ValueError(f"label {labels.max()} out of range for {class_count} classes")
    return _frozen(labels)


def as_relaxed_codes(values, name: str = "codes") -> np.ndarray:
    arr = np.array(values, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeMismatchError(f"{name} must be 2-D, got shape {arr.shape}")
    if arr.size and (np.any(arr < -1.0) or np.any(arr > 1.0) or not np.all(np.isfinite(arr))):
        raise ValueError(f"{name} entries must lie in [-1, 1]")
    return arr


def build_similarity(labels) -> np.ndarray:
    """S_ij = 1 when samples i and j share a label, 0 otherwise."""
    labels = np.asarray(labels)
    if labels.size == 0:
        raise ValueError("cannot build a similarity matrix from empty labels")
    return (labels[:, None] == labels[None, :]).astype(np.float64)


def one_hot(labels, class_count: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    out = np.zeros((labels.size, class_count))
    out[np.arange(labels.size), labels] = 1.0
    return out


@dataclass(frozen=True)
class PairedDataset:
    """Row-aligned features of two modalities with one class label per row."""

    x: np.ndarray
    y: np.ndarray
    labels: np.ndarray
    class_count: int

    def __post_init__(self):
        x = as_feature_matrix(self.x, "x")
        y = as_feature_matrix(self.y, "y")
        labels = as_label_vector(self.labels, self.class_count)
        if not (x.shape[0] == y.shape[0] == labels.size):
            raise ShapeMismatchError(
                f"paired rows disagree: x has {x.shape[0]}, y has {y.shape[0]}, labels has {labels.size}"
            )
        if self.class_count < 1:
            raise ValueError(f"class_count must be >= 1, got {self.class_count}")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "labels", labels)

    @property
    def rows(self) -> int:
        return int(self.labels.size)

    def subset(self, indices: Sequence[int]) -> "PairedDataset":
        idx = np.asarray(indices, dtype=np.int64)
        if idx.size == 0:
            raise ValueError("cannot take an empty subset of a paired dataset")
        return PairedDataset(self.x[idx], self.y[idx], self.labels[idx], self.class_count)

    def rows_of_classes(self, classes: Iterable[int]) -> np.ndarray:
        """Indices (ascending) of every row whose label is in `classes`."""
        wanted = np.fromiter((int(c) for c in classes), dtype=np.int64)
        return np.flatnonzero(np.isin(self.labels, wanted))

    def class_sizes(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.class_count)


class Standardizer:
    """Per-dimension zero mean / unit variance fitted on training features only."""

    def __init__(self):
        self._x = StandardScaler()
        self._y = StandardScaler()
        self.fitted = False

    def fit(self, train: PairedDataset) -> "Standardizer":
        self._x.fit(train.x)
        self._y.fit(train.y)
        self.fitted = True
        logger.debug(f"Standardizer fitted on {train.rows} rows")
        return self

    def transform(self, data: PairedDataset) -> PairedDataset:
        if not self.fitted:
            raise RuntimeError("Standardizer.transform called before fit")
        return PairedDataset(
            self._x.transform(data.x), self._y.transform(data.y), data.labels, data.class_count
        )
