"""
Hamming ranking and mean average precision.

AP@k for one query: (1/R_k) * sum of precision@r over the relevant positions
r <= k, where R_k is the number of relevant items in the top k. A query with
nothing relevant in its top k scores 0 and still counts toward the mean.
Ties in Hamming distance keep ascending gallery order.
"""
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from core.errors import ShapeMismatchError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class MapReport:
    x_to_y: float
    y_to_x: float

    @property
    def average(self) -> float:
        return 0.5 * (self.x_to_y + self.y_to_x)


def _as_codes(codes, name: str) -> np.ndarray:
    arr = np.asarray(codes)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2:
        raise ShapeMismatchError(f"{name} must be 2-D, got shape {arr.shape}")
    return arr.astype(np.int64)


def hamming(u, v) -> int:
    u, v = np.asarray(u), np.asarray(v)
    if u.shape != v.shape or u.ndim != 1:
        raise ShapeMismatchError(f"codes must be equal-length vectors, got {u.shape} and {v.shape}")
    return int(np.count_nonzero(u != v))


def hamming_distances(query_codes, gallery_codes) -> np.ndarray:
    """Pairwise distances between {-1,+1} codes via (q - Q G^T) / 2."""
    Q = _as_codes(query_codes, "query codes")
    G = _as_codes(gallery_codes, "gallery codes")
    if Q.shape[1] != G.shape[1]:
        raise ShapeMismatchError(f"code widths differ: query {Q.shape[1]}, gallery {G.shape[1]}")
    return (Q.shape[1] - Q @ G.T) // 2


def rank_gallery(distances: np.ndarray) -> np.ndarray:
    """Gallery indices by ascending distance; a stable sort keeps ties in index order."""
    return np.argsort(distances, kind="stable")


def average_precision(ranked, query_label: int, gallery_labels, k: Optional[int] = None) -> float:
    ranked = np.asarray(ranked, dtype=np.int64)
    top = ranked if k is None else ranked[:k]
    relevant = np.asarray(gallery_labels)[top] == query_label
    hits = int(relevant.sum())
    if hits == 0:
        return 0.0
    positions = np.flatnonzero(relevant) + 1
    precision_at_hits = np.arange(1, hits + 1) / positions
    return float(precision_at_hits.mean())


def map_score(query_codes, query_labels, gallery_codes, gallery_labels,
              k: Optional[int] = None, exclude_self: bool = False) -> float:
    """
    Mean AP@k over all queries (k=None means the whole gallery). With
    `exclude_self`, query i never retrieves gallery row i; only meaningful when
    the query and gallery sets are the same rows.
    """
    query_labels = np.asarray(query_labels)
    gallery_labels = np.asarray(gallery_labels)
    dist = hamming_distances(query_codes, gallery_codes)
    if dist.shape != (query_labels.size, gallery_labels.size):
        raise ShapeMismatchError(
            f"labels ({query_labels.size} query, {gallery_labels.size} gallery) do not match codes {dist.shape}"
        )
    if exclude_self and dist.shape[0] != dist.shape[1]:
        raise ShapeMismatchError("exclude_self needs query and gallery of equal size")
    if k is not None and k < 1:
        raise ValueError(f"k must be >= 1, got {k}")

    scores = np.empty(dist.shape[0])
    all_rows = np.arange(dist.shape[1])
    for i in range(dist.shape[0]):
        if exclude_self:
            keep = all_rows != i
            ranked = all_rows[keep][rank_gallery(dist[i, keep])]
        else:
            ranked = rank_gallery(dist[i])
        scores[i] = average_precision(ranked, query_labels[i], gallery_labels, k)
    return float(scores.mean()) if scores.size else 0.0


def cross_modal_map(x_codes, y_codes, query_labels, gallery_x_codes, gallery_y_codes,
                    gallery_labels, k: Optional[int] = None, exclude_self: bool = False) -> MapReport:
    """X queries against the Y gallery and Y queries against the X gallery."""
    return MapReport(
        x_to_y=map_score(x_codes, query_labels, gallery_y_codes, gallery_labels, k, exclude_self),
        y_to_x=map_score(y_codes, query_labels, gallery_x_codes, gallery_labels, k, exclude_self),
    )
