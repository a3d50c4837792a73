import logging
from typing import Optional, Tuple

import numpy as np

from core.errors import ShapeMismatchError
from core.types import one_hot

logger = logging.getLogger(__name__)

LOG_FLOOR = 1e-12


def hash_loss(hash_x, target_a, hash_y, target_b) -> float:
    """Squared distance of both modalities' hash outputs to their target codes, summed over the batch."""
    hash_x, target_a = np.asarray(hash_x, float), np.asarray(target_a, float)
    hash_y, target_b = np.asarray(hash_y, float), np.asarray(target_b, float)
    if hash_x.shape != target_a.shape or hash_y.shape != target_b.shape:
        raise ShapeMismatchError(
            f"hash outputs {hash_x.shape}/{hash_y.shape} vs targets {target_a.shape}/{target_b.shape}"
        )
    return float(np.sum((hash_x - target_a) ** 2) + np.sum((hash_y - target_b) ** 2))


def hash_loss_gradients(hash_x, target_a, hash_y, target_b) -> Tuple[np.ndarray, np.ndarray]:
    return 2.0 * (hash_x - target_a), 2.0 * (hash_y - target_b)


def compute_class_weights(labels, class_count: int) -> np.ndarray:
    """w_j = N / n_j over the current training pool."""
    labels = np.asarray(labels, dtype=np.int64)
    counts = np.bincount(labels, minlength=class_count)
    if counts.size > class_count:
        raise ValueError(f"label {labels.max()} out of range for {class_count} classes")
    empty = np.flatnonzero(counts == 0)
    if empty.size:
        raise ValueError(f"classes {empty.tolist()} have no samples; cannot weight them")
    return labels.size / counts.astype(np.float64)


def normalize_class_weights(weights, labels, balanced: bool = False) -> np.ndarray:
    """
    Rescale class weights so a row drawn for a batch carries weight 1 on average.

    Rows are drawn uniformly from `labels`, or class-balanced when `balanced`
    (one class picked uniformly, then a row within it). Ratios between classes
    are unchanged.
    """
    weights = np.asarray(weights, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size == 0:
        raise ValueError("cannot normalise class weights over an empty pool")
    mean = weights[np.unique(labels)].mean() if balanced else weights[labels].mean()
    return weights / mean


def weighted_ce_loss(ce_x, ce_y, labels, weights: Optional[np.ndarray] = None) -> float:
    """
    -sum_i w_{l_i} [log p^x_{i,l_i} + log p^y_{i,l_i}].
    Uniform (None) weights give the plain cross-entropy. Probabilities are floored
    at 1e-12 before the log.
    """
    ce_x, ce_y = np.asarray(ce_x, float), np.asarray(ce_y, float)
    labels = np.asarray(labels, dtype=np.int64)
    if ce_x.shape != ce_y.shape or ce_x.shape[0] != labels.size:
        raise ShapeMismatchError(f"probabilities {ce_x.shape}/{ce_y.shape} vs {labels.size} labels")
    if labels.size and (labels.min() < 0 or labels.max() >= ce_x.shape[1]):
        raise ValueError(f"labels out of range for {ce_x.shape[1]} classes")
    rows = np.arange(labels.size)
    w = np.ones(labels.size) if weights is None else np.asarray(weights, float)[labels]
    log_x = np.log(np.maximum(ce_x[rows, labels], LOG_FLOOR))
    log_y = np.log(np.maximum(ce_y[rows, labels], LOG_FLOOR))
    return float(-np.sum(w * (log_x + log_y)))


def weighted_ce_logit_gradients(ce_x, ce_y, labels,
                                weights: Optional[np.ndarray] = None) -> Tuple[np.ndarray, np.ndarray]:
    """Gradients w.r.t. the pre-softmax logits of each modality: w_i (p_i - onehot_i)."""
    labels = np.asarray(labels, dtype=np.int64)
    target = one_hot(labels, ce_x.shape[1])
    w = np.ones(labels.size) if weights is None else np.asarray(weights, float)[labels]
    return w[:, None] * (ce_x - target), w[:, None] * (ce_y - target)
