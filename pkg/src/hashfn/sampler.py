"""
Samples elements with replacement, weighting each by the inverse size of its
class, so rare classes are oversampled and common ones undersampled.
"""
import numpy as np

from core.seeding import make_rng


def sample_weights(labels) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size == 0:
        raise ValueError("cannot sample from empty labels")
    counts = np.bincount(labels)
    weights = 1.0 / counts[labels]
    return weights / weights.sum()


def imbalanced_sample_indices(labels, num_samples: int, seed: int) -> np.ndarray:
    """Draw `num_samples` row indices, P(i) proportional to 1 / n_class(i)."""
    if num_samples < 0:
        raise ValueError(f"num_samples must be >= 0, got {num_samples}")
    p = sample_weights(labels)
    return make_rng(seed).choice(p.size, size=num_samples, replace=True, p=p)
