import logging
from typing import Tuple

import numpy as np
from sklearn.model_selection import train_test_split

from core.seeding import make_rng
from core.types import PairedDataset

logger = logging.getLogger(__name__)


def generate_synthetic(class_count: int, per_class: int, dx: int, dy: int,
                       spread: float, seed: int) -> PairedDataset:
    """
    Gaussian-cluster stand-in for a paired image/text feature set.

    Each class gets one random centre per modality (standard normal); a sample
    is its class centre plus isotropic noise with standard deviation `spread`.
    Rows are ordered by class, so labels read [0]*per_class + [1]*per_class ...
    """
    if class_count < 1 or per_class < 1:
        raise ValueError(f"class_count and per_class must be >= 1, got {class_count}, {per_class}")
    if dx < 2 or dy < 2:
        raise ValueError(f"feature dimensions must be >= 2, got dx={dx}, dy={dy}")
    if not spread > 0:
        raise ValueError(f"spread must be positive, got {spread}")

    rng = make_rng(seed)
    centers_x = rng.standard_normal((class_count, dx))
    centers_y = rng.standard_normal((class_count, dy))
    labels = np.repeat(np.arange(class_count), per_class)
    x = centers_x[labels] + spread * rng.standard_normal((labels.size, dx))
    y = centers_y[labels] + spread * rng.standard_normal((labels.size, dy))

    logger.debug(f"Generated synthetic data: {class_count} classes x {per_class}, dx={dx}, dy={dy}, spread={spread}")
    return PairedDataset(x, y, labels, class_count)


def split_per_class(data: PairedDataset, train_fraction: float = 0.7,
                    seed: int = 0) -> Tuple[PairedDataset, PairedDataset]:
    """Stratified train/test split; both halves keep ascending original row order."""
    if not 0.0 < train_fraction < 1.0:
        raise ValueError(f"train_fraction must be in (0, 1), got {train_fraction}")
    train_idx, test_idx = train_test_split(
        np.arange(data.rows),
        train_size=train_fraction,
        stratify=data.labels,
        random_state=int(seed),
    )
    return data.subset(np.sort(train_idx)), data.subset(np.sort(test_idx))
