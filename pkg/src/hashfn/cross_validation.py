"""
Hyperparameter search for the ridge hash functions on a class-balanced
validation pool.

The training pool after an incremental phase is dominated by new-class rows,
so the pool used for validation takes the same number of rows from every
class (exemplar classes included). Each (lambda, gamma) cell is scored by the
mean squared code-prediction error on held-out pool rows, the function being
fitted on everything else.
"""
import logging
from typing import List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, Field, field_validator
from sklearn.model_selection import KFold, StratifiedKFold

from codegen.learner import CodePair
from core.seeding import make_rng
from core.types import PairedDataset
from hashfn.linear import BASE_VARIANT, LinearHashFunction, fit_base, fit_incremental

logger = logging.getLogger(__name__)

DEFAULT_GRID = [1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2, 1e3]


class CvConfig(BaseModel):
    folds: int = Field(default=5, ge=2)
    lambda_grid: List[float] = Field(default_factory=lambda: list(DEFAULT_GRID))
    gamma_grid: List[float] = Field(default_factory=lambda: list(DEFAULT_GRID))
    per_class_validation_count: int = Field(default=5, ge=1)
    seed: int = Field(default=0, ge=0)

    @field_validator("lambda_grid", "gamma_grid")
    @classmethod
    def validate_grid(cls, v):
        if not v:
            raise ValueError("grid must not be empty")
        if any(g <= 0 for g in v):
            raise ValueError(f"grid values must be positive, got {v}")
        return sorted(v)


def balanced_pool(labels: np.ndarray, per_class: int, seed: int) -> np.ndarray:
    """Exactly `per_class` row indices from every class present in `labels`."""
    rng = make_rng(seed)
    picks = []
    for cls in np.unique(labels):
        rows = np.flatnonzero(labels == cls)
        if rows.size < per_class:
            raise ValueError(f"class {cls} has {rows.size} samples, balanced validation needs {per_class}")
        picks.append(np.sort(rng.choice(rows, size=per_class, replace=False)))
    return np.concatenate(picks)


def canonical_order(*blocks) -> np.ndarray:
    """
    Row order sorted by content, first column of the first block as primary key.
    Every block must have one entry (or row) per sample.
    """
    keys = np.hstack([np.asarray(b, dtype=np.float64).reshape(len(b), -1) for b in blocks])
    return np.lexsort(keys.T[::-1])


def cross_validate(train: PairedDataset, codes: CodePair, exemplars_per_class: int,
                   cfg: CvConfig, variant: Optional[int] = BASE_VARIANT, modality: str = "x",
                   old: Optional[LinearHashFunction] = None) -> Tuple[float, float]:
    """
    Grid-search (lambda, gamma) for one modality's hash function.

    `exemplars_per_class` caps the per-class validation count, since old classes
    only survive through their exemplars. Base fits (variant 0/None) search
    lambda only and return gamma = 0. Ties go to the smallest lambda, then the
    smallest gamma.
    """
    if modality not in ("x", "y"):
        raise ValueError(f"modality must be 'x' or 'y', got {modality!r}")
    incremental = variant not in (None, BASE_VARIANT)
    if incremental and old is None:
        raise ValueError("incremental cross-validation needs the previous hash function")

    # pool and folds depend on row content, not input order
    order = canonical_order(train.labels, train.x, train.y, codes.a, codes.b)
    labels = train.labels[order]
    features = (train.x if modality == "x" else train.y)[order]
    targets = (codes.a if modality == "x" else codes.b)[order]
    per_class = cfg.per_class_validation_count
    if exemplars_per_class > 0:
        per_class = min(per_class, exemplars_per_class)

    pool = balanced_pool(labels, per_class, cfg.seed)
    if pool.size < cfg.folds:
        raise ValueError(f"validation pool has {pool.size} rows, fewer than {cfg.folds} folds")
    # stratified folds need every class in every fold
    if per_class >= cfg.folds:
        splitter = StratifiedKFold(n_splits=cfg.folds, shuffle=True, random_state=cfg.seed)
    else:
        splitter = KFold(n_splits=cfg.folds, shuffle=True, random_state=cfg.seed)
    fold_masks = []
    for _, held_out in splitter.split(pool, labels[pool]):
        mask = np.zeros(labels.size, dtype=bool)
        mask[pool[held_out]] = True
        fold_masks.append(mask)

    gamma_grid = cfg.gamma_grid if incremental else [0.0]
    best = None
    for lam in cfg.lambda_grid:
        for gamma in gamma_grid:
            errors = []
            for val_mask in fold_masks:
                fit_x, fit_t = features[~val_mask], targets[~val_mask]
                if incremental:
                    f = fit_incremental(fit_x, fit_t, old, lam, gamma, variant)
                else:
                    f = fit_base(fit_x, fit_t, lam)
                errors.append(np.mean((f.project(features[val_mask]) - targets[val_mask]) ** 2))
            score = float(np.mean(errors))
            if best is None or score < best[0]:
                best = (score, lam, gamma)

    logger.info(f"CV ({modality}, variant {variant or BASE_VARIANT}): lambda={best[1]:g}, gamma={best[2]:g}, mse={best[0]:.4g}")
    return best[1], best[2]
