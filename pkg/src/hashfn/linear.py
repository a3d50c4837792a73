"""
Linear ridge-regression hash functions, one projection vector per bit.

Base fit:         min_u ||a - X u||^2 + lam ||u||^2
Incremental fits, given the previous phase's projection f_old:
  variant 1:      ... + gamma ||u - f_old||^2
  variant 2:      ... + gamma ||X u - X f_old||^2
  variant 3:      ... + gamma ||u - f_old||^2 + gamma ||X u - X f_old||^2
All q bits share X, so the q right-hand sides are solved against one
Cholesky factorisation.
"""
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from codegen.learner import quantize
from core.errors import ShapeMismatchError, SingularSystemError
from core.matrix_io import load_matrix, read_kv, save_matrix, write_kv

logger = logging.getLogger(__name__)

BASE_VARIANT = 0
INCREMENTAL_VARIANTS = (1, 2, 3)


@dataclass(frozen=True)
class LinearHashFunction:
    weights: np.ndarray
    reg_lambda: float
    variant_gamma: float = 0.0
    variant: int = BASE_VARIANT

    @property
    def input_dim(self) -> int:
        return self.weights.shape[0]

    @property
    def bits(self) -> int:
        return self.weights.shape[1]

    def project(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.input_dim:
            raise ShapeMismatchError(f"features have shape {x.shape}, function expects {self.input_dim} columns")
        return x @ self.weights

    def save(self, directory, name: str) -> None:
        directory = Path(directory)
        save_matrix(directory / f"{name}_weights.txt", self.weights)
        write_kv(directory / f"{name}_meta.txt", {
            "lambda": repr(self.reg_lambda),
            "gamma": repr(self.variant_gamma),
            "variant": self.variant,
        })

    @classmethod
    def load(cls, directory, name: str) -> "LinearHashFunction":
        directory = Path(directory)
        meta = read_kv(directory / f"{name}_meta.txt")
        return cls(
            load_matrix(directory / f"{name}_weights.txt"),
            float(meta["lambda"]),
            float(meta.get("gamma", 0.0)),
            int(meta.get("variant", BASE_VARIANT)),
        )


def apply(f: LinearHashFunction, x) -> np.ndarray:
    """Binary codes sign(X W)."""
    return quantize(f.project(x))


def _check_fit_inputs(x, codes):
    x = np.asarray(x, dtype=np.float64)
    codes = np.asarray(codes, dtype=np.float64)
    if x.ndim != 2 or codes.ndim != 2 or x.shape[0] != codes.shape[0]:
        raise ShapeMismatchError(f"features {x.shape} and codes {codes.shape} must share rows")
    return x, codes


def _solve_spd(lhs: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    try:
        factor = cho_factor(lhs, lower=False, check_finite=True)
    except LinAlgError as e:
        raise SingularSystemError(f"normal equations are not positive definite: {e}") from e
    return cho_solve(factor, rhs)


def _check_regulariser(x: np.ndarray, lam: float, floor: float) -> None:
    if lam < 0:
        raise ValueError(f"lambda must be >= 0, got {lam}")
    if floor == 0.0 and np.linalg.matrix_rank(x) < x.shape[1]:
        raise SingularSystemError(
            f"X has rank {np.linalg.matrix_rank(x)} < {x.shape[1]} columns and no ridge term; use lambda > 0"
        )


def fit_base(x, codes, lam: float) -> LinearHashFunction:
    x, codes = _check_fit_inputs(x, codes)
    _check_regulariser(x, lam, lam)
    gram = x.T @ x
    weights = _solve_spd(gram + lam * np.eye(x.shape[1]), x.T @ codes)
    logger.debug(f"Base ridge fit: d={x.shape[1]}, q={codes.shape[1]}, lambda={lam:g}")
    return LinearHashFunction(weights, float(lam))


def fit_incremental(x, codes, old: LinearHashFunction, lam: float, gamma: float,
                    variant: int) -> LinearHashFunction:
    x, codes = _check_fit_inputs(x, codes)
    if variant not in INCREMENTAL_VARIANTS:
        raise ValueError(f"unknown incremental variant {variant!r}, expected one of {INCREMENTAL_VARIANTS}")
    if gamma < 0:
        raise ValueError(f"gamma must be >= 0, got {gamma}")
    if old.weights.shape != (x.shape[1], codes.shape[1]):
        raise ShapeMismatchError(
            f"previous weights are {old.weights.shape}, expected {(x.shape[1], codes.shape[1])}"
        )

    d = x.shape[1]
    gram = x.T @ x
    eye = np.eye(d)
    f_old = old.weights
    if variant == 1:
        lhs = gram + (lam + gamma) * eye
        rhs = x.T @ codes + gamma * f_old
        floor = lam + gamma
    elif variant == 2:
        lhs = (1.0 + gamma) * gram + lam * eye
        rhs = x.T @ codes + gamma * gram @ f_old
        floor = lam
    else:
        lhs = (1.0 + gamma) * gram + (lam + gamma) * eye
        rhs = x.T @ codes + gamma * f_old + gamma * gram @ f_old
        floor = lam + gamma
    _check_regulariser(x, lam, floor)

    weights = _solve_spd(lhs, rhs)
    logger.debug(f"Incremental ridge fit (variant {variant}): lambda={lam:g}, gamma={gamma:g}")
    return LinearHashFunction(weights, float(lam), float(gamma), variant)


def ridge_objective(x, codes, weights, lam: float, gamma: float = 0.0,
                    old_weights: Optional[np.ndarray] = None, variant: int = BASE_VARIANT) -> float:
    """Value of the fitted objective, summed over all bits."""
    x, codes = _check_fit_inputs(x, codes)
    weights = np.asarray(weights, dtype=np.float64)
    value = np.sum((codes - x @ weights) ** 2) + lam * np.sum(weights ** 2)
    if variant == BASE_VARIANT:
        return float(value)
    delta = weights - old_weights
    if variant in (1, 3):
        value += gamma * np.sum(delta ** 2)
    if variant in (2, 3):
        value += gamma * np.sum((x @ delta) ** 2)
    return float(value)
