"""
Mini-batch SGD for a pair of hash networks (one per modality).

Both networks see the same mini-batch rows and are updated together from the
summed loss  L = L_hash + L_ce  (or the class-weighted L_wce).
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Protocol, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field, field_validator

from codegen.learner import CodePair
from core.errors import ShapeMismatchError, TrainingDivergedError
from core.seeding import make_rng
from hashfn.losses import (compute_class_weights, hash_loss, hash_loss_gradients, normalize_class_weights,
                           weighted_ce_logit_gradients, weighted_ce_loss)
from hashfn.mlp import PARAM_NAMES, ForwardPass, MlpHashFunction, backward, forward
from hashfn.sampler import imbalanced_sample_indices

logger = logging.getLogger(__name__)


class TrainConfig(BaseModel):
    epochs: int = Field(default=150, ge=1)
    batch_size: int = Field(default=32, ge=1)
    learning_rate: float = Field(default=2e-3, ge=0.0)
    seed: int = Field(default=0, ge=0)
    use_class_weights: bool = False
    use_imbalanced_sampler: bool = False
    hidden_sizes: Tuple[int, int] = (64, 32)
    dropout_rate: float = Field(default=0.5, ge=0.0, lt=1.0)

    @field_validator("hidden_sizes")
    @classmethod
    def validate_hidden(cls, v):
        if any(h < 1 for h in v):
            raise ValueError(f"hidden sizes must be >= 1, got {v}")
        return v


class LossTerm(Protocol):
    """Additional loss: returns its value and gradients w.r.t. both hash outputs."""

    def __call__(self, fx: ForwardPass, fy: ForwardPass,
                 batch: np.ndarray) -> Tuple[float, np.ndarray, np.ndarray]:
        ...


@dataclass
class TrainResult:
    net_x: MlpHashFunction
    net_y: MlpHashFunction
    loss_trace: List[float] = field(default_factory=list)


def loss_and_gradients(net_x: MlpHashFunction, net_y: MlpHashFunction, x, y, target_a, target_b,
                       labels, class_weights: Optional[np.ndarray] = None, training: bool = False,
                       rng: Optional[np.random.Generator] = None,
                       extra_terms: Sequence[LossTerm] = (), batch: Optional[np.ndarray] = None,
                       ) -> Tuple[float, Dict[str, np.ndarray], Dict[str, np.ndarray]]:
    """Total loss over the given rows and exact gradients for every parameter of both nets."""
    fx = forward(net_x, x, training=training, rng=rng)
    fy = forward(net_y, y, training=training, rng=rng)

    total = hash_loss(fx.hash_out, target_a, fy.hash_out, target_b)
    total += weighted_ce_loss(fx.ce_out, fy.ce_out, labels, class_weights)
    d_hx, d_hy = hash_loss_gradients(fx.hash_out, target_a, fy.hash_out, target_b)
    d_lx, d_ly = weighted_ce_logit_gradients(fx.ce_out, fy.ce_out, labels, class_weights)

    for term in extra_terms:
        value, gx, gy = term(fx, fy, batch)
        total += value
        d_hx, d_hy = d_hx + gx, d_hy + gy

    return total, backward(net_x, fx, d_hx, d_lx), backward(net_y, fy, d_hy, d_ly)


class MlpTrainer:
    def __init__(self, cfg: TrainConfig):
        self.cfg = cfg
        self._extra_terms: List[LossTerm] = []

    def register_loss(self, term: LossTerm) -> None:
        self._extra_terms.append(term)

    def train(self, net_x: MlpHashFunction, net_y: MlpHashFunction, x, y, codes: CodePair,
              labels) -> TrainResult:
        cfg = self.cfg
        x, y = np.asarray(x, float), np.asarray(y, float)
        labels = np.asarray(labels, dtype=np.int64)
        n = labels.size
        if not (x.shape[0] == y.shape[0] == codes.a.shape[0] == codes.b.shape[0] == n):
            raise ShapeMismatchError(
                f"training rows disagree: x {x.shape[0]}, y {y.shape[0]}, codes {codes.a.shape[0]}, labels {n}"
            )
        if net_x.class_count != net_y.class_count:
            raise ShapeMismatchError("the two networks have different classifier widths")

        weights = None
        if cfg.use_class_weights:
            # mean weight 1 per drawn row
            weights = normalize_class_weights(compute_class_weights(labels, net_x.class_count), labels,
                                              balanced=cfg.use_imbalanced_sampler)
            logger.debug(f"class weights: {np.round(weights, 3).tolist()}")
        rng = make_rng(cfg.seed)
        params_x = {k: v.copy() for k, v in net_x.params.items()}
        params_y = {k: v.copy() for k, v in net_y.params.items()}

        def full_loss() -> float:
            value, _, _ = loss_and_gradients(net_x.with_params(params_x), net_y.with_params(params_y),
                                             x, y, codes.a, codes.b, labels, weights)
            return value

        trace = [full_loss()]
        for epoch in range(cfg.epochs):
            if cfg.use_imbalanced_sampler:
                order = imbalanced_sample_indices(labels, n, int(rng.integers(2 ** 32)))
            else:
                order = rng.permutation(n)

            for start in range(0, n, cfg.batch_size):
                batch = order[start:start + cfg.batch_size]
                cur_x, cur_y = net_x.with_params(params_x), net_y.with_params(params_y)
                value, grads_x, grads_y = loss_and_gradients(
                    cur_x, cur_y, x[batch], y[batch], codes.a[batch], codes.b[batch], labels[batch],
                    weights, training=True, rng=rng, extra_terms=self._extra_terms, batch=batch,
                )
                if not np.isfinite(value):
                    raise TrainingDivergedError(
                        f"non-finite loss at epoch {epoch + 1}, batch starting {start} "
                        f"(learning_rate={cfg.learning_rate})"
                    )
                for k in PARAM_NAMES:
                    params_x[k] -= cfg.learning_rate * grads_x[k]
                    params_y[k] -= cfg.learning_rate * grads_y[k]
                    if not (np.all(np.isfinite(params_x[k])) and np.all(np.isfinite(params_y[k]))):
                        raise TrainingDivergedError(
                            f"parameter {k} became non-finite at epoch {epoch + 1} "
                            f"(learning_rate={cfg.learning_rate})"
                        )

            epoch_loss = full_loss()
            if not np.isfinite(epoch_loss):
                raise TrainingDivergedError(f"non-finite training loss after epoch {epoch + 1}")
            trace.append(epoch_loss)
            if (epoch + 1) % 25 == 0:
                logger.debug(f"epoch {epoch + 1}/{cfg.epochs}: loss={epoch_loss:.4f}")

        logger.info(f"Trained hash networks: {n} rows, {cfg.epochs} epochs, loss {trace[0]:.4g} -> {trace[-1]:.4g}")
        return TrainResult(net_x.with_params(params_x), net_y.with_params(params_y), trace)


def train(net_x: MlpHashFunction, net_y: MlpHashFunction, x, y, codes: CodePair, labels,
          cfg: TrainConfig) -> TrainResult:
    return MlpTrainer(cfg).train(net_x, net_y, x, y, codes, labels)
