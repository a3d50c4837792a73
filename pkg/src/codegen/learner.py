"""
Stage 1: relaxed hash-code learning.

Minimises  F(A, B) = ||S - (1/q) A B^T||_F^2 + lambda_h ||A - B||_F^2  over
A, B in [-1, 1]^{N x q} by alternating projected gradient steps. The
incremental form keeps the exemplar block (A^e, B^e) fixed and learns only the
rows of the new samples.
"""
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, Field

from core.errors import ShapeMismatchError
from core.matrix_io import save_matrix, write_kv
from core.seeding import make_rng

logger = logging.getLogger(__name__)

_MAX_HALVINGS = 40
_MAX_ETA = 1e6


class CodeLearnerConfig(BaseModel):
    q: int = Field(default=128, ge=1)
    lambda_h: float = Field(default=1.0, ge=0.0)
    max_iters: int = Field(default=500, ge=1)
    rel_tol: float = Field(default=1e-6, gt=0.0)
    eta_init: float = Field(default=1e-2, gt=0.0)
    seed: int = Field(default=0, ge=0)


@dataclass(frozen=True)
class CodePair:
    a: np.ndarray
    b: np.ndarray
    objective_trace: List[float] = field(default_factory=list)

    @property
    def iterations(self) -> int:
        return max(len(self.objective_trace) - 1, 0)

    @property
    def final_objective(self) -> float:
        return self.objective_trace[-1] if self.objective_trace else float("nan")


def _check_shapes(S: np.ndarray, a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ShapeMismatchError(f"code shapes differ: A {a.shape}, B {b.shape}")
    if S.shape != (a.shape[0], a.shape[0]):
        raise ShapeMismatchError(f"similarity is {S.shape}, codes have {a.shape[0]} rows")


def objective(S, a, b, q: int, lambda_h: float) -> float:
    S, a, b = np.asarray(S, float), np.asarray(a, float), np.asarray(b, float)
    _check_shapes(S, a, b)
    residual = S - (a @ b.T) / q
    return float(np.sum(residual ** 2) + lambda_h * np.sum((a - b) ** 2))


def gradients(S, a, b, q: int, lambda_h: float) -> Tuple[np.ndarray, np.ndarray]:
    """Exact gradients of `objective` w.r.t. A and B."""
    S, a, b = np.asarray(S, float), np.asarray(a, float), np.asarray(b, float)
    _check_shapes(S, a, b)
    residual = S - (a @ b.T) / q
    diff = a - b
    grad_a = -(2.0 / q) * residual @ b + 2.0 * lambda_h * diff
    grad_b = -(2.0 / q) * residual.T @ a - 2.0 * lambda_h * diff
    return grad_a, grad_b


def incremental_objective(S_bar, a_exemplar, b_exemplar, a_hat, b_hat, q: int, lambda_h: float) -> float:
    """Objective with the exemplar block frozen; pairing acts on the new rows only."""
    a_full = np.vstack([a_exemplar, a_hat])
    b_full = np.vstack([b_exemplar, b_hat])
    residual = np.asarray(S_bar, float) - (a_full @ b_full.T) / q
    return float(np.sum(residual ** 2) + lambda_h * np.sum((a_hat - b_hat) ** 2))


def incremental_gradients(S_bar, a_exemplar, b_exemplar, a_hat, b_hat, q: int,
                          lambda_h: float) -> Tuple[np.ndarray, np.ndarray]:
    n_e = a_exemplar.shape[0]
    a_full = np.vstack([a_exemplar, a_hat])
    b_full = np.vstack([b_exemplar, b_hat])
    residual = np.asarray(S_bar, float) - (a_full @ b_full.T) / q
    diff = a_hat - b_hat
    grad_a = -(2.0 / q) * residual[n_e:, :] @ b_full + 2.0 * lambda_h * diff
    grad_b = -(2.0 / q) * residual[:, n_e:].T @ a_full - 2.0 * lambda_h * diff
    return grad_a, grad_b


def quantize(m) -> np.ndarray:
    """sign() with sign(0) = +1."""
    return np.where(np.asarray(m) >= 0, 1, -1).astype(np.int8)


def _project(m: np.ndarray) -> np.ndarray:
    return np.clip(m, -1.0, 1.0)


def _backtracking_step(current: np.ndarray, grad: np.ndarray, value: float,
                       evaluate: Callable[[np.ndarray], float], eta: float) -> Tuple[np.ndarray, float, float]:
    """
    Projected step with step-size halving. A candidate is accepted when F does
    not increase and stays under the quadratic model F + <g, d> + ||d||^2 / (2 eta).
    Returns (iterate, value, eta); the input comes back unchanged if nothing qualifies.
    """
    for _ in range(_MAX_HALVINGS):
        candidate = _project(current - eta * grad)
        step = candidate - current
        candidate_value = evaluate(candidate)
        model = value + float(np.sum(grad * step)) + float(np.sum(step ** 2)) / (2.0 * eta)
        if candidate_value <= value and candidate_value <= model:
            return candidate, candidate_value, eta
        eta *= 0.5
    return current, value, eta


@dataclass
class _Block:
    """Step state of one code matrix: current step size, previous iterate, steps since the last restart."""
    eta: float
    previous: Optional[np.ndarray] = None
    streak: int = 0


def _block_update(current: np.ndarray, value: float, state: _Block,
                  evaluate: Callable[[np.ndarray], float],
                  gradient: Callable[[np.ndarray], np.ndarray]) -> Tuple[np.ndarray, float]:
    """
    One accelerated projected step on a single block.

    The search point is extrapolated along the last move, as in FISTA. If the
    step taken from there would raise F above `value`, the momentum restarts
    and a plain step is taken from `current` instead, so F never increases.
    """
    if state.streak > 0 and state.previous is not None:
        beta = state.streak / (state.streak + 3.0)
        search = _project(current + beta * (current - state.previous))
        search_value = evaluate(search)
        candidate, candidate_value, eta = _backtracking_step(search, gradient(search), search_value,
                                                             evaluate, state.eta)
        if candidate_value <= value:
            state.previous, state.eta, state.streak = current, eta, state.streak + 1
            return candidate, candidate_value
    candidate, candidate_value, state.eta = _backtracking_step(current, gradient(current), value,
                                                               evaluate, state.eta)
    state.previous, state.streak = current, 1
    return candidate, candidate_value


def _alternating_descent(a: np.ndarray, b: np.ndarray,
                         f: Callable[[np.ndarray, np.ndarray], float],
                         grad: Callable[[np.ndarray, np.ndarray], Tuple[np.ndarray, np.ndarray]],
                         cfg: CodeLearnerConfig) -> Tuple[np.ndarray, np.ndarray, List[float]]:
    value = f(a, b)
    trace = [value]
    # steps start at eta_init, double after every iteration and halve on rejection
    block_a, block_b = _Block(cfg.eta_init), _Block(cfg.eta_init)
    for it in range(cfg.max_iters):
        a, value = _block_update(a, value, block_a, lambda cand: f(cand, b), lambda cand: grad(cand, b)[0])
        b, value = _block_update(b, value, block_b, lambda cand: f(a, cand), lambda cand: grad(a, cand)[1])
        block_a.eta = min(2.0 * block_a.eta, _MAX_ETA)
        block_b.eta = min(2.0 * block_b.eta, _MAX_ETA)

        previous = trace[-1]
        trace.append(value)
        if it % 50 == 0:
            logger.debug(f"iter {it}: objective={value:.6g}, eta_a={block_a.eta:.3g}, eta_b={block_b.eta:.3g}")
        if previous <= 0.0:
            break
        if (previous - value) / previous < cfg.rel_tol:
            # a stall under momentum only ends the run once a plain step stalls too
            if block_a.streak <= 1 and block_b.streak <= 1:
                break
            block_a.streak = block_b.streak = 0
    return a, b, trace


def learn_base(S, cfg: CodeLearnerConfig,
               init: Optional[Tuple[np.ndarray, np.ndarray]] = None) -> CodePair:
    """Learn relaxed codes for every row of S from a uniform [-1, 1] start (or `init`)."""
    S = np.asarray(S, dtype=np.float64)
    if S.ndim != 2 or S.shape[0] != S.shape[1] or S.shape[0] < 1:
        raise ShapeMismatchError(f"similarity must be a non-empty square matrix, got {S.shape}")
    n = S.shape[0]

    if init is None:
        rng = make_rng(cfg.seed)
        a = rng.uniform(-1.0, 1.0, (n, cfg.q))
        b = rng.uniform(-1.0, 1.0, (n, cfg.q))
    else:
        a, b = (_project(np.array(m, dtype=np.float64)) for m in init)
        _check_shapes(S, a, b)

    a, b, trace = _alternating_descent(
        a, b,
        lambda a_, b_: objective(S, a_, b_, cfg.q, cfg.lambda_h),
        lambda a_, b_: gradients(S, a_, b_, cfg.q, cfg.lambda_h),
        cfg,
    )
    logger.info(f"Base codes: N={n}, q={cfg.q}, {len(trace) - 1} iterations, objective {trace[0]:.4g} -> {trace[-1]:.4g}")
    return CodePair(a, b, trace)


def learn_incremental(S_bar, a_exemplar, b_exemplar, new_count: int,
                      cfg: CodeLearnerConfig) -> Tuple[np.ndarray, np.ndarray]:
    """
    Learn codes for `new_count` new rows appended after the exemplar rows of S_bar.

    The exemplar codes are read, never written. Callers assemble the full code
    matrices as [A^e; A_hat] and [B^e; B_hat].
    """
    a_e = np.array(a_exemplar, dtype=np.float64)
    b_e = np.array(b_exemplar, dtype=np.float64)
    S_bar = np.asarray(S_bar, dtype=np.float64)
    if a_e.shape != b_e.shape or a_e.ndim != 2:
        raise ShapeMismatchError(f"exemplar code shapes differ: {a_e.shape} vs {b_e.shape}")
    if a_e.shape[1] != cfg.q:
        raise ShapeMismatchError(f"exemplar codes have {a_e.shape[1]} bits, config says q={cfg.q}")
    if np.any(np.abs(a_e) > 1.0) or np.any(np.abs(b_e) > 1.0):
        raise ValueError("exemplar codes must lie in [-1, 1]")
    if new_count < 0:
        raise ValueError(f"new_count must be >= 0, got {new_count}")
    total = a_e.shape[0] + new_count
    if S_bar.shape != (total, total):
        raise ShapeMismatchError(f"similarity is {S_bar.shape}, expected ({total}, {total})")

    if new_count == 0:
        return np.empty((0, cfg.q)), np.empty((0, cfg.q))

    rng = make_rng(cfg.seed)
    a_hat = rng.uniform(-1.0, 1.0, (new_count, cfg.q))
    b_hat = rng.uniform(-1.0, 1.0, (new_count, cfg.q))

    a_hat, b_hat, trace = _alternating_descent(
        a_hat, b_hat,
        lambda a_, b_: incremental_objective(S_bar, a_e, b_e, a_, b_, cfg.q, cfg.lambda_h),
        lambda a_, b_: incremental_gradients(S_bar, a_e, b_e, a_, b_, cfg.q, cfg.lambda_h),
        cfg,
    )
    logger.info(f"Incremental codes: {a_e.shape[0]} exemplars + {new_count} new, {len(trace) - 1} iterations, objective {trace[-1]:.4g}")
    return a_hat, b_hat


def save_codes(pair: CodePair, directory, cfg: CodeLearnerConfig) -> None:
    directory = Path(directory)
    save_matrix(directory / "codes_a.txt", pair.a)
    save_matrix(directory / "codes_b.txt", pair.b)
    write_kv(directory / "codes_meta.txt", {
        "q": cfg.q,
        "lambda_h": cfg.lambda_h,
        "seed": cfg.seed,
        "iterations": pair.iterations,
        "final_objective": repr(pair.final_objective),
    })
