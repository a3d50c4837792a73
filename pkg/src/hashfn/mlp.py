"""
Two-hidden-layer perceptron hash function, written directly in numpy.

    x -> fc1 -> relu -> dropout -> fc2 -> relu -> dropout -> latent
    latent -> fc_h  -> tanh     -> hash output  (q)
    latent -> fc_ce -> softmax  -> class probabilities (C)

The classifier head grows when new classes arrive; every other parameter is
copied over unchanged.
"""
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Optional, Tuple

import numpy as np
from scipy.special import softmax

from codegen.learner import quantize
from core.errors import ShapeMismatchError
from core.matrix_io import load_matrix, read_kv, save_matrix, write_kv
from core.seeding import make_rng

logger = logging.getLogger(__name__)

PARAM_NAMES = ("w1", "b1", "w2", "b2", "wh", "bh", "wc", "bc")

# tanh(x) rounds to exactly +-1 for |x| > ~19; keep outputs strictly inside
_TANH_LIMIT = np.nextafter(1.0, 0.0)


@dataclass(frozen=True)
class ForwardPass:
    latent: np.ndarray
    hash_out: np.ndarray
    ce_out: np.ndarray
    logits: np.ndarray
    cache: Dict[str, np.ndarray]


class MlpHashFunction:
    def __init__(self, params: Dict[str, np.ndarray], dropout_rate: float = 0.5, seed: int = 0):
        missing = [k for k in PARAM_NAMES if k not in params]
        if missing:
            raise ValueError(f"missing parameters: {missing}")
        if not 0.0 <= dropout_rate < 1.0:
            raise ValueError(f"dropout_rate must be in [0, 1), got {dropout_rate}")
        self.params = {k: np.array(params[k], dtype=np.float64) for k in PARAM_NAMES}
        for name, value in self.params.items():
            if not np.all(np.isfinite(value)):
                raise ValueError(f"parameter {name} has non-finite entries")
        self.dropout_rate = float(dropout_rate)
        self.seed = int(seed)

    @classmethod
    def initialize(cls, input_dim: int, bits: int, class_count: int,
                   hidden: Tuple[int, int] = (64, 32), dropout_rate: float = 0.5,
                   seed: int = 0) -> "MlpHashFunction":
        """Uniform +-1/sqrt(fan_in) weights and biases from a seeded generator."""
        rng = make_rng(seed)
        h1, h2 = hidden

        def layer(fan_in, fan_out):
            bound = 1.0 / np.sqrt(fan_in)
            return rng.uniform(-bound, bound, (fan_in, fan_out)), rng.uniform(-bound, bound, fan_out)

        w1, b1 = layer(input_dim, h1)
        w2, b2 = layer(h1, h2)
        wh, bh = layer(h2, bits)
        wc, bc = layer(h2, class_count)
        params = dict(w1=w1, b1=b1, w2=w2, b2=b2, wh=wh, bh=bh, wc=wc, bc=bc)
        return cls(params, dropout_rate, seed)

    @property
    def input_dim(self) -> int:
        return self.params["w1"].shape[0]

    @property
    def bits(self) -> int:
        return self.params["wh"].shape[1]

    @property
    def class_count(self) -> int:
        return self.params["wc"].shape[1]

    @property
    def hidden(self) -> Tuple[int, int]:
        return self.params["w1"].shape[1], self.params["w2"].shape[1]

    def with_params(self, params: Dict[str, np.ndarray]) -> "MlpHashFunction":
        return MlpHashFunction(params, self.dropout_rate, self.seed)

    def encode(self, x) -> np.ndarray:
        """Binary codes sign(hash head) in evaluation mode."""
        return quantize(forward(self, x).hash_out)


def forward(net: MlpHashFunction, x, training: bool = False,
            rng: Optional[np.random.Generator] = None, seed: Optional[int] = None) -> ForwardPass:
    """
    Run the network. Dropout (inverted scaling) is active only when `training`;
    its masks come from `rng`, or a generator seeded with `seed`.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != net.input_dim:
        raise ShapeMismatchError(f"input has shape {x.shape}, network expects {net.input_dim} columns")
    p = net.params
    drop = training and net.dropout_rate > 0.0
    if drop and rng is None:
        rng = make_rng(net.seed if seed is None else seed)
    keep = 1.0 - net.dropout_rate

    z1 = x @ p["w1"] + p["b1"]
    r1 = np.maximum(z1, 0.0)
    m1 = (rng.random(r1.shape) < keep) / keep if drop else None
    h1 = r1 * m1 if drop else r1

    z2 = h1 @ p["w2"] + p["b2"]
    r2 = np.maximum(z2, 0.0)
    m2 = (rng.random(r2.shape) < keep) / keep if drop else None
    latent = r2 * m2 if drop else r2

    hash_out = np.clip(np.tanh(latent @ p["wh"] + p["bh"]), -_TANH_LIMIT, _TANH_LIMIT)
    logits = latent @ p["wc"] + p["bc"]
    ce_out = softmax(logits, axis=1)

    cache = dict(x=x, z1=z1, h1=h1, z2=z2, latent=latent)
    if drop:
        cache.update(m1=m1, m2=m2)
    return ForwardPass(latent, hash_out, ce_out, logits, cache)


def backward(net: MlpHashFunction, fp: ForwardPass, d_hash: np.ndarray,
             d_logits: np.ndarray) -> Dict[str, np.ndarray]:
    """Parameter gradients given dL/d(hash output) and dL/d(ce logits)."""
    p, c = net.params, fp.cache
    d_hash_pre = d_hash * (1.0 - fp.hash_out ** 2)

    grads = {
        "wh": c["latent"].T @ d_hash_pre,
        "bh": d_hash_pre.sum(axis=0),
        "wc": c["latent"].T @ d_logits,
        "bc": d_logits.sum(axis=0),
    }
    d_latent = d_hash_pre @ p["wh"].T + d_logits @ p["wc"].T
    if "m2" in c:
        d_latent = d_latent * c["m2"]
    d_z2 = d_latent * (c["z2"] > 0)
    grads["w2"] = c["h1"].T @ d_z2
    grads["b2"] = d_z2.sum(axis=0)

    d_h1 = d_z2 @ p["w2"].T
    if "m1" in c:
        d_h1 = d_h1 * c["m1"]
    d_z1 = d_h1 * (c["z1"] > 0)
    grads["w1"] = c["x"].T @ d_z1
    grads["b1"] = d_z1.sum(axis=0)
    return grads


def expand_classifier(old: MlpHashFunction, new_class_count: int, seed: int) -> MlpHashFunction:
    """Widen the classifier head; old columns and every other parameter are copied bit-for-bit."""
    if new_class_count < old.class_count:
        raise ValueError(f"cannot shrink classifier from {old.class_count} to {new_class_count} classes")
    params = {k: v.copy() for k, v in old.params.items()}
    extra = new_class_count - old.class_count
    if extra:
        rng = make_rng(seed)
        fan_in = params["wc"].shape[0]
        bound = 1.0 / np.sqrt(fan_in)
        params["wc"] = np.hstack([params["wc"], rng.uniform(-bound, bound, (fan_in, extra))])
        params["bc"] = np.concatenate([params["bc"], rng.uniform(-bound, bound, extra)])
    logger.info(f"Classifier head expanded {old.class_count} -> {new_class_count}")
    return MlpHashFunction(params, old.dropout_rate, old.seed)


def save_network(net: MlpHashFunction, directory, name: str) -> None:
    directory = Path(directory)
    for key in PARAM_NAMES:
        value = net.params[key]
        save_matrix(directory / f"{name}_{key}.txt", value if value.ndim == 2 else value[None, :])
    write_kv(directory / f"{name}_manifest.txt", {
        **{f"shape_{k}": "x".join(str(s) for s in net.params[k].shape) for k in PARAM_NAMES},
        "dropout_rate": repr(net.dropout_rate),
        "class_count": net.class_count,
        "seed": net.seed,
    })


def load_network(directory, name: str) -> MlpHashFunction:
    directory = Path(directory)
    manifest = read_kv(directory / f"{name}_manifest.txt")
    params = {}
    for key in PARAM_NAMES:
        value = load_matrix(directory / f"{name}_{key}.txt")
        shape = tuple(int(s) for s in manifest[f"shape_{key}"].split("x"))
        params[key] = value.reshape(shape)
    return MlpHashFunction(params, float(manifest["dropout_rate"]), int(manifest["seed"]))
