"""
Hash-function learners the phase engine can drive: the three ridge variants
(`lr1`, `lr2`, `lr3`) and the two-headed perceptron (`mlp`).
"""
import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Sequence, Tuple, Union

import numpy as np

from codegen.learner import CodePair
from core.seeding import STREAM_CV, STREAM_NET_INIT, STREAM_NET_TRAIN, derive_seed
from core.types import PairedDataset
from hashfn.cross_validation import CvConfig, cross_validate
from hashfn.linear import BASE_VARIANT, LinearHashFunction, apply, fit_base, fit_incremental
from hashfn.mlp import MlpHashFunction, expand_classifier
from hashfn.trainer import TrainConfig, train

logger = logging.getLogger(__name__)

METHOD_SELECTORS = ("lr1", "lr2", "lr3", "mlp")

HashFunction = Union[LinearHashFunction, MlpHashFunction]


@dataclass(frozen=True)
class HashFunctions:
    fx: HashFunction
    fy: HashFunction
    class_order: Tuple[int, ...] = ()

    def encode_x(self, x) -> np.ndarray:
        return _encode(self.fx, x)

    def encode_y(self, y) -> np.ndarray:
        return _encode(self.fy, y)


def _encode(f: HashFunction, features) -> np.ndarray:
    if isinstance(f, LinearHashFunction):
        return apply(f, features)
    return f.encode(features)


class HashMethod(ABC):
    name: str

    @abstractmethod
    def fit_base(self, train_data: PairedDataset, codes: CodePair, seen: Sequence[int],
                 seed: int) -> HashFunctions:
        """Fit from scratch on every row of `train_data`."""

    @abstractmethod
    def fit_incremental(self, train_data: PairedDataset, codes: CodePair, seen: Sequence[int],
                        previous: HashFunctions, samples_per_class: int, seed: int) -> HashFunctions:
        """Adapt `previous` to [exemplars; new rows] given their codes."""


class RidgeMethod(HashMethod):
    def __init__(self, variant: int, cv: CvConfig):
        if variant not in (1, 2, 3):
            raise ValueError(f"ridge variant must be 1, 2 or 3, got {variant}")
        self.variant = variant
        self.cv = cv
        self.name = f"lr{variant}"

    def _cv(self, seed: int) -> CvConfig:
        return self.cv.model_copy(update={"seed": derive_seed(seed, STREAM_CV)})

    def fit_base(self, train_data, codes, seen, seed):
        cv = self._cv(seed)
        lam_x, _ = cross_validate(train_data, codes, 0, cv, BASE_VARIANT, modality="x")
        lam_y, _ = cross_validate(train_data, codes, 0, cv, BASE_VARIANT, modality="y")
        return HashFunctions(fit_base(train_data.x, codes.a, lam_x),
                             fit_base(train_data.y, codes.b, lam_y), tuple(seen))

    def fit_incremental(self, train_data, codes, seen, previous, samples_per_class, seed):
        cv = self._cv(seed)
        lam_x, gamma_x = cross_validate(train_data, codes, samples_per_class, cv, self.variant,
                                        modality="x", old=previous.fx)
        lam_y, gamma_y = cross_validate(train_data, codes, samples_per_class, cv, self.variant,
                                        modality="y", old=previous.fy)
        return HashFunctions(
            fit_incremental(train_data.x, codes.a, previous.fx, lam_x, gamma_x, self.variant),
            fit_incremental(train_data.y, codes.b, previous.fy, lam_y, gamma_y, self.variant),
            tuple(seen),
        )


class DeepMethod(HashMethod):
    """
    Base phases train with plain cross-entropy on uniform batches; incremental
    phases widen the classifier heads and train with whatever class weighting
    and sampling the config asks for.
    """

    name = "mlp"

    def __init__(self, cfg: TrainConfig):
        self.cfg = cfg

    @staticmethod
    def _local_labels(labels: np.ndarray, seen: Sequence[int]) -> np.ndarray:
        position = {int(c): i for i, c in enumerate(seen)}
        return np.array([position[int(l)] for l in labels], dtype=np.int64)

    def fit_base(self, train_data, codes, seen, seed):
        cfg = self.cfg.model_copy(update={
            "seed": derive_seed(seed, STREAM_NET_TRAIN),
            "use_class_weights": False,
            "use_imbalanced_sampler": False,
        })
        nets = [
            MlpHashFunction.initialize(data.shape[1], codes.a.shape[1], len(seen), tuple(cfg.hidden_sizes),
                                       cfg.dropout_rate, derive_seed(seed, STREAM_NET_INIT, m))
            for m, data in enumerate((train_data.x, train_data.y))
        ]
        result = train(nets[0], nets[1], train_data.x, train_data.y, codes,
                       self._local_labels(train_data.labels, seen), cfg)
        return HashFunctions(result.net_x, result.net_y, tuple(seen))

    def fit_incremental(self, train_data, codes, seen, previous, samples_per_class, seed):
        old_order = list(previous.class_order)
        if list(seen[:len(old_order)]) != old_order:
            raise ValueError(f"class order {list(seen)} does not extend the previous order {old_order}")
        cfg = self.cfg.model_copy(update={"seed": derive_seed(seed, STREAM_NET_TRAIN)})
        net_x = expand_classifier(previous.fx, len(seen), derive_seed(seed, STREAM_NET_INIT, 0))
        net_y = expand_classifier(previous.fy, len(seen), derive_seed(seed, STREAM_NET_INIT, 1))
        result = train(net_x, net_y, train_data.x, train_data.y, codes,
                       self._local_labels(train_data.labels, seen), cfg)
        return HashFunctions(result.net_x, result.net_y, tuple(seen))


def make_method(selector: str, cv: CvConfig, train_cfg: TrainConfig) -> HashMethod:
    if selector in ("lr1", "lr2", "lr3"):
        return RidgeMethod(int(selector[-1]), cv)
    if selector == "mlp":
        return DeepMethod(train_cfg)
    raise ValueError(f"unknown method {selector!r}; valid selectors: {', '.join(METHOD_SELECTORS)}")
