import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from codegen.learner import CodeLearnerConfig, CodePair, learn_base, learn_incremental
from core.errors import PhaseError
from core.seeding import STREAM_CODES, STREAM_EXEMPLARS, STREAM_ORDER, derive_seed, make_rng
from core.types import PairedDataset, build_similarity
from evaluation.metrics import MapReport, cross_modal_map
from protocol.exemplars import CodeBook, ExemplarStore, select_exemplars
from protocol.methods import HashFunctions, HashMethod

logger = logging.getLogger(__name__)


class Protocol(Enum):
    UPPER_BOUND = "P-I"
    LOWER_BOUND = "P-II"
    INCREMENTAL = "P-III"

    @classmethod
    def parse(cls, text: str) -> "Protocol":
        key = text.strip().upper().replace("-", "")
        aliases = {"P1": cls.UPPER_BOUND, "PI": cls.UPPER_BOUND,
                   "P2": cls.LOWER_BOUND, "PII": cls.LOWER_BOUND,
                   "P3": cls.INCREMENTAL, "PIII": cls.INCREMENTAL}
        if key not in aliases:
            raise ValueError(f"unknown protocol {text!r}; expected P1, P2 or P3")
        return aliases[key]


class GalleryMode(Enum):
    RETRIEVAL = "retrieval"
    HASHING = "hashing"


@dataclass(frozen=True)
class PhasePlan:
    phase_sizes: Tuple[int, ...]
    shuffle_seeds: Tuple[int, ...] = (0, 1, 2)
    class_order: Optional[Tuple[int, ...]] = None

    def validate(self, class_count: int) -> None:
        if any(s < 1 for s in self.phase_sizes):
            raise ValueError(f"every phase needs at least one class, got {list(self.phase_sizes)}")
        if sum(self.phase_sizes) != class_count:
            raise ValueError(f"phase sizes {list(self.phase_sizes)} sum to {sum(self.phase_sizes)}, "
                             f"dataset has {class_count} classes")
        if not self.shuffle_seeds:
            raise ValueError("at least one shuffle seed is required")
        if self.class_order is not None and sorted(self.class_order) != list(range(class_count)):
            raise ValueError("class_order must be a permutation of all class indices")

    def order_for(self, shuffle_seed: int, class_count: int) -> List[int]:
        base = np.arange(class_count) if self.class_order is None else np.asarray(self.class_order)
        return [int(c) for c in make_rng(derive_seed(shuffle_seed, STREAM_ORDER)).permutation(base)]

    def phases(self, order: Sequence[int]) -> List[List[int]]:
        bounds = np.cumsum((0,) + tuple(self.phase_sizes))
        return [list(order[bounds[k]:bounds[k + 1]]) for k in range(len(self.phase_sizes))]


@dataclass(frozen=True)
class PhaseResult:
    shuffle: int
    phase_index: int
    protocol: str
    method: str
    retrieval: MapReport
    hashing: MapReport
    seconds: float = 0.0


@dataclass
class ProtocolRun:
    protocol: Protocol
    method: str
    shuffles: List[List[PhaseResult]] = field(default_factory=list)

    def averaged(self) -> List[Dict[str, float]]:
        """Per phase: every metric averaged over shuffles."""
        out = []
        for k in range(len(self.shuffles[0])):
            rows = [run[k] for run in self.shuffles]
            out.append({
                "retrieval.x_to_y": float(np.mean([r.retrieval.x_to_y for r in rows])),
                "retrieval.y_to_x": float(np.mean([r.retrieval.y_to_x for r in rows])),
                "retrieval.average": float(np.mean([r.retrieval.average for r in rows])),
                "hashing.x_to_y": float(np.mean([r.hashing.x_to_y for r in rows])),
                "hashing.y_to_x": float(np.mean([r.hashing.y_to_x for r in rows])),
                "hashing.average": float(np.mean([r.hashing.average for r in rows])),
            })
        return out


def gallery_codes(mode: GalleryMode, protocol: Protocol, phase_index: int, functions: HashFunctions,
                  gallery_x, gallery_y, codebook: Optional[CodeBook] = None,
                  rows: Optional[np.ndarray] = None) -> Tuple[np.ndarray, np.ndarray]:
    """
    Binary gallery codes for both modalities.

    Retrieval galleries are always encoded by the current hash functions. A
    hashing gallery is the training set itself, so its stored training codes
    are used; the exception is P-II after phase 1, where new-class rows were
    never trained and the frozen functions encode the whole gallery.
    """
    if mode is GalleryMode.RETRIEVAL or (protocol is Protocol.LOWER_BOUND and phase_index > 0):
        return functions.encode_x(gallery_x), functions.encode_y(gallery_y)
    if codebook is None or rows is None:
        raise ValueError("non-regenerated gallery codes need the codebook and training rows")
    return codebook.binary(rows)


class PhaseOrchestrator:
    """Runs one protocol for one hash method over every shuffle of the plan."""

    def __init__(self, train: PairedDataset, test: PairedDataset, plan: PhasePlan, protocol: Protocol,
                 method: HashMethod, codegen: CodeLearnerConfig, samples_per_class: int = 10,
                 seed: int = 0, retrieval_k: int = 50, workers: int = 1):
        plan.validate(train.class_count)
        if test.class_count != train.class_count:
            raise ValueError(f"test set has {test.class_count} classes, training set {train.class_count}")
        missing = set(range(train.class_count)) - set(np.unique(test.labels).tolist())
        if missing:
            raise ValueError(f"test set has no samples for classes {sorted(missing)}")
        self.train = train
        self.test = test
        self.plan = plan
        self.protocol = protocol
        self.method = method
        self.codegen = codegen
        self.samples_per_class = samples_per_class
        self.seed = seed
        self.retrieval_k = retrieval_k
        self.workers = max(1, workers)

    def run(self) -> ProtocolRun:
        logger.info(f"{self.protocol.value} / {self.method.name}: {len(self.plan.shuffle_seeds)} shuffles, "
                    f"phases {list(self.plan.phase_sizes)}")
        indices = range(len(self.plan.shuffle_seeds))
        if self.workers > 1:
            with ThreadPoolExecutor(max_workers=self.workers) as pool:
                shuffles = list(pool.map(self.run_shuffle, indices))
        else:
            shuffles = [self.run_shuffle(i) for i in indices]
        return ProtocolRun(self.protocol, self.method.name, shuffles)

    def _phase_seed(self, shuffle_seed: int, phase: int) -> int:
        # phase 1 is shared by every protocol; P-I retrains later phases from fresh streams
        salt = 1 if (self.protocol is Protocol.UPPER_BOUND and phase > 0) else 0
        return derive_seed(self.seed, shuffle_seed, phase, salt)

    def run_shuffle(self, shuffle: int) -> List[PhaseResult]:
        shuffle_seed = self.plan.shuffle_seeds[shuffle]
        order = self.plan.order_for(derive_seed(self.seed, shuffle_seed), self.train.class_count)
        phases = self.plan.phases(order)
        logger.info(f"shuffle {shuffle}: class order {order}")

        exemplar_seed = derive_seed(self.seed, shuffle_seed, STREAM_EXEMPLARS)
        codebook: Optional[CodeBook] = None
        store: Optional[ExemplarStore] = None
        functions: Optional[HashFunctions] = None
        results = []
        seen: List[int] = []

        for k, new_classes in enumerate(phases):
            seen = seen + new_classes
            started = time.perf_counter()
            phase_seed = self._phase_seed(shuffle_seed, k)
            try:
                if k == 0 or self.protocol is Protocol.UPPER_BOUND:
                    functions, codebook = self._train_from_scratch(seen, phase_seed)
                    if self.protocol is Protocol.INCREMENTAL:
                        store = select_exemplars(self.train, seen, self.samples_per_class, exemplar_seed)
                        store = store.with_codes(codebook).with_functions(functions)
                elif self.protocol is Protocol.INCREMENTAL:
                    functions, store = self._adapt(store, new_classes, seen, codebook, phase_seed, exemplar_seed)
                result = self._evaluate(shuffle, k, seen, functions, codebook, time.perf_counter() - started)
            except Exception as e:
                logger.error(f"shuffle {shuffle}, phase {k + 1} ({self.protocol.value}) failed: {e}")
                raise PhaseError(str(e), shuffle, k, self.protocol.value) from e
            logger.info(f"shuffle {shuffle} phase {k + 1} {self.protocol.value}/{self.method.name}: "
                        f"MAP@{self.retrieval_k}={result.retrieval.average:.4f} "
                        f"MAP@all(hashing)={result.hashing.average:.4f} ({result.seconds:.1f}s)")
            results.append(result)
        return results

    def _train_from_scratch(self, seen: Sequence[int], phase_seed: int) -> Tuple[HashFunctions, CodeBook]:
        rows = self.train.rows_of_classes(seen)
        subset = self.train.subset(rows)
        cfg = self.codegen.model_copy(update={"seed": derive_seed(phase_seed, STREAM_CODES)})
        codes = learn_base(build_similarity(subset.labels), cfg)
        functions = self.method.fit_base(subset, codes, seen, phase_seed)
        codebook = CodeBook(self.train.rows, cfg.q)
        codebook.store(rows, codes.a, codes.b)
        return functions, codebook

    def _adapt(self, store: ExemplarStore, new_classes: Sequence[int], seen: Sequence[int],
               codebook: CodeBook, phase_seed: int, exemplar_seed: int) -> Tuple[HashFunctions, ExemplarStore]:
        exemplar_rows = store.all_indices()
        new_rows = self.train.rows_of_classes(new_classes)
        bar_rows = np.concatenate([exemplar_rows, new_rows])
        bar = self.train.subset(bar_rows)

        cfg = self.codegen.model_copy(update={"seed": derive_seed(phase_seed, STREAM_CODES)})
        a_hat, b_hat = learn_incremental(build_similarity(bar.labels), store.a_exemplar, store.b_exemplar,
                                         new_rows.size, cfg)
        codebook.store(new_rows, a_hat, b_hat)
        codes_bar = CodePair(np.vstack([store.a_exemplar, a_hat]), np.vstack([store.b_exemplar, b_hat]))

        functions = self.method.fit_incremental(bar, codes_bar, seen, store.functions,
                                                self.samples_per_class, phase_seed)
        fresh = select_exemplars(self.train, new_classes, self.samples_per_class, exemplar_seed)
        store = store.merged(fresh).with_codes(codebook).with_functions(functions)
        logger.debug(f"exemplar store now holds {len(store)} rows over {len(store.classes)} classes")
        return functions, store

    def _evaluate(self, shuffle: int, k: int, seen: Sequence[int], functions: HashFunctions,
                  codebook: CodeBook, seconds: float) -> PhaseResult:
        test_rows = self.test.rows_of_classes(seen)
        query = self.test.subset(test_rows)
        qx, qy = functions.encode_x(query.x), functions.encode_y(query.y)

        gx, gy = gallery_codes(GalleryMode.RETRIEVAL, self.protocol, k, functions, query.x, query.y)
        retrieval = cross_modal_map(qx, qy, query.labels, gx, gy, query.labels, k=self.retrieval_k)

        train_rows = self.train.rows_of_classes(seen)
        gallery = self.train.subset(train_rows)
        hx, hy = gallery_codes(GalleryMode.HASHING, self.protocol, k, functions, gallery.x, gallery.y,
                               codebook, train_rows)
        hashing = cross_modal_map(qx, qy, query.labels, hx, hy, gallery.labels, k=None)

        return PhaseResult(shuffle, k, self.protocol.value, self.method.name, retrieval, hashing, seconds)


def run_protocol(train: PairedDataset, test: PairedDataset, plan: PhasePlan, protocol: Protocol,
                 method: HashMethod, codegen: CodeLearnerConfig, samples_per_class: int = 10,
                 seed: int = 0, retrieval_k: int = 50, workers: int = 1) -> ProtocolRun:
    return PhaseOrchestrator(train, test, plan, protocol, method, codegen, samples_per_class,
                             seed, retrieval_k, workers).run()
