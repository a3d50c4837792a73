import logging
from dataclasses import dataclass, field, replace
from typing import Dict, Iterable, Optional

import numpy as np

from codegen.learner import quantize
from core.errors import GalleryLookupError
from core.seeding import derive_seed, make_rng
from core.types import PairedDataset

logger = logging.getLogger(__name__)


class CodeBook:
    """Relaxed training codes remembered per training row, for non-regenerated galleries."""

    def __init__(self, rows: int, bits: int):
        self.a = np.full((rows, bits), np.nan)
        self.b = np.full((rows, bits), np.nan)

    def store(self, rows, a, b) -> None:
        rows = np.asarray(rows, dtype=np.int64)
        self.a[rows] = a
        self.b[rows] = b

    def known(self, rows) -> np.ndarray:
        return ~np.isnan(self.a[np.asarray(rows, dtype=np.int64), 0])

    def lookup(self, rows):
        rows = np.asarray(rows, dtype=np.int64)
        unknown = rows[~self.known(rows)]
        if unknown.size:
            raise GalleryLookupError(f"no stored code for training rows {unknown[:10].tolist()}")
        return self.a[rows].copy(), self.b[rows].copy()

    def binary(self, rows):
        a, b = self.lookup(rows)
        return quantize(a), quantize(b)


@dataclass(frozen=True)
class ExemplarStore:
    """
    Retained old-class samples: per-class training-row indices, their frozen
    relaxed codes (aligned with `all_indices()`), and the previous phase's hash
    functions.
    """

    samples_per_class: int
    indices: Dict[int, np.ndarray] = field(default_factory=dict)
    a_exemplar: Optional[np.ndarray] = None
    b_exemplar: Optional[np.ndarray] = None
    functions: Optional[object] = None

    @property
    def classes(self):
        return sorted(self.indices)

    def all_indices(self) -> np.ndarray:
        if not self.indices:
            return np.empty(0, dtype=np.int64)
        return np.concatenate([self.indices[c] for c in self.classes])

    def __len__(self) -> int:
        return int(sum(v.size for v in self.indices.values()))

    def with_codes(self, codebook: CodeBook) -> "ExemplarStore":
        a, b = codebook.lookup(self.all_indices())
        a.flags.writeable = False
        b.flags.writeable = False
        return replace(self, a_exemplar=a, b_exemplar=b)

    def with_functions(self, functions) -> "ExemplarStore":
        return replace(self, functions=functions)

    def merged(self, other: "ExemplarStore") -> "ExemplarStore":
        """Union of class selections; classes already held keep their original rows."""
        indices = dict(other.indices)
        indices.update(self.indices)
        return ExemplarStore(self.samples_per_class, indices, functions=self.functions)


def select_exemplars(data: PairedDataset, classes: Iterable[int], samples_per_class: int,
                     seed: int) -> ExemplarStore:
    """
    Uniformly pick `samples_per_class` rows per class without replacement (the
    whole class when it is smaller). Each class draws from its own seed stream,
    so a class's exemplars do not depend on which other classes are selected.
    """
    if samples_per_class < 1:
        raise ValueError(f"samples_per_class must be >= 1, got {samples_per_class}")
    indices = {}
    for cls in classes:
        cls = int(cls)
        rows = np.flatnonzero(data.labels == cls)
        if rows.size == 0:
            raise ValueError(f"class {cls} has no samples to draw exemplars from")
        take = min(samples_per_class, rows.size)
        chosen = make_rng(derive_seed(seed, cls)).choice(rows, size=take, replace=False)
        indices[cls] = np.sort(chosen)
    store = ExemplarStore(samples_per_class, indices)
    logger.debug(f"Selected {len(store)} exemplars over {len(indices)} classes")
    return store
