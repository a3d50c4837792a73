import sys
from pathlib import Path

import numpy as np
import pytest

# src/ subpackages are imported flat, same as src/core/main.py does
sys.path.insert(0, str(Path(__file__).parent.parent / "src"))

from core.synthetic import generate_synthetic, split_per_class  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def synthetic_8():
    """The default experiment dataset: 8 classes x 100, 16-d per modality."""
    return generate_synthetic(8, 100, 16, 16, 0.5, seed=0)


@pytest.fixture(scope="session")
def synthetic_split(synthetic_8):
    return split_per_class(synthetic_8, 0.7, seed=0)


@pytest.fixture
def small_data():
    return generate_synthetic(4, 20, 6, 5, 0.3, seed=3)
