import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from gchs.manifold import PoissonWManifold  # noqa: E402

HEIS_J = [["0", "1", "0"], ["-1", "0", "1"], ["0", "-1", "0"]]
HEIS_FRAME = [["1", "0", "0"], ["0", "1", "0"], ["0", "x1", "1"]]


@pytest.fixture
def canon0():
    return PoissonWManifold.build(2, "canonical", "0")


@pytest.fixture
def canon_q():
    return PoissonWManifold.build(2, "canonical", "q1")


@pytest.fixture
def heisenberg():
    return PoissonWManifold.build(3, HEIS_J, "x2", frame=HEIS_FRAME)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
