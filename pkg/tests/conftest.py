from pathlib import Path

import numpy as np
import pytest

from pgra.oracle import load_tiny_mdp

DATA = Path(__file__).parent / "data"
TINY_PATHS = sorted(DATA.glob("tiny_mdp_*.json"))


@pytest.fixture(scope="session")
def tiny_mdps():
    return [load_tiny_mdp(p) for p in TINY_PATHS]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
