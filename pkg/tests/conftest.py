import sys
from pathlib import Path

import numpy as np
import pytest

ROOT_DIR = Path(__file__).resolve().parent.parent
if str(ROOT_DIR) not in sys.path:
    sys.path.append(str(ROOT_DIR))

from app.generators import path_space
from app.loaders import space_from_dict
from core import certificates, pairwise


@pytest.fixture(autouse=True)
def default_tolerance():
    certificates.set_tolerance(certificates.DEFAULT_TOLERANCE)
    pairwise.set_block_rows(pairwise.DEFAULT_BLOCK_ROWS)
    yield
    certificates.set_tolerance(certificates.DEFAULT_TOLERANCE)
    pairwise.set_block_rows(pairwise.DEFAULT_BLOCK_ROWS)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def path_of():
    """Integer path {0..N} with basepoint 0."""

    def build(N: int):
        return space_from_dict(path_space(N))

    return build
