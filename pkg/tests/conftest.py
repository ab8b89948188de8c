import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), 'src'))

from hadamard_hashing.codebook import build_codebook  # noqa: E402
from hadamard_hashing.preprocessing import LabelSet, make_synthetic_blobs, split_protocol  # noqa: E402


@pytest.fixture(scope='session')
def small_blobs():
    """4 well separated classes in 6 dimensions, 30 items each."""
    return make_synthetic_blobs(4, 30, 6, 0.5, seed=3)


@pytest.fixture(scope='session')
def small_split(small_blobs):
    _, labels = small_blobs
    return split_protocol(labels, 5, 15, seed=7)


@pytest.fixture(scope='session')
def small_codebook():
    return build_codebook(8, 4, seed=11)


@pytest.fixture
def multi_labels():
    rng = np.random.default_rng(0)
    values = (rng.random((40, 5)) < 0.35).astype(np.uint8)
    values[values.sum(axis=1) == 0, 0] = 1
    return LabelSet(values)
