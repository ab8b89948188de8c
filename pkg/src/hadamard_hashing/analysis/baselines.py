import logging

import numpy as np

from ..exceptions import ValidationError
from ..preprocessing import FeatureSet
from ..random_state import STREAM_LSH, box_muller_normal, make_rng
from ..retrieval import BinaryCodeSet, binarize

logger = logging.getLogger(__name__)


def lsh_hyperplanes(dim: int, code_length: int, seed) -> np.ndarray:
    """D x K Gaussian hyperplane normals, one column per bit."""
    if dim < 1 or code_length < 1:
        raise ValidationError("LSH needs positive feature dimension and code length.")
    return box_muller_normal(make_rng(seed, STREAM_LSH), (dim, code_length))


def lsh_codes(features: FeatureSet, code_length: int, seed) -> BinaryCodeSet:
    """Random-hyperplane LSH: bit j = sign(<x, w_j>) over the raw features."""
    planes = lsh_hyperplanes(features.dim, code_length, seed)
    logger.info("LSH baseline: %d random hyperplanes over %d-d features", code_length, features.dim)
    return binarize(features.values.astype(np.float64) @ planes, 'sign')
