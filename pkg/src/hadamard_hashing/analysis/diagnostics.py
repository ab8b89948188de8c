"""
Diagnostics of learned codes: per-bit balance, the distribution of the
pre-sign activations, the class confusion of retrieval results and the
Gram structure of the codebook.
"""
import logging

import numpy as np

from ..codebook import Codebook
from ..exceptions import ValidationError
from ..retrieval import BinaryCodeSet

logger = logging.getLogger(__name__)


def bit_balance(codes: BinaryCodeSet) -> np.ndarray:
    """Fraction of +1 per bit position."""
    if codes.num_items < 1:
        raise ValidationError("Bit balance needs at least one code.")
    return (codes.signs() > 0).mean(axis=0)


def activation_histogram(u: np.ndarray, bins: int = 20):
    """
    Histogram of pre-sign activations over [-1, 1] in equal-width bins.

    Returns:
    - (np.ndarray, np.ndarray): counts (summing to u.size) and the bin edges.
    """
    if bins < 1:
        raise ValidationError("Need at least one bin.")
    values = np.clip(np.asarray(u, dtype=np.float64).ravel(), -1.0, 1.0)
    return np.histogram(values, bins=bins, range=(-1.0, 1.0))


def saturation_fraction(u: np.ndarray, threshold: float = 0.9) -> float:
    """Share of activations with |u| >= threshold, i.e. the mass in the outer bins."""
    return float((np.abs(np.asarray(u)) >= threshold).mean())


def rank_weights(length: int, weighted: bool = True) -> np.ndarray:
    if not weighted:
        return np.ones(length)
    return 1.0 / np.log2(np.arange(1, length + 1) + 1.0)


def confusion_matrix(rankings: list, query_labels: np.ndarray, db_labels: np.ndarray, top_r: int,
                     weighted: bool = True) -> np.ndarray:
    """
    Class confusion of retrieval results.

    Entry (a, b) accumulates, over queries of class a, the weight
    1/log2(r + 1) of every item of class b retrieved at rank r <= top_r
    (weight 1 when ``weighted`` is False); rows are then normalized to sum
    to 1. Items and queries with several labels count toward each class.
    """
    query_labels = np.asarray(query_labels, dtype=np.float64)
    db_labels = np.asarray(db_labels, dtype=np.float64)
    if len(rankings) != query_labels.shape[0]:
        raise ValidationError(f"{len(rankings)} rankings for {query_labels.shape[0]} query label rows.")
    if top_r < 1:
        raise ValidationError("top_r must be positive.")
    num_classes = db_labels.shape[1]
    mass = np.zeros((num_classes, num_classes))
    for q, ranked in enumerate(rankings):
        idx = ranked.indices[:top_r]
        per_class = rank_weights(idx.size, weighted) @ db_labels[idx]
        mass += np.outer(query_labels[q], per_class)

    totals = mass.sum(axis=1, keepdims=True)
    empty = np.flatnonzero(totals[:, 0] == 0)
    if empty.size:
        logger.warning("Classes %s have no queries; their confusion rows stay zero", empty.tolist())
    return np.divide(mass, totals, out=np.zeros_like(mass), where=totals > 0)


def codebook_gram(codebook: Codebook) -> np.ndarray:
    codewords = codebook.codewords.astype(np.float64)
    return codewords @ codewords.T / codebook.code_length


def max_off_diagonal(gram: np.ndarray) -> float:
    if gram.shape[0] < 2:
        return 0.0
    return float(np.abs(gram[~np.eye(gram.shape[0], dtype=bool)]).max())
