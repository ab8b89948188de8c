"""
Exact Hamming ranking by full scan.

Results are ordered by (distance, item id), where the id is the original
index each database item carries. For a top-R request the distance
histogram locates the cutoff distance, so only the items inside the cutoff
are sorted.
"""
import logging
from dataclasses import dataclass

import numpy as np
from joblib import Parallel, delayed

from ..exceptions import ValidationError
from .binary_codes import BinaryCodeSet, hamming_distances

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RankedList:
    """
    Parameters:
    - indices (np.ndarray): Storage positions in the searched database, best first.
    - distances (np.ndarray): Hamming distance of each retrieved item.
    - ids (np.ndarray): Item ids of the retrieved items.
    """
    indices: np.ndarray
    distances: np.ndarray
    ids: np.ndarray = None


def rank_one(query_words: np.ndarray, database_words: np.ndarray, database_ids: np.ndarray, cutoff: int,
             code_length: int) -> RankedList:
    distances = hamming_distances(query_words, database_words)
    if cutoff >= distances.size:
        order = np.lexsort((database_ids, distances))
        return RankedList(order, distances[order], database_ids[order])

    # smallest distance whose cumulative count reaches the cutoff
    counts = np.cumsum(np.bincount(distances, minlength=code_length + 1))
    boundary = int(np.searchsorted(counts, cutoff))
    inside = np.flatnonzero(distances < boundary)
    on_boundary = np.flatnonzero(distances == boundary)
    needed = cutoff - inside.size
    if needed < on_boundary.size:
        # ties at the boundary are admitted by smallest id
        on_boundary = on_boundary[np.argpartition(database_ids[on_boundary], needed - 1)[:needed]]
    candidates = np.concatenate([inside, on_boundary])
    order = candidates[np.lexsort((database_ids[candidates], distances[candidates]))]
    return RankedList(order, distances[order], database_ids[order])


def _rank_block(query_words, database_words, database_ids, cutoff, code_length):
    return [rank_one(q, database_words, database_ids, cutoff, code_length) for q in query_words]


def search(queries: BinaryCodeSet, database: BinaryCodeSet, cutoff: int = None, threads: int = 1) -> list:
    """
    Rank the database for every query.

    Parameters:
    - queries, database (BinaryCodeSet): Codes of equal length.
    - cutoff (int): Keep the top R items; None keeps the whole database.
    - threads (int): Queries are split into contiguous blocks across this many threads;
      the output order is the query order whatever the split.

    Returns:
    - list[RankedList]: One ranking per query.
    """
    if queries.code_length != database.code_length:
        raise ValidationError(f"Code lengths differ: {queries.code_length} vs {database.code_length}.")
    if database.num_items == 0:
        raise ValidationError("The database is empty.")
    if cutoff is None:
        cutoff = database.num_items
    if cutoff < 1:
        raise ValidationError(f"Cutoff must be positive, got {cutoff}.")
    cutoff = min(int(cutoff), database.num_items)

    logger.debug("Searching %d queries over %d codes (R=%d, threads=%d)",
                 queries.num_items, database.num_items, cutoff, threads)
    if threads <= 1 or queries.num_items < 2:
        return _rank_block(queries.words, database.words, database.ids, cutoff, database.code_length)
    blocks = np.array_split(np.arange(queries.num_items), threads)
    ranked = Parallel(n_jobs=threads, prefer='threads')(
        delayed(_rank_block)(queries.words[block], database.words, database.ids, cutoff, database.code_length)
        for block in blocks if block.size
    )
    # blocks come back in submission order
    return [r for block in ranked for r in block]
