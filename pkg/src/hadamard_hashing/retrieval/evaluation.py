"""
Retrieval metrics: mAP@R, 101-point interpolated precision-recall and
precision@k. Two items are relevant when they share at least one label.
"""
import json
import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from ..exceptions import ValidationError
from .binary_codes import BinaryCodeSet
from .search import search

logger = logging.getLogger(__name__)

RECALL_GRID = np.linspace(0.0, 1.0, 101)
PRECISION_CUTOFFS = (1, 5, 10, 50, 100, 500, 1000, 5000)
DENOMINATORS = ('min', 'relevant')


def relevance(query_label_row, db_label_row) -> bool:
    return int(np.dot(np.asarray(query_label_row, dtype=np.int64), np.asarray(db_label_row, dtype=np.int64))) >= 1


def average_precision(flags: np.ndarray, num_relevant: int, denominator: str = 'min') -> float:
    """
    AP of one ranked list.

    Parameters:
    - flags (np.ndarray): Relevance of the retrieved items in rank order (the top R).
    - num_relevant (int): Relevant items in the whole database.
    - denominator (str): 'min' divides by min(R, num_relevant), 'relevant' by num_relevant.
    """
    # Precision at the rank of every relevant hit, summed
    flags = np.asarray(flags, dtype=bool)
    hits = np.cumsum(flags)
    ranks = np.arange(1, flags.size + 1)
    total = float(np.sum(hits[flags] / ranks[flags]))
    norm = min(flags.size, num_relevant) if denominator == 'min' else num_relevant
    return total / norm


def interpolated_precision(flags: np.ndarray, num_relevant: int, grid: np.ndarray = RECALL_GRID) -> np.ndarray:
    """Precision at each grid recall r: the best precision reached at any recall >= r, 0 if none."""
    flags = np.asarray(flags, dtype=bool)
    hits = np.cumsum(flags)
    precision = hits / np.arange(1, flags.size + 1)
    recall = hits / num_relevant
    # Interpolation: best precision at this rank or any later one
    best_after = np.maximum.accumulate(precision[::-1])[::-1]
    first = np.searchsorted(recall, grid - 1e-12, side='left')
    out = np.zeros(grid.size)
    reached = first < flags.size
    out[reached] = best_after[first[reached]]
    return out


@dataclass
class EvalReport:
    average_precisions: np.ndarray
    mean_average_precision: float
    pr_recall: np.ndarray
    pr_precision: np.ndarray
    precision_at_k: dict
    cutoff: int
    code_length: int
    mode: str
    denominator: str
    num_queries: int
    num_skipped: int
    extra: dict = field(default_factory=dict)

    def summary(self) -> dict:
        evaluated = self.average_precisions[~np.isnan(self.average_precisions)]
        quantiles = np.quantile(evaluated, [0.0, 0.25, 0.5, 0.75, 1.0])
        return {
            'mAP': float(self.mean_average_precision),
            'ap_quantiles': dict(zip(['min', 'q25', 'median', 'q75', 'max'], map(float, quantiles))),
            'num_queries': int(self.num_queries),
            'num_skipped_queries': int(self.num_skipped),
            'cutoff': self.cutoff,
            'code_length': int(self.code_length),
            'mode': self.mode,
            'denominator': self.denominator,
            **self.extra,
        }

    def save(self, prefix):
        """Write ``<prefix>.json``, ``<prefix>_pr.csv`` and ``<prefix>_precision_at_k.csv``."""
        with open(f"{prefix}.json", 'w') as fh:
            json.dump(self.summary(), fh, indent=2, sort_keys=True)
            fh.write('\n')
        pd.DataFrame({'recall': self.pr_recall, 'precision': self.pr_precision}).to_csv(
            f"{prefix}_pr.csv", index=False, float_format='%.17g')
        pd.DataFrame(list(self.precision_at_k.items()), columns=['k', 'precision']).to_csv(
            f"{prefix}_precision_at_k.csv", index=False, float_format='%.17g')
        logger.info("Saved evaluation report to %s.json", prefix)


def evaluate_rankings(rankings: list, query_labels: np.ndarray, db_labels: np.ndarray, cutoff=None,
                      code_length: int = 0, mode: str = 'sign', denominator: str = 'min',
                      precision_cutoffs=PRECISION_CUTOFFS) -> EvalReport:
    if denominator not in DENOMINATORS:
        raise ValidationError(f"AP denominator must be one of {DENOMINATORS}.")
    query_labels = np.asarray(query_labels, dtype=np.int64)
    db_labels = np.asarray(db_labels, dtype=np.int64)
    if len(rankings) != query_labels.shape[0]:
        raise ValidationError(f"{len(rankings)} rankings for {query_labels.shape[0]} query label rows.")

    aps = np.full(len(rankings), np.nan)
    curves, hits_at = [], {k: [] for k in precision_cutoffs}
    for q, ranked in enumerate(rankings):
        # Relevance against the whole database, not only the retrieved top R
        relevant = (db_labels @ query_labels[q]) >= 1
        num_relevant = int(relevant.sum())
        if num_relevant == 0:
            continue
        flags = relevant[ranked.indices]
        aps[q] = average_precision(flags, num_relevant, denominator)
        curves.append(interpolated_precision(flags, num_relevant))
        for k in precision_cutoffs:
            if k <= flags.size:
                hits_at[k].append(flags[:k].sum() / k)

    # Queries without any relevant item stay NaN and are left out of the mean
    evaluated = int((~np.isnan(aps)).sum())
    if evaluated == 0:
        raise ValidationError("No query has a relevant item in the database.")
    skipped = len(rankings) - evaluated
    if skipped:
        logger.warning("%d queries have no relevant database item and are excluded from mAP", skipped)
    report = EvalReport(
        average_precisions=aps,
        mean_average_precision=float(np.nanmean(aps)),
        pr_recall=RECALL_GRID.copy(),
        pr_precision=np.mean(curves, axis=0),
        precision_at_k={k: float(np.mean(v)) for k, v in hits_at.items() if v},
        cutoff=cutoff,
        code_length=code_length,
        mode=mode,
        denominator=denominator,
        num_queries=len(rankings),
        num_skipped=skipped,
    )
    logger.info("mAP@%s = %.4f over %d queries (%d skipped)", cutoff or 'all', report.mean_average_precision,
                evaluated, skipped)
    return report


def evaluate(queries: BinaryCodeSet, database: BinaryCodeSet, query_labels, db_labels, cutoff: int = None,
             denominator: str = 'min', threads: int = 1) -> EvalReport:
    """
    Rank the database for every query and score the rankings.

    Parameters:
    - queries, database (BinaryCodeSet): Query and database codes.
    - query_labels, db_labels (np.ndarray): Binary label rows paired with the codes.
    - cutoff (int): R of mAP@R; None ranks the whole database.
    - denominator (str): AP normalization, 'min' (default) or 'relevant'.
    - threads (int): Search fan-out.

    Returns:
    - EvalReport
    """
    if queries.num_items != len(query_labels) or database.num_items != len(db_labels):
        raise ValidationError("Codes and label rows must have the same item counts.")
    rankings = search(queries, database, cutoff, threads)
    return evaluate_rankings(rankings, query_labels, db_labels, cutoff, database.code_length, database.mode,
                             denominator)
