"""
Feature/label ingestion, synthetic datasets and the query/train/database
split protocol.

Binary formats (little-endian):
- HCFS features: magic, u32 version, u32 N, u32 D, N*D float32 row-major.
- HCLS labels:   magic, u32 version, u32 N, u32 C, N*C bytes in {0, 1}.
Files ending in .txt or .csv are read and written as plain comma-separated
rows instead.
"""
import logging
import os
from dataclasses import dataclass

import numpy as np
import pandas as pd
from sklearn.preprocessing import StandardScaler

from ..binary_io import BinaryReader, header, le_bytes, write_atomic
from ..exceptions import FileFormatError, InsufficientClassError, ValidationError
from ..random_state import STREAM_SPLIT, STREAM_SYNTHETIC, box_muller_normal, make_rng

logger = logging.getLogger(__name__)

FEATURES_MAGIC = b'HCFS'
LABELS_MAGIC = b'HCLS'
TEXT_EXTENSIONS = ('.txt', '.csv')


@dataclass(frozen=True)
class FeatureSet:
    values: np.ndarray

    def __post_init__(self):
        if self.values.ndim != 2:
            raise ValidationError(f"Features must be a 2-D matrix, got shape {self.values.shape}.")
        if not np.isfinite(self.values).all():
            raise ValidationError("Features contain NaN or infinite values.")
        self.values.setflags(write=False)

    @property
    def num_items(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class LabelSet:
    values: np.ndarray

    def __post_init__(self):
        if self.values.ndim != 2:
            raise ValidationError(f"Labels must be a 2-D matrix, got shape {self.values.shape}.")
        if not np.isin(self.values, (0, 1)).all():
            raise ValidationError("Labels must be 0/1.")
        empty = np.flatnonzero(self.values.sum(axis=1) == 0)
        if empty.size:
            raise ValidationError(f"Every item needs at least one label; rows {empty[:10].tolist()} have none.")
        self.values.setflags(write=False)

    @property
    def num_items(self) -> int:
        return self.values.shape[0]

    @property
    def num_classes(self) -> int:
        return self.values.shape[1]

    @property
    def is_single_label(self) -> bool:
        return bool((self.values.sum(axis=1) == 1).all())

    def class_indices(self) -> np.ndarray:
        if not self.is_single_label:
            raise ValidationError("Class indices are only defined for single-label data.")
        return self.values.argmax(axis=1)


@dataclass(frozen=True)
class Split:
    query: np.ndarray
    train: np.ndarray
    database: np.ndarray

    def validate(self, num_items: int):
        for name in ('query', 'train', 'database'):
            part = getattr(self, name)
            if part.size and (part.min() < 0 or part.max() >= num_items):
                raise ValidationError(f"Split part '{name}' has indices outside [0, {num_items}).")
        overlap = np.intersect1d(self.query, self.train)
        if overlap.size:
            raise ValidationError(f"Items {overlap[:10].tolist()} are in both query and train.")


def _is_text(path) -> bool:
    return os.fspath(path).lower().endswith(TEXT_EXTENSIONS)


def _read_text_matrix(path, dtype) -> np.ndarray:
    try:
        df = pd.read_csv(path, header=None)
    except pd.errors.EmptyDataError:
        raise FileFormatError("empty text matrix", path)
    except pd.errors.ParserError as e:
        raise FileFormatError(f"malformed text matrix: {e}", path)
    if df.isna().any().any():
        raise FileFormatError("text matrix has missing entries", path)
    return df.to_numpy(dtype=dtype)


def save_features(features: FeatureSet, path):
    if _is_text(path):
        pd.DataFrame(features.values).to_csv(path, header=False, index=False, float_format='%.9g')
    else:
        n, d = features.values.shape
        write_atomic(path, [header(FEATURES_MAGIC, 'II', n, d), le_bytes(features.values, np.float32)])
    logger.info("Saved %d x %d features to %s", *features.values.shape, path)


def load_features(path) -> FeatureSet:
    if _is_text(path):
        values = _read_text_matrix(path, np.float32)
    else:
        reader = BinaryReader.from_path(path)
        reader.expect_header(FEATURES_MAGIC)
        n, d = reader.unpack('II', 'feature header')
        values = reader.array(np.float32, n * d, 'feature payload').reshape(n, d)
        reader.expect_end()
    logger.info("Loaded %d x %d features from %s", *values.shape, path)
    return FeatureSet(values)


def save_labels(labels: LabelSet, path):
    if _is_text(path):
        pd.DataFrame(labels.values).to_csv(path, header=False, index=False)
    else:
        n, c = labels.values.shape
        write_atomic(path, [header(LABELS_MAGIC, 'II', n, c), le_bytes(labels.values, np.uint8)])
    logger.info("Saved %d x %d labels to %s", *labels.values.shape, path)


def load_labels(path) -> LabelSet:
    if _is_text(path):
        values = _read_text_matrix(path, np.int64)
        if not np.isin(values, (0, 1)).all():
            raise ValidationError(f"{path}: labels must be 0/1.")
        values = values.astype(np.uint8)
    else:
        reader = BinaryReader.from_path(path)
        reader.expect_header(LABELS_MAGIC)
        n, c = reader.unpack('II', 'label header')
        values = reader.array(np.uint8, n * c, 'label payload').reshape(n, c)
        reader.expect_end()
        if not np.isin(values, (0, 1)).all():
            raise FileFormatError("label bytes must be 0 or 1.", path)
    logger.info("Loaded %d x %d labels from %s", *values.shape, path)
    return LabelSet(values)


def check_pairing(features: FeatureSet, labels: LabelSet):
    if features.num_items != labels.num_items:
        raise ValidationError(
            f"Feature rows ({features.num_items}) and label rows ({labels.num_items}) differ."
        )


def make_synthetic_blobs(num_classes: int, n_per_class: int, dim: int, spread: float, seed,
                         separation: float = 8.0):
    """
    Gaussian blobs around well separated class centers.

    Centers lie on a sphere; they are orthonormal directions when
    num_classes <= dim and random directions otherwise, scaled so that the
    closest pair sits ``separation * spread`` apart. Items are ordered class
    by class and carry a single label.

    Parameters:
    - num_classes (int): C >= 2.
    - n_per_class (int): Items per class.
    - dim (int): Feature dimension D >= 2.
    - spread (float): Standard deviation of the isotropic noise.
    - seed (int): Unsigned 64-bit seed.
    - separation (float): Minimum center distance in units of ``spread``.

    Returns:
    - (FeatureSet, LabelSet)
    """
    if num_classes < 2 or dim < 2:
        raise ValidationError(f"Need at least 2 classes and 2 dimensions, got C={num_classes}, D={dim}.")
    if n_per_class < 1 or spread <= 0 or separation <= 0:
        raise ValidationError("n_per_class, spread and separation must be positive.")

    # Unit class directions: orthonormal when they fit in D, random otherwise
    rng = make_rng(seed, STREAM_SYNTHETIC)
    raw = box_muller_normal(rng, (dim, num_classes))
    if num_classes <= dim:
        directions, _ = np.linalg.qr(raw)
        directions = directions.T
    else:
        directions = (raw / np.linalg.norm(raw, axis=0)).T
    # Scale so the closest pair of centers sits separation * spread apart
    gaps = np.linalg.norm(directions[:, None, :] - directions[None, :, :], axis=-1)
    min_gap = gaps[np.triu_indices(num_classes, k=1)].min()
    centers = directions * (separation * spread / min_gap)

    class_of = np.repeat(np.arange(num_classes), n_per_class)
    noise = box_muller_normal(rng, (num_classes * n_per_class, dim)) * spread
    values = (centers[class_of] + noise).astype(np.float32)

    labels = np.zeros((class_of.size, num_classes), dtype=np.uint8)
    labels[np.arange(class_of.size), class_of] = 1

    # Nearest-center check on the generated sample
    dists = ((values[:, None, :].astype(np.float64) - centers[None, :, :]) ** 2).sum(axis=-1)
    accuracy = float((dists.argmin(axis=1) == class_of).mean())
    logger.info("Synthetic blobs: C=%d, n=%d, D=%d, spread=%g, nearest-center accuracy %.4f",
                num_classes, n_per_class, dim, spread, accuracy)
    if accuracy < 0.99:
        logger.warning("Synthetic classes overlap: nearest-center accuracy %.4f < 0.99", accuracy)
    return FeatureSet(values), LabelSet(labels)


def _fill_quota(order, item_classes, need, taken):
    picked = []
    for i in order:
        if not (need > 0).any():
            break
        if taken[i]:
            continue
        classes = item_classes[i]
        if (need[classes] > 0).any():
            picked.append(i)
            taken[i] = True
            need[classes] -= 1
    return np.sort(np.asarray(picked, dtype=np.int64))


def split_protocol(labels: LabelSet, n_query_per_class: int, n_train_per_class: int, seed) -> Split:
    """
    Draw ``n_query_per_class`` query items and ``n_train_per_class``
    training items per class; the database is every non-query item.

    Items are scanned in a seeded random order and taken while any of their
    classes still has an open quota, counting toward every class they carry.
    For single-label data this is a uniform per-class draw.
    """
    if n_query_per_class < 0 or n_train_per_class < 0:
        raise ValidationError("Per-class quotas must be non-negative.")
    y = labels.values.astype(bool)
    n, c = y.shape
    population = y.sum(axis=0)
    if labels.is_single_label:
        for cls in range(c):
            if population[cls] < n_query_per_class + n_train_per_class:
                raise InsufficientClassError(cls, n_query_per_class + n_train_per_class, int(population[cls]))

    order = make_rng(seed, STREAM_SPLIT).permutation(n)
    item_classes = [np.flatnonzero(row) for row in y]
    taken = np.zeros(n, dtype=bool)

    # Queries first, then training items from what is left
    query_need = np.full(c, n_query_per_class, dtype=np.int64)
    query = _fill_quota(order, item_classes, query_need, taken)
    if (query_need > 0).any():
        cls = int(np.flatnonzero(query_need > 0)[0])
        raise InsufficientClassError(cls, n_query_per_class, n_query_per_class - int(query_need[cls]), 'query')

    train_need = np.full(c, n_train_per_class, dtype=np.int64)
    train = _fill_quota(order, item_classes, train_need, taken)
    if (train_need > 0).any():
        cls = int(np.flatnonzero(train_need > 0)[0])
        raise InsufficientClassError(cls, n_train_per_class, n_train_per_class - int(train_need[cls]), 'train')

    # The database keeps the training items
    database = np.setdiff1d(np.arange(n), query)
    logger.info("Split: %d query, %d train, %d database", query.size, train.size, database.size)
    return Split(query=query, train=train, database=database)


def save_split(split: Split, path):
    lines = [
        f"{name}: " + ' '.join(str(int(i)) for i in getattr(split, name))
        for name in ('query', 'train', 'database')
    ]
    write_atomic(path, [('\n'.join(lines) + '\n').encode('ascii')])
    logger.info("Saved split to %s", path)


def load_split(path, num_items=None) -> Split:
    with open(path, 'r', encoding='ascii') as fh:
        lines = [line.strip() for line in fh if line.strip()]
    parts = {}
    for line in lines:
        name, sep, rest = line.partition(':')
        if not sep or name not in ('query', 'train', 'database'):
            raise FileFormatError(f"unexpected split line {line[:40]!r}", path)
        try:
            parts[name] = np.array([int(tok) for tok in rest.split()], dtype=np.int64)
        except ValueError:
            raise FileFormatError(f"non-integer index in '{name}' line", path)
    missing = {'query', 'train', 'database'} - parts.keys()
    if missing:
        raise FileFormatError(f"missing split lines: {sorted(missing)}", path)
    split = Split(**parts)
    if num_items is not None:
        split.validate(num_items)
    return split


def standardize(features: FeatureSet, split: Split) -> FeatureSet:
    """Z-score every dimension with statistics of the training split only."""
    scaler = StandardScaler().fit(features.values[split.train].astype(np.float64))
    return FeatureSet(scaler.transform(features.values.astype(np.float64)).astype(np.float32))
