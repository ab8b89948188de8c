"""
Hadamard codebook construction.

A Sylvester Hadamard matrix of order K* supplies mutually orthogonal,
balanced +/-1 vectors. When K* equals the code length K the codewords are
columns of the matrix; otherwise the matrix is reduced to K columns by a
seeded Gaussian projection followed by the sign function, and codewords
are rows of the result. Index 0 (the all-ones vector) is never selected.
"""
import logging
from dataclasses import dataclass, field

import numpy as np

from ..binary_io import BinaryReader, header, le_bytes, write_atomic
from ..exceptions import FileFormatError, ValidationError
from ..random_state import STREAM_PROJECTION, STREAM_SELECTION, box_muller_normal, check_seed, make_rng

logger = logging.getLogger(__name__)

CODEBOOK_MAGIC = b'HCCB'
PROVENANCE_DIRECT = 'direct'
PROVENANCE_PROJECTED = 'projected'
_PROVENANCE_TAGS = {PROVENANCE_DIRECT: 0, PROVENANCE_PROJECTED: 1}


def sign(x: np.ndarray) -> np.ndarray:
    """Sign with sign(0) = +1, returned as int8."""
    return np.where(np.asarray(x) >= 0, 1, -1).astype(np.int8)


def is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class HadamardMatrix:
    order: int
    entries: np.ndarray

    def __post_init__(self):
        self.entries.setflags(write=False)


@dataclass(frozen=True)
class ProjectionMatrix:
    rows: int
    cols: int
    entries: np.ndarray
    seed: int

    def __post_init__(self):
        self.entries.setflags(write=False)


@dataclass(frozen=True)
class Codebook:
    """
    One +/-1 codeword per class.

    Parameters:
    - codewords (np.ndarray): C x K int8 matrix, row c is the codeword of class c.
    - provenance (str): 'direct' when taken from the Hadamard matrix as is, 'projected' otherwise.
    - seed (int): Seed that drove projection and selection.
    - selected_indices (tuple): Source indices in the Hadamard (or projected) matrix.
    - order (int): The Hadamard order K* the codebook was drawn from.
    """
    codewords: np.ndarray
    provenance: str
    seed: int
    selected_indices: tuple = field(default=())
    order: int = 0

    def __post_init__(self):
        self.codewords.setflags(write=False)

    @property
    def num_classes(self) -> int:
        return self.codewords.shape[0]

    @property
    def code_length(self) -> int:
        return self.codewords.shape[1]

    def codeword(self, class_index: int) -> np.ndarray:
        return self.codewords[class_index]


@dataclass(frozen=True)
class TargetCode:
    values: np.ndarray
    mask: np.ndarray


def sylvester(order: int) -> HadamardMatrix:
    """
    Build the Sylvester Hadamard matrix H_order by repeated doubling
    H_2n = [[H_n, H_n], [H_n, -H_n]] starting from H_1 = [[1]].
    """
    order = int(order)
    if not is_power_of_two(order):
        raise ValidationError(
            f"Sylvester construction needs a power-of-two order, got {order}; "
            "orders 12 and 20 need other constructions and are not supported."
        )
    h = np.ones((1, 1), dtype=np.int8)
    while h.shape[0] < order:
        h = np.block([[h, h], [h, -h]])
    return HadamardMatrix(order=order, entries=h)


def select_order(code_length: int, num_classes: int) -> int:
    """Smallest power of two K* with K* >= K and K* >= C + 1."""
    if code_length < 1 or num_classes < 1:
        raise ValidationError(f"Code length and class count must be positive, got K={code_length}, C={num_classes}.")
    need = max(int(code_length), int(num_classes) + 1)
    return 1 << (need - 1).bit_length()


def sample_projection(order: int, code_length: int, seed) -> ProjectionMatrix:
    if order <= code_length:
        raise ValidationError(f"Projection is only needed when K* > K, got K*={order}, K={code_length}.")
    seed = check_seed(seed)
    rng = make_rng(seed, STREAM_PROJECTION)
    entries = box_muller_normal(rng, (order, code_length))
    return ProjectionMatrix(rows=order, cols=code_length, entries=entries, seed=seed)


def project_and_sign(hadamard: HadamardMatrix, projection: ProjectionMatrix) -> np.ndarray:
    """Return sign(H* . T) as a K* x K int8 matrix."""
    if hadamard.order != projection.rows:
        raise ValidationError(
            f"Hadamard order {hadamard.order} does not match projection rows {projection.rows}."
        )
    return sign(hadamard.entries.astype(np.float64) @ projection.entries)


def build_codebook(code_length: int, num_classes: int, seed) -> Codebook:
    """
    Generate the class codebook.

    Parameters:
    - code_length (int): Bits per code, K >= 2.
    - num_classes (int): Number of classes, C >= 1.
    - seed (int): Unsigned 64-bit seed for the projection and the selection.

    Returns:
    - Codebook: C x K codewords with provenance and selected source indices.
    """
    if code_length < 2 or num_classes < 1:
        raise ValidationError(f"Need K >= 2 and C >= 1, got K={code_length}, C={num_classes}.")
    seed = check_seed(seed)
    order = select_order(code_length, num_classes)
    hadamard = sylvester(order)

    # Index 0 (the all-ones row/column) is never picked
    selector = make_rng(seed, STREAM_SELECTION)
    picked = 1 + selector.choice(order - 1, size=num_classes, replace=False)

    # Direct path: columns of H; projected path: rows of sign(H* . T)
    if order == code_length:
        provenance = PROVENANCE_DIRECT
        codewords = np.ascontiguousarray(hadamard.entries[:, picked].T)
    else:
        provenance = PROVENANCE_PROJECTED
        projected = project_and_sign(hadamard, sample_projection(order, code_length, seed))
        codewords = np.ascontiguousarray(projected[picked, :])

    logger.info("Built %s codebook: C=%d, K=%d, K*=%d, seed=%d", provenance, num_classes, code_length, order, seed)
    return Codebook(
        codewords=codewords.astype(np.int8),
        provenance=provenance,
        seed=seed,
        selected_indices=tuple(int(i) for i in picked),
        order=order,
    )


def make_target(codebook: Codebook, label_row) -> TargetCode:
    """
    Target code of one sample: the codeword of its class, or for several
    classes the sign of the codeword sum with zero-sum bits masked out.
    """
    values, mask = make_targets(codebook, np.asarray(label_row)[None, :])
    return TargetCode(values=values[0].astype(np.int8), mask=mask[0])


def make_targets(codebook: Codebook, labels: np.ndarray):
    """
    Vectorized ``make_target`` over an N x C label matrix.

    Returns:
    - (np.ndarray, np.ndarray): N x K float64 target values in {-1, 0, +1}
      and the N x K boolean mask.
    """
    labels = np.asarray(labels)
    if labels.ndim != 2 or labels.shape[1] != codebook.num_classes:
        raise ValidationError(
            f"Label rows must have {codebook.num_classes} entries, got shape {labels.shape}."
        )
    positives = (labels != 0)
    empty = np.flatnonzero(~positives.any(axis=1))
    if empty.size:
        raise ValidationError(f"Label rows without any positive class: {empty[:10].tolist()}.")
    summed = positives.astype(np.int64) @ codebook.codewords.astype(np.int64)
    values = np.sign(summed).astype(np.float64)
    return values, values != 0


def save_codebook(codebook: Codebook, path):
    c, k = codebook.codewords.shape
    write_atomic(path, [
        header(CODEBOOK_MAGIC, 'IIQB', c, k, codebook.seed, _PROVENANCE_TAGS[codebook.provenance]),
        le_bytes(codebook.codewords, np.int8),
    ])
    logger.info("Saved codebook to %s", path)


def load_codebook(path) -> Codebook:
    reader = BinaryReader.from_path(path)
    reader.expect_header(CODEBOOK_MAGIC)
    c, k, seed, tag = reader.unpack('IIQB', 'codebook header')
    provenance = {v: name for name, v in _PROVENANCE_TAGS.items()}.get(tag)
    if provenance is None:
        raise FileFormatError(f"unknown provenance tag {tag}.", path)
    codewords = reader.array(np.int8, c * k, 'codewords').reshape(c, k)
    reader.expect_end()
    if not np.isin(codewords, (-1, 1)).all():
        raise FileFormatError("codewords must be +/-1.", path)

    # The file does not carry the selected indices; recover them by rebuilding from the seed.
    rebuilt = build_codebook(k, c, seed)
    if rebuilt.provenance == provenance and np.array_equal(rebuilt.codewords, codewords):
        indices, order = rebuilt.selected_indices, rebuilt.order
    else:
        logger.warning("%s: codewords do not match a rebuild from seed %d; source indices unknown", path, seed)
        indices, order = (), select_order(k, c)
    return Codebook(codewords=codewords, provenance=provenance, seed=seed, selected_indices=indices, order=order)
