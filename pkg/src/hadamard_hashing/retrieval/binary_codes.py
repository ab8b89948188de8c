"""
Bit-packed binary codes.

Bit j of an item lives in word j // 64 at bit position j % 64 (least
significant first); a set bit means +1. Padding bits past K are zero.
Distances are XOR plus population count over the words. Every item carries
an integer id (its original index, 0..N-1 unless given) that follows it
through subsets and permutations; rankings break distance ties by id.
"""
import logging
from dataclasses import dataclass

import numpy as np

from ..binary_io import BinaryReader, header, le_bytes, write_atomic
from ..exceptions import FileFormatError, ValidationError

logger = logging.getLogger(__name__)

CODES_MAGIC = b'HCBC'
BINARIZATION_MODES = {'sign': 0, 'mean_centered_sign': 1}


def words_per_code(code_length: int) -> int:
    return (int(code_length) + 63) // 64


def pack_bits(signs: np.ndarray) -> np.ndarray:
    """Pack an N x K matrix of +/-1 values into N x ceil(K/64) uint64 words."""
    signs = np.asarray(signs)
    n, k = signs.shape
    bits = np.zeros((n, words_per_code(k) * 64), dtype=bool)
    bits[:, :k] = signs > 0
    packed = np.packbits(bits, axis=1, bitorder='little')
    return np.ascontiguousarray(packed).view(np.dtype('<u8')).astype(np.uint64)


def unpack_bits(words: np.ndarray, code_length: int) -> np.ndarray:
    """Inverse of ``pack_bits``: N x K int8 matrix of +/-1."""
    raw = np.ascontiguousarray(words, dtype=np.dtype('<u8')).view(np.uint8)
    bits = np.unpackbits(raw, axis=1, bitorder='little')[:, :code_length]
    return np.where(bits == 1, 1, -1).astype(np.int8)


def _padding_mask(code_length: int) -> np.ndarray:
    mask = np.zeros(words_per_code(code_length), dtype=np.uint64)
    used = code_length % 64
    if used:
        mask[-1] = ~np.uint64((1 << used) - 1)
    return mask


@dataclass(frozen=True)
class BinaryCodeSet:
    """
    Parameters:
    - words (np.ndarray): N x ceil(K/64) uint64 words.
    - code_length (int): K, the number of bits per item.
    - mode (str): Binarization that produced the codes, 'sign' or 'mean_centered_sign'.
    - ids (np.ndarray): Original index of every item; defaults to 0..N-1.
    """
    words: np.ndarray
    code_length: int
    mode: str = 'sign'
    ids: np.ndarray = None

    def __post_init__(self):
        if self.mode not in BINARIZATION_MODES:
            raise ValidationError(f"Unknown binarization mode '{self.mode}'.")
        if self.words.dtype != np.uint64 or self.words.ndim != 2:
            raise ValidationError("Code words must be a 2-D uint64 array.")
        if self.words.shape[1] != words_per_code(self.code_length):
            raise ValidationError(f"{self.words.shape[1]} words cannot hold {self.code_length} bits.")
        if (self.words & _padding_mask(self.code_length)).any():
            raise ValidationError("Padding bits past the code length must be zero.")
        if self.ids is None:
            ids = np.arange(self.words.shape[0], dtype=np.int64)
        else:
            ids = np.asarray(self.ids)
            if ids.shape != (self.words.shape[0],) or not np.issubdtype(ids.dtype, np.integer):
                raise ValidationError(f"Item ids must be {self.words.shape[0]} integers.")
            ids = ids.astype(np.int64)
        # frozen dataclass: the normalized ids replace whatever was passed
        object.__setattr__(self, 'ids', ids)
        self.words.setflags(write=False)
        self.ids.setflags(write=False)

    @classmethod
    def from_signs(cls, signs: np.ndarray, mode: str = 'sign', ids: np.ndarray = None) -> 'BinaryCodeSet':
        return cls(pack_bits(signs), np.asarray(signs).shape[1], mode, ids)

    @property
    def num_items(self) -> int:
        return self.words.shape[0]

    def signs(self) -> np.ndarray:
        return unpack_bits(self.words, self.code_length)

    def subset(self, indices) -> 'BinaryCodeSet':
        """Rows at the given storage positions; their ids come along."""
        indices = np.asarray(indices)
        return BinaryCodeSet(np.ascontiguousarray(self.words[indices]), self.code_length, self.mode,
                             self.ids[indices])

    def code(self, index: int) -> 'BinaryCodeSet':
        return self.subset([index])


def binarize(u: np.ndarray, mode: str = 'sign', reference_means: np.ndarray = None) -> BinaryCodeSet:
    """
    Threshold real-valued hash outputs into codes.

    In 'sign' mode bit = sign(u); in 'mean_centered_sign' mode
    bit = sign(u - mean) with per-bit means taken from the database's
    pre-sign activations. sign(0) = +1 in both.
    """
    u = np.asarray(u, dtype=np.float64)
    if u.ndim != 2:
        raise ValidationError(f"Hash outputs must be N x K, got shape {u.shape}.")
    if mode == 'mean_centered_sign':
        if reference_means is None:
            raise ValidationError("Mean-centered binarization needs reference means.")
        reference_means = np.asarray(reference_means, dtype=np.float64)
        if reference_means.shape != (u.shape[1],):
            raise ValidationError(f"Reference means must have {u.shape[1]} entries.")
        u = u - reference_means
    elif mode != 'sign':
        raise ValidationError(f"Unknown binarization mode '{mode}'.")
    return BinaryCodeSet.from_signs(np.where(u >= 0, 1, -1), mode)


def encode(net, features, mode: str = 'sign', reference_rows=None):
    """
    Hash every feature row with a trained network.

    Parameters:
    - net (HashNetwork): Trained network.
    - features (FeatureSet): Items to encode.
    - mode (str): Binarization mode.
    - reference_rows (np.ndarray): Rows (the database) whose activations give the centering means.

    Returns:
    - (BinaryCodeSet, np.ndarray): Codes and the pre-sign activations u.
    """
    u = net.hash_outputs(features.values)
    means = None
    if mode == 'mean_centered_sign':
        if reference_rows is None or len(reference_rows) == 0:
            raise ValidationError("Mean-centered encoding needs the database rows as reference.")
        means = u[np.asarray(reference_rows)].mean(axis=0)
    return binarize(u, mode, means), u


def _check_same_length(a: BinaryCodeSet, b: BinaryCodeSet):
    if a.code_length != b.code_length:
        raise ValidationError(f"Code lengths differ: {a.code_length} vs {b.code_length}.")


def hamming_distance(a: BinaryCodeSet, b: BinaryCodeSet) -> int:
    """Hamming distance between two single-item code sets."""
    _check_same_length(a, b)
    if a.num_items != 1 or b.num_items != 1:
        raise ValidationError("hamming_distance compares exactly one code with one code.")
    return int(np.bitwise_count(a.words[0] ^ b.words[0]).sum())


def hamming_distances(query_words: np.ndarray, database_words: np.ndarray) -> np.ndarray:
    """Distances from one query (1-D words) to every database row."""
    diff = np.bitwise_count(database_words ^ query_words)
    if diff.shape[1] == 1:
        return diff[:, 0].astype(np.int64)
    return diff.sum(axis=1, dtype=np.int64)


def save_codes(codes: BinaryCodeSet, path):
    write_atomic(path, [
        header(CODES_MAGIC, 'IIB', codes.num_items, codes.code_length, BINARIZATION_MODES[codes.mode]),
        le_bytes(codes.words, np.uint64),
    ])
    logger.info("Saved %d codes of %d bits to %s", codes.num_items, codes.code_length, path)


def load_codes(path) -> BinaryCodeSet:
    """Items get ids 0..N-1 in file order."""
    reader = BinaryReader.from_path(path)
    reader.expect_header(CODES_MAGIC)
    n, k, tag = reader.unpack('IIB', 'codes header')
    modes = {v: name for name, v in BINARIZATION_MODES.items()}
    if tag not in modes:
        raise FileFormatError(f"unknown binarization mode tag {tag}.", path)
    words = reader.array(np.uint64, n * words_per_code(k), 'code words').reshape(n, words_per_code(k))
    reader.expect_end()
    logger.info("Loaded %d codes of %d bits from %s", n, k, path)
    return BinaryCodeSet(words, k, modes[tag])
