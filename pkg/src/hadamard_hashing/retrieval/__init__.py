from .binary_codes import (
    BinaryCodeSet,
    binarize,
    encode,
    hamming_distance,
    hamming_distances,
    load_codes,
    pack_bits,
    save_codes,
    unpack_bits,
)
from .evaluation import EvalReport, average_precision, evaluate, evaluate_rankings, relevance
from .search import RankedList, search
