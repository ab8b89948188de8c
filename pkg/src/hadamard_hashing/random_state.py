"""
Seeded sampling used by every stochastic step of the toolkit.

All randomness flows from numpy's PCG64 bit generator, keyed by a
``SeedSequence`` built from the user seed plus a stream tag, so that the
codebook projection, the class selection, the synthetic data, the split,
the weight initialization and the per-epoch shuffles never share a stream.
Gaussian variates are produced with the Box-Muller transform over the
generator's uniform doubles; this keeps the normal sampler fixed and
documented instead of depending on numpy's internal ziggurat.
"""
import numpy as np

from .exceptions import ValidationError

STREAM_PROJECTION = 1
STREAM_SELECTION = 2
STREAM_SYNTHETIC = 3
STREAM_SPLIT = 4
STREAM_INIT = 5
STREAM_SHUFFLE = 6
STREAM_LSH = 7

_MAX_SEED = 2**64


def check_seed(seed) -> int:
    seed = int(seed)
    if not 0 <= seed < _MAX_SEED:
        raise ValidationError(f"Seed must be an unsigned 64-bit integer, got {seed}.")
    return seed


def make_rng(seed, stream: int, *extra: int) -> np.random.Generator:
    """
    Build an independent generator for one (seed, stream, ...) key.

    Parameters:
    - seed (int): The user seed, unsigned 64-bit.
    - stream (int): One of the STREAM_* tags.
    - extra (int): Further key material, e.g. the epoch for shuffles.

    Returns:
    - np.random.Generator: A PCG64-backed generator.
    """
    key = [check_seed(seed), int(stream), *[int(e) for e in extra]]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(key)))


def box_muller_normal(rng: np.random.Generator, shape) -> np.ndarray:
    """
    Draw i.i.d. standard normal variates with the Box-Muller transform.

    Uniforms are taken from ``rng.random`` in pairs; ``1 - U`` keeps the
    logarithm argument in (0, 1].

    Parameters:
    - rng (np.random.Generator): Source of uniform doubles.
    - shape (tuple): Output shape.

    Returns:
    - np.ndarray: float64 array of the requested shape.
    """
    size = int(np.prod(shape, dtype=np.int64))
    n_pairs = (size + 1) // 2
    u1 = 1.0 - rng.random(n_pairs)
    u2 = rng.random(n_pairs)
    radius = np.sqrt(-2.0 * np.log(u1))
    angle = 2.0 * np.pi * u2
    z = np.empty(2 * n_pairs, dtype=np.float64)
    z[0::2] = radius * np.cos(angle)
    z[1::2] = radius * np.sin(angle)
    return z[:size].reshape(shape)
