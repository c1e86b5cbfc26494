import numpy as np

from .exceptions import InvalidParameterError
from .types import BinaryId, HashValue


def lsz_hash(binary_id: BinaryId) -> HashValue:
    """Position of the least significant zero bit; ``width`` when every bit is 1."""
    value = binary_id.value
    lowest_zero = (~value) & (value + 1)
    return min(lowest_zero.bit_length() - 1, binary_id.width)


def bitmap_length(n_all):
    """Slots of one LoF pass over an ID space of ``n_all`` identities."""
    if n_all < 1:
        raise InvalidParameterError(f"n_all must be >= 1, got {n_all}")
    return max(1, int(n_all - 1).bit_length())


def hash_bin(h, t):
    """Slot used by hash value ``h`` in a bitmap of ``t`` slots (the last slot absorbs the tail)."""
    return min(h, t - 1)


def draw_hashes(rng, t, size):
    """Vector of ``size`` i.i.d. geometric hash bins for a bitmap of ``t`` slots."""
    if t < 1:
        raise InvalidParameterError(f"bitmap length must be >= 1, got {t}")
    if size == 0:
        return np.zeros(0, dtype=np.int64)
    return np.minimum(rng.geometric(0.5, size=size) - 1, t - 1).astype(np.int64)


def draw_hash(rng, t) -> HashValue:
    """One hash value with P(i) = 2^-(i+1) for i < t-1 and 2^-(t-1) for i = t-1."""
    return int(draw_hashes(rng, t, 1)[0])
