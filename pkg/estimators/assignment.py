from dataclasses import dataclass

import numpy as np

from core.exceptions import InvalidParameterError
from core.hashing import bitmap_length, draw_hashes, hash_bin, lsz_hash
from core.types import HashingMode


@dataclass(frozen=True)
class HashAssignment:
    """Hash bins of the active nodes of every type for one estimation pass.

    Feeding the same assignment to different protocols makes their
    estimates directly comparable.
    """

    t: int
    bins: tuple

    def __post_init__(self):
        if self.t < 1:
            raise InvalidParameterError(f"bitmap length must be >= 1, got {self.t}")
        for type_bins in self.bins:
            if any(not 0 <= h < self.t for h in type_bins):
                raise InvalidParameterError(f"hash bins must lie in [0, {self.t - 1}]")

    @property
    def T(self):
        return len(self.bins)

    def counts(self):
        """T x t matrix of active nodes per (type, bin)."""
        matrix = np.zeros((self.T, self.t), dtype=np.int64)
        for b, type_bins in enumerate(self.bins):
            if len(type_bins):
                matrix[b] = np.bincount(np.asarray(type_bins, dtype=np.int64), minlength=self.t)
        return matrix

    @classmethod
    def from_counts(cls, counts):
        counts = np.asarray(counts, dtype=np.int64)
        return cls(counts.shape[1], tuple(tuple(np.repeat(np.arange(counts.shape[1]), row).tolist())
                                         for row in counts))


def assign_type_bins(nodes, type_index, t, mode, source, frame=0):
    active = [node for node in nodes if node.active]
    if mode is HashingMode.FIXED_ID:
        return tuple(hash_bin(lsz_hash(node.binary_id), t) for node in active)
    rng = source.child('hash', type_index, frame).generator()
    return tuple(draw_hashes(rng, t, len(active)).tolist())


def assign_hashes(population, source, mode=HashingMode.REDRAW, frame=0, t=None):
    t = t or bitmap_length(population.n_all)
    return HashAssignment(t, tuple(
        assign_type_bins(nodes, b, t, mode, source, frame)
        for b, nodes in enumerate(population.types, start=1)
    ))
