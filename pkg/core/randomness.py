import hashlib
from dataclasses import dataclass

import numpy as np

from .exceptions import InvalidParameterError


def _label_key(label):
    if isinstance(label, (bool, np.bool_)):
        return int(label)
    if isinstance(label, (int, np.integer)):
        if label < 0:
            raise InvalidParameterError(f"integer stream labels must be non-negative, got {label}")
        return int(label)
    digest = hashlib.blake2b(str(label).encode('utf-8'), digest_size=4).digest()
    return int.from_bytes(digest, 'big')


@dataclass(frozen=True)
class RandomSource:
    """Seeded, label-addressed random streams.

    A source never holds generator state: ``generator()`` builds a fresh
    Philox generator keyed by (seed, labels), so equal labels always replay
    the same draws and distinct labels give independent substreams.
    """

    seed: int
    labels: tuple = ()

    def __post_init__(self):
        if not 0 <= int(self.seed) < 2 ** 64:
            raise InvalidParameterError(f"seed must be a 64-bit unsigned integer, got {self.seed}")

    def child(self, *labels):
        return RandomSource(self.seed, self.labels + tuple(labels))

    def seed_sequence(self):
        return np.random.SeedSequence(int(self.seed), spawn_key=tuple(_label_key(x) for x in self.labels))

    def generator(self):
        return np.random.Generator(np.random.Philox(self.seed_sequence()))
