import enum
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .exceptions import InvalidParameterError

HashValue = int


class Symbol(enum.Enum):
    NONE = 'none'
    ALPHA = 'alpha'
    BETA = 'beta'

    @property
    def short(self):
        return {'none': '0', 'alpha': 'α', 'beta': 'β'}[self.value]


class SlotOutcome(enum.Enum):
    EMPTY = 'E'
    ALPHA = 'α'
    BETA = 'β'
    COLLISION = 'C'

    @classmethod
    def parse(cls, token):
        """Accept the short forms used in the protocol tables ('E', '0', 'C', 'α', 'a', 'β', 'b')."""
        aliases = {'E': cls.EMPTY, '0': cls.EMPTY, 'C': cls.COLLISION,
                   'α': cls.ALPHA, 'a': cls.ALPHA, 'β': cls.BETA, 'b': cls.BETA}
        try:
            return aliases[token]
        except KeyError:
            raise InvalidParameterError(f"unknown slot outcome token {token!r}") from None


class HashingMode(enum.Enum):
    FIXED_ID = 'fixed_id'
    REDRAW = 'redraw'


class TrafficClass(enum.Enum):
    EMERGENCY = 1
    PERIODIC = 2
    NORMAL = 3
    GENERIC = 0


@dataclass(frozen=True)
class TrafficType:
    index: int
    label: TrafficClass = TrafficClass.GENERIC

    def __post_init__(self):
        if self.index < 1:
            raise InvalidParameterError(f"type index must be >= 1, got {self.index}")

    @classmethod
    def for_index(cls, index, T):
        # Las etiquetas con nombre solo existen cuando T = 3
        if T == 3:
            return cls(index, TrafficClass(index))
        return cls(index, TrafficClass.GENERIC)

    @property
    def name(self):
        if self.label is TrafficClass.GENERIC:
            return f'type{self.index}'
        return self.label.name.lower()


@dataclass(frozen=True)
class BinaryId:
    """Fixed-width node identifier, stored as an integer plus its bit width."""

    value: int
    width: int

    def __post_init__(self):
        if self.width < 1:
            raise InvalidParameterError(f"ID width must be >= 1, got {self.width}")
        if not 0 <= self.value < (1 << self.width):
            raise InvalidParameterError(f"ID value {self.value} does not fit in {self.width} bits")

    @classmethod
    def from_bits(cls, bits):
        if not bits or set(bits) - {'0', '1'}:
            raise InvalidParameterError(f"not a bit string: {bits!r}")
        return cls(int(bits, 2), len(bits))

    @property
    def bits(self):
        return format(self.value, f'0{self.width}b')


@dataclass(frozen=True)
class Node:
    node_id: int
    type_index: int
    binary_id: BinaryId
    active: bool = False
    queue: int = 0


@dataclass(frozen=True)
class NodePopulation:
    """Per-type node lists sharing one ID width.

    ``types[b - 1]`` holds the nodes of Type b. ``n_all`` is the number of
    possible IDs used to size the LoF bitmap (defaults to the largest type).
    """

    types: tuple
    id_bits: int
    n_all: int = 0
    mac_mode: bool = False
    labels: tuple = field(default=())

    def __post_init__(self):
        if len(self.types) < 1:
            raise InvalidParameterError("a population needs at least one type")
        for nodes in self.types:
            for node in nodes:
                if node.binary_id.width != self.id_bits:
                    raise InvalidParameterError("all IDs in a population must share one width")
                if self.mac_mode and node.active != (node.queue > 0):
                    raise InvalidParameterError(f"node {node.node_id}: MAC activity must follow the queue")
        if self.n_all <= 0:
            object.__setattr__(self, 'n_all', max(len(nodes) for nodes in self.types) or 1)

    @property
    def T(self):
        return len(self.types)

    def type_of(self, b):
        return TrafficType.for_index(b, self.T)

    def active_nodes(self, b):
        return tuple(node for node in self.types[b - 1] if node.active)

    def active_counts(self):
        return tuple(len(self.active_nodes(b)) for b in range(1, self.T + 1))

    def restrict(self, b):
        """Single-type population holding Type b only."""
        return replace(self, types=(self.types[b - 1],))

    @staticmethod
    def default_id_bits(D):
        return int(np.ceil(np.log2(max(D, 2)))) + 8

    @classmethod
    def _draw_ids(cls, total, id_bits, rng):
        if total > (1 << id_bits):
            raise InvalidParameterError(f"{total} nodes do not fit in a {id_bits}-bit ID space")
        return rng.choice(1 << id_bits, size=total, replace=False)

    @classmethod
    def bernoulli(cls, sizes: Sequence[int], q: Sequence[float], source, id_bits=None, n_all=None):
        """Population with ``sizes[b]`` nodes of each type, each active with probability ``q[b]``."""
        if len(sizes) != len(q):
            raise InvalidParameterError("sizes and activity probabilities differ in length")
        if any(not 0.0 <= qb <= 1.0 for qb in q):
            raise InvalidParameterError(f"activity probabilities must lie in [0, 1], got {list(q)}")
        id_bits = id_bits or cls.default_id_bits(max(sizes))
        rng = source.child('population').generator()
        ids = cls._draw_ids(sum(sizes), id_bits, rng)
        types, offset = [], 0
        for b, (size, qb) in enumerate(zip(sizes, q), start=1):
            flags = rng.random(size) < qb
            types.append(tuple(
                Node(offset + k, b, BinaryId(int(ids[offset + k]), id_bits), bool(flags[k]))
                for k in range(size)
            ))
            offset += size
        return cls(tuple(types), id_bits, n_all or max(sizes))

    @classmethod
    def from_counts(cls, counts: Sequence[int], source, sizes=None, id_bits=None, n_all=None):
        """Population with exactly ``counts[b]`` active nodes of Type b."""
        sizes = list(sizes or counts)
        if any(c < 0 or c > s for c, s in zip(counts, sizes)):
            raise InvalidParameterError(f"active counts {list(counts)} exceed sizes {sizes}")
        id_bits = id_bits or cls.default_id_bits(max(max(sizes), 1))
        rng = source.child('population').generator()
        ids = cls._draw_ids(sum(sizes), id_bits, rng)
        types, offset = [], 0
        for b, (size, count) in enumerate(zip(sizes, counts), start=1):
            types.append(tuple(
                Node(offset + k, b, BinaryId(int(ids[offset + k]), id_bits), k < count)
                for k in range(size)
            ))
            offset += size
        return cls(tuple(types), id_bits, n_all or max(max(sizes), 1))

    def with_queues(self, queues):
        """MAC-mode copy: ``queues[b - 1][k]`` packets at the k-th node of Type b, active iff nonempty."""
        if len(queues) != self.T or any(len(q) != len(nodes) for q, nodes in zip(queues, self.types)):
            raise InvalidParameterError("queue lengths must match the population shape")
        types = tuple(
            tuple(replace(node, active=int(q) > 0, queue=int(q)) for node, q in zip(nodes, type_queues))
            for nodes, type_queues in zip(self.types, queues)
        )
        return replace(self, types=types, mac_mode=True)
