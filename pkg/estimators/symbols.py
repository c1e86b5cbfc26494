import enum
from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np

from core.exceptions import InvalidParameterError
from core.types import Symbol


class Protocol(enum.Enum):
    METHOD1 = 'method1'
    METHOD2 = 'method2'


@dataclass(frozen=True)
class SymbolMatrix:
    """Transmission pattern of every type inside one block (row b-1 is Type b)."""

    protocol: Protocol
    rows: tuple

    def __post_init__(self):
        if len(set(self.rows)) != len(self.rows):
            raise InvalidParameterError("symbol matrix rows must be pairwise distinct")

    @property
    def T(self):
        return len(self.rows)

    @property
    def width(self):
        return len(self.rows[0])

    @cached_property
    def alpha_mask(self):
        return np.array([[s is Symbol.ALPHA for s in row] for row in self.rows], dtype=np.int64)

    @cached_property
    def beta_mask(self):
        return np.array([[s is Symbol.BETA for s in row] for row in self.rows], dtype=np.int64)

    def describe(self):
        return [''.join(s.short for s in row) for row in self.rows]


def _method1_rows(T):
    rows = []
    for b in range(1, T + 1):
        if b == 1:
            rows.append((Symbol.ALPHA,) * (T - 1))
        else:
            rows.append(tuple(Symbol.BETA if j == b - 2 else Symbol.NONE for j in range(T - 1)))
    return tuple(rows)


def _method2_rows(T):
    eta = T // 2
    rows = []
    for k in range(1, eta + 1):
        rows.append(tuple(Symbol.ALPHA if slot <= k else Symbol.NONE for slot in range(1, eta + 1)))
    for j in range(1, eta + 1):
        rows.append(tuple(Symbol.BETA if slot >= eta - j + 1 else Symbol.NONE for slot in range(1, eta + 1)))
    if T % 2:
        last = [Symbol.NONE] * eta
        last[0] = Symbol.BETA
        last[eta - 1] = Symbol.ALPHA
        rows.append(tuple(last))
    return tuple(rows)


@lru_cache(maxsize=None)
def symbol_matrix(protocol: Protocol, T: int) -> SymbolMatrix:
    if T < 2:
        raise InvalidParameterError(f"at least two traffic types are required, got T={T}")
    if protocol is Protocol.METHOD1 or T <= 3:
        return SymbolMatrix(Protocol.METHOD1, _method1_rows(T))
    return SymbolMatrix(Protocol.METHOD2, _method2_rows(T))
