"""Expected slot counts of Method I and their closed-form upper bounds.

Block i of phase 1 ends in the all-collision class when Type 1 has two or
more nodes in it (Q1), exactly one node with every other type present (Q2),
or no node with every other type holding two or more (Q3). K is the number
of such blocks, R the number with Q1.
"""
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from core.exceptions import InvalidParameterError


def _ceil_log2(y):
    return int(y - 1).bit_length()


@dataclass(frozen=True)
class EstimationParams:
    T: int
    n: Sequence[int]
    t: int
    slot_bits: int = 5

    def __post_init__(self):
        object.__setattr__(self, 'n', tuple(int(x) for x in self.n))
        if self.T < 2:
            raise InvalidParameterError(f"T must be >= 2, got {self.T}")
        if len(self.n) != self.T:
            raise InvalidParameterError(f"expected {self.T} active counts, got {len(self.n)}")
        if any(x < 0 for x in self.n):
            raise InvalidParameterError(f"active counts must be >= 0, got {self.n}")
        if self.t < 1:
            raise InvalidParameterError(f"t_T must be >= 1, got {self.t}")
        if self.slot_bits < 1:
            raise InvalidParameterError(f"S_W must be >= 1, got {self.slot_bits}")


@dataclass(frozen=True)
class BoundParams:
    """n_r, l = ceil(log2 n_r) (at least 1) and s = t_T - l."""

    n_r: int
    l: int
    s: int

    @classmethod
    def from_params(cls, params: EstimationParams):
        n_r = max(params.n)
        if n_r == 0:
            return cls(0, 0, params.t)
        # l = 0 would make the leading term l - 1 negative
        l = max(_ceil_log2(n_r), 1)
        s = params.t - l
        if s < 0:
            raise InvalidParameterError(f"bounds need t_T >= l_(n_r) = {l}, got t_T = {params.t}")
        return cls(n_r, l, s)


def hash_prob(i, t):
    if t < 1 or not 0 <= i <= t - 1:
        raise InvalidParameterError(f"hash value {i} outside 0..{t - 1}")
    if i == t - 1:
        return 2.0 ** -(t - 1)
    return 2.0 ** -(i + 1)


def hash_probs(t):
    return np.array([hash_prob(i, t) for i in range(t)])


def _empty_and_single(count, prob):
    """P(no node) and P(exactly one node) in a bin when each of ``count`` nodes lands there w.p. ``prob``."""
    empty = (1.0 - prob) ** count
    single = count * prob * (1.0 - prob) ** max(count - 1, 0)
    return empty, single


def _q_terms(counts, probs):
    """Q1, Q2, Q3 per bin; ``probs[b]`` is the per-node bin probability vector of type b."""
    u1, v1 = _empty_and_single(counts[0], probs[0])
    present = np.ones_like(u1)
    crowded = np.ones_like(u1)
    for count, prob in zip(counts[1:], probs[1:]):
        u, v = _empty_and_single(count, prob)
        present *= 1.0 - u
        crowded *= 1.0 - u - v
    return 1.0 - u1 - v1, v1 * present, u1 * crowded


def _k_and_r(counts, probs):
    q1, q2, q3 = _q_terms(counts, probs)
    return float(np.sum(q1 + q2 + q3)), float(np.sum(q1))


def expected_K(params: EstimationParams):
    p = hash_probs(params.t)
    return _k_and_r(params.n, [p] * params.T)[0]


def expected_R(params: EstimationParams):
    p = hash_probs(params.t)
    return _k_and_r(params.n, [p] * params.T)[1]


def _total(T, t, slot_bits, k, r):
    # the ceiling is taken of the expectation
    return (T - 1) * t + math.ceil(t / slot_bits) + k + math.ceil(k / slot_bits) + (T - 1) * r


def expected_total_method1(params: EstimationParams):
    return _total(params.T, params.t, params.slot_bits, expected_K(params), expected_R(params))


def expected_total_method1_bernoulli(T, D, q, t, slot_bits=5):
    """Method I total when each of the D nodes of type b is active w.p. q[b].

    Thinning keeps the per-bin counts binomial: Binomial(D, q_b p_i).
    """
    q = np.broadcast_to(np.asarray(q, dtype=float), (T,))
    if np.any((q < 0) | (q > 1)):
        raise InvalidParameterError(f"activity probabilities must lie in [0, 1], got {q.tolist()}")
    if D < 0:
        raise InvalidParameterError(f"D must be >= 0, got {D}")
    p = hash_probs(t)
    k, r = _k_and_r([D] * T, [qb * p for qb in q])
    return _total(T, t, slot_bits, k, r)


def bound_R(params: EstimationParams, bound: BoundParams = None):
    bound = bound or BoundParams.from_params(params)
    if bound.n_r == 0:
        return 0.0
    n1 = params.n[0]
    return bound.l - 1 + (2.0 / 3.0) * (n1 / bound.n_r) ** 2 * (1.0 + 2.0 / 4.0 ** bound.s)


def bound_K(params: EstimationParams, bound: BoundParams = None):
    bound = bound or BoundParams.from_params(params)
    if bound.n_r == 0:
        return 0.0
    T, s, n_r = params.T, bound.s, float(bound.n_r)
    rest = math.prod(params.n[1:]) / n_r ** (T - 1)
    all_types = math.prod(params.n) / n_r ** T
    crowded = rest ** 2 / (2.0 ** (T - 1) * (1.0 - 4.0 ** -(T - 1))) \
        * (1.0 - 2.0 / 4.0 ** ((T - 1) * s) * (1.0 - 4.0 ** (T - 1) / 2.0))
    spread = all_types / (1.0 - 2.0 ** -T) * (1.0 - 2.0 / 2.0 ** (T * s) * (1.0 - 2.0 ** (T - 1)))
    return bound_R(params, bound) + crowded + spread


def bound_total_method1(params: EstimationParams):
    bound = BoundParams.from_params(params)
    return _total(params.T, params.t, params.slot_bits, bound_K(params, bound), bound_R(params, bound))
