"""Base-station inference for one phase-1 block.

Every hypothesis assigns each type a multiplicity class (0, 1 or 2+ active
nodes in the block). The forward model maps a hypothesis to the outcome of
each slot; decoding keeps the hypotheses that reproduce the observed
outcomes and reads the verdicts and the ambiguity structure off that set.
"""
import enum
import itertools
import logging
from collections import defaultdict
from dataclasses import dataclass
from functools import lru_cache

from core.exceptions import InvalidParameterError, ProtocolViolationError
from core.slots import outcome_from_counts
from core.types import SlotOutcome

from .symbols import symbol_matrix

logger = logging.getLogger(__name__)


class MultiplicityClass(enum.IntEnum):
    ZERO = 0
    ONE = 1
    TWO_PLUS = 2

    @classmethod
    def of(cls, count):
        return cls(min(count, 2))


class Verdict(enum.Enum):
    ACTIVE = 'active'
    INACTIVE = 'inactive'
    AMBIGUOUS = 'ambiguous'


class ConstraintKind(enum.Enum):
    INDEPENDENT = 'independent'
    EXACTLY_ONE_OF = 'exactly_one_of'
    # ambiguous group whose activity patterns do not factor (the all-collision block)
    JOINT = 'joint'


@dataclass(frozen=True)
class Constraint:
    kind: ConstraintKind
    types: tuple

    def __str__(self):
        return f"{self.kind.value}{{{','.join(map(str, self.types))}}}"


@dataclass(frozen=True)
class DecodedBlock:
    outcome: tuple
    verdicts: tuple
    constraints: tuple
    hypotheses: frozenset

    def _types_with(self, verdict):
        return frozenset(b for b, v in enumerate(self.verdicts, start=1) if v is verdict)

    @property
    def active(self):
        return self._types_with(Verdict.ACTIVE)

    @property
    def inactive(self):
        return self._types_with(Verdict.INACTIVE)

    @property
    def ambiguous(self):
        return self._types_with(Verdict.AMBIGUOUS)

    @property
    def resolved(self):
        return not self.ambiguous

    @property
    def all_collision(self):
        return all(o is SlotOutcome.COLLISION for o in self.outcome)

    @property
    def bits(self):
        """Activity bit per type; None where the block is ambiguous."""
        return tuple({Verdict.ACTIVE: 1, Verdict.INACTIVE: 0}.get(v) for v in self.verdicts)


def forward_outcome(matrix, hypothesis):
    """Slot outcomes produced by a multiplicity hypothesis (2+ counts as two transmitters)."""
    outcome = []
    for j in range(matrix.width):
        n_alpha = sum(int(h) for h, a in zip(hypothesis, matrix.alpha_mask[:, j]) if a)
        n_beta = sum(int(h) for h, b in zip(hypothesis, matrix.beta_mask[:, j]) if b)
        outcome.append(outcome_from_counts(n_alpha, n_beta))
    return tuple(outcome)


@lru_cache(maxsize=None)
def _consistency_table(matrix):
    table = defaultdict(list)
    for hypothesis in itertools.product(MultiplicityClass, repeat=matrix.T):
        table[forward_outcome(matrix, hypothesis)].append(hypothesis)
    logger.debug(f"consistency table for {matrix.describe()}: {len(table)} reachable outcomes")
    return {outcome: frozenset(hyps) for outcome, hyps in table.items()}


def reachable_outcomes(matrix):
    order = list(SlotOutcome)
    return sorted(_consistency_table(matrix), key=lambda o: [order.index(x) for x in o])


def _project(patterns, positions):
    return frozenset(tuple(p[k] for k in positions) for p in patterns)


def _factor(patterns, positions):
    """Finest split of ``positions`` such that the pattern set is a product of its projections.

    The smallest group holding the first position that splits off is itself
    indecomposable, so only the remainder needs further splitting.
    """
    positions = tuple(positions)
    if len(positions) <= 1:
        return [positions]
    projected = _project(patterns, positions)
    head, tail = positions[0], positions[1:]
    for size in range(len(tail)):
        for extra in itertools.combinations(tail, size):
            group = (head,) + extra
            rest = tuple(p for p in positions if p not in group)
            if len(_project(patterns, group)) * len(_project(patterns, rest)) == len(projected):
                return [group] + _factor(patterns, rest)
    return [positions]


def _classify(group, hypotheses):
    if len(group) == 1:
        return Constraint(ConstraintKind.INDEPENDENT, (group[0] + 1,))
    one_hot = all(sum(1 for k in group if h[k] > 0) == 1 for h in hypotheses)
    single_node = all(h[k] <= MultiplicityClass.ONE for h in hypotheses for k in group)
    kind = ConstraintKind.EXACTLY_ONE_OF if one_hot and single_node else ConstraintKind.JOINT
    return Constraint(kind, tuple(k + 1 for k in group))


@lru_cache(maxsize=None)
def _decode(matrix, outcome):
    if len(outcome) != matrix.width:
        raise InvalidParameterError(f"expected {matrix.width} slot outcomes, got {len(outcome)}")
    hypotheses = _consistency_table(matrix).get(outcome)
    if not hypotheses:
        raise ProtocolViolationError(
            f"outcome {''.join(o.value for o in outcome)} cannot occur under {matrix.describe()}")
    verdicts = []
    for b in range(matrix.T):
        seen = {h[b] for h in hypotheses}
        if MultiplicityClass.ZERO not in seen:
            verdicts.append(Verdict.ACTIVE)
        elif seen == {MultiplicityClass.ZERO}:
            verdicts.append(Verdict.INACTIVE)
        else:
            verdicts.append(Verdict.AMBIGUOUS)
    ambiguous = [b for b, v in enumerate(verdicts) if v is Verdict.AMBIGUOUS]
    patterns = frozenset(tuple(int(h[b] > 0) for b in range(matrix.T)) for h in hypotheses)
    constraints = tuple(_classify(group, hypotheses) for group in _factor(patterns, ambiguous)) \
        if ambiguous else ()
    return DecodedBlock(outcome, tuple(verdicts), constraints, hypotheses)


def decode_block(matrix, outcome):
    return _decode(matrix, tuple(outcome))


@lru_cache(maxsize=None)
def ambiguity_family(protocol, T):
    """S_NS(T): every set of types left ambiguous by some reachable phase-1 outcome."""
    matrix = symbol_matrix(protocol, T)
    return frozenset(decode_block(matrix, o).ambiguous for o in reachable_outcomes(matrix))


def bp_bits(protocol, T):
    """b(T) = ceil(log2 |S_NS(T)|)."""
    return (len(ambiguity_family(protocol, T)) - 1).bit_length()


def bp_length(protocol, T, t, slot_bits):
    """Broadcast-packet slots after phase 1: ceil(b(T) * t / S_W)."""
    if slot_bits < 1:
        raise InvalidParameterError(f"S_W must be >= 1, got {slot_bits}")
    return -(-bp_bits(protocol, T) * t // slot_bits)
