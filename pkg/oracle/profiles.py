import itertools

from core.types import SlotOutcome, Symbol

from .budget import DEFAULT_BUDGET, Exactness, oracle

# multiplicity classes 0, 1 and 2+ (two transmitters stand for "two or more")
CLASSES = (0, 1, 2)


def _heard(row_symbols, profile):
    alpha = sum(c for c, s in zip(profile, row_symbols) if s is Symbol.ALPHA)
    beta = sum(c for c, s in zip(profile, row_symbols) if s is Symbol.BETA)
    if alpha + beta == 0:
        return SlotOutcome.EMPTY
    if alpha + beta > 1:
        return SlotOutcome.COLLISION
    return SlotOutcome.ALPHA if alpha else SlotOutcome.BETA


@oracle(Exactness.EXACT)
def enumerate_consistent_profiles(matrix, outcome, budget=DEFAULT_BUDGET):
    """Every 0/1/2+ profile whose transmissions reproduce ``outcome`` slot by slot."""
    budget.check('3^T', 3 ** matrix.T, budget.max_profiles)
    outcome = tuple(outcome)
    columns = list(zip(*matrix.rows))
    found = set()
    for profile in itertools.product(CLASSES, repeat=matrix.T):
        if len(columns) == len(outcome) and all(
                _heard(column, profile) is heard for column, heard in zip(columns, outcome)):
            found.add(profile)
    return found
