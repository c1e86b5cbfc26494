from collections import Counter

from .types import SlotOutcome, Symbol


def outcome_from_counts(n_alpha, n_beta):
    total = n_alpha + n_beta
    if total == 0:
        return SlotOutcome.EMPTY
    if total >= 2:
        return SlotOutcome.COLLISION
    return SlotOutcome.ALPHA if n_alpha else SlotOutcome.BETA


def outcome_of_slot(transmissions):
    """Ideal collision channel: what the base station hears in one slot."""
    counts = Counter(transmissions)
    return outcome_from_counts(counts[Symbol.ALPHA], counts[Symbol.BETA])
