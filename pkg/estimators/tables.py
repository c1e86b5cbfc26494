"""Reference inference tables of the block decoder, used by the ``validate`` command."""
import itertools

from core.types import SlotOutcome

from .decoder import ConstraintKind, MultiplicityClass, decode_block, reachable_outcomes
from .symbols import Protocol, symbol_matrix

ONE_OF = ConstraintKind.EXACTLY_ONE_OF
SINGLE = ConstraintKind.INDEPENDENT

# Method I, T = 3: outcome -> activity bits (CC stays ambiguous)
METHOD1_T3_BITS = {
    'EE': (0, 0, 0), 'EC': (0, 0, 1), 'Eβ': (0, 0, 1),
    'CE': (0, 1, 0), 'Cα': (1, 1, 0), 'Cβ': (0, 1, 1),
    'αC': (1, 0, 1), 'αα': (1, 0, 0), 'βE': (0, 1, 0),
    'βC': (0, 1, 1), 'ββ': (0, 1, 1),
}

# Method II: outcome -> (active, inactive, constraints)
METHOD2_VERDICTS = {
    4: {
        'CE': ({1}, {2, 3, 4}, []),
        'Cα': ({1, 2}, {3, 4}, []),
        'Cβ': ({1}, {2}, [(ONE_OF, {3, 4})]),
        'EC': ({3}, {1, 2, 4}, []),
        'αC': ({3}, {4}, [(ONE_OF, {1, 2})]),
        'βC': ({3, 4}, {1, 2}, []),
    },
    5: {
        'CE': ({1}, {2, 3, 4, 5}, []),
        'Cα': ({1}, {3, 4}, [(ONE_OF, {2, 5})]),
        'Cβ': ({1}, {2, 5}, [(ONE_OF, {3, 4})]),
        'EC': ({3}, {1, 2, 4, 5}, []),
        'αC': ({3}, {4, 5}, [(ONE_OF, {1, 2})]),
        'βC': ({3}, {1, 2}, [(ONE_OF, {4, 5})]),
    },
    6: {
        'Cββ': ({1}, {2, 3, 4}, [(ONE_OF, {5, 6})]),
        'ααC': ({4}, {1, 5, 6}, [(ONE_OF, {2, 3})]),
        'CCE': ({2}, {3, 4, 5, 6}, [(SINGLE, {1})]),
        'CCα': ({2, 3}, {4, 5, 6}, [(SINGLE, {1})]),
        'CCβ': ({2}, {3}, [(SINGLE, {1}), (ONE_OF, {4, 5, 6})]),
        'ECC': ({5}, {1, 2, 3, 6}, [(SINGLE, {4})]),
        'αCC': ({5}, {6}, [(SINGLE, {4}), (ONE_OF, {1, 2, 3})]),
        'βCC': ({5, 6}, {1, 2, 3}, [(SINGLE, {4})]),
        'CαC': ({1, 4}, {5, 6}, [(ONE_OF, {2, 3})]),
        'CβC': ({1, 4}, {2, 3}, [(ONE_OF, {5, 6})]),
    },
}


def method2_t4_consistency_set():
    """Type-multiplicity profiles consistent with CC for Method II at T = 4."""
    star = set(MultiplicityClass)
    at_least_one = {MultiplicityClass.ONE, MultiplicityClass.TWO_PLUS}
    two_plus = {MultiplicityClass.TWO_PLUS}
    one, zero = {MultiplicityClass.ONE}, {MultiplicityClass.ZERO}
    rows = [
        (star, two_plus, star, star),
        (star, star, star, two_plus),
        (star, one, star, one),
        (at_least_one, one, at_least_one, zero),
        (at_least_one, zero, at_least_one, one),
        (two_plus, zero, two_plus, zero),
    ]
    profiles = set()
    for row in rows:
        profiles.update(itertools.product(*row))
    return profiles


def _outcome(text):
    return tuple(SlotOutcome.parse(ch) for ch in text)


def _text(outcome):
    return ''.join(o.value for o in outcome)


def table_mismatches():
    """Every disagreement between the decoder and the reference tables, as readable strings."""
    problems = []
    method1 = symbol_matrix(Protocol.METHOD1, 3)
    for text, bits in METHOD1_T3_BITS.items():
        got = decode_block(method1, _outcome(text)).bits
        if got != bits:
            problems.append(f"method1 T=3 {text}: bits {got}, expected {bits}")
    reachable = {_text(o) for o in reachable_outcomes(method1)}
    if reachable != set(METHOD1_T3_BITS) | {'CC'}:
        problems.append(f"method1 T=3 reachable outcomes {sorted(reachable)}")

    for T, rows in METHOD2_VERDICTS.items():
        matrix = symbol_matrix(Protocol.METHOD2, T)
        for text, (active, inactive, constraints) in rows.items():
            decoded = decode_block(matrix, _outcome(text))
            got = {(c.kind, frozenset(c.types)) for c in decoded.constraints}
            want = {(kind, frozenset(types)) for kind, types in constraints}
            if decoded.active != frozenset(active) or decoded.inactive != frozenset(inactive) or got != want:
                problems.append(f"method2 T={T} {text}: decoded {sorted(decoded.active)} active, "
                                f"{sorted(decoded.inactive)} inactive")
        ambiguous = {_text(o) for o in reachable_outcomes(matrix) if not decode_block(matrix, o).resolved}
        if ambiguous - set(rows) - {'C' * matrix.width}:
            problems.append(f"method2 T={T}: unlisted ambiguous outcomes {sorted(ambiguous - set(rows))}")

    hypotheses = set(decode_block(symbol_matrix(Protocol.METHOD2, 4), _outcome('CC')).hypotheses)
    if hypotheses != method2_t4_consistency_set():
        problems.append("method2 T=4 CC: consistency set differs")
    return problems
