"""Exact E[K_T] and E[R_T] by enumerating every hash assignment of the active nodes."""
import itertools
from fractions import Fraction

from .budget import DEFAULT_BUDGET, Exactness, oracle


def _bin_probability(i, t):
    return Fraction(1, 2 ** (t - 1)) if i == t - 1 else Fraction(1, 2 ** (i + 1))


def _enumerate(params, budget):
    nodes = sum(params.n)
    budget.check('active nodes', nodes, budget.max_bruteforce_nodes)
    budget.check('t_T', params.t, budget.max_bruteforce_bins)
    owners = [b for b, count in enumerate(params.n) for _ in range(count)]
    probs = [_bin_probability(i, params.t) for i in range(params.t)]
    for bins in itertools.product(range(params.t), repeat=nodes):
        weight = Fraction(1)
        counts = [[0] * params.t for _ in params.n]
        for owner, h in zip(owners, bins):
            weight *= probs[h]
            counts[owner][h] += 1
        yield weight, counts


def _all_collision(counts, i):
    # Type 1 sends alpha in every phase-1 slot, Type j+1 sends beta in slot j
    c1 = counts[0][i]
    return all(c1 + other[i] >= 2 for other in counts[1:])


@oracle(Exactness.EXACT)
def exact_expected_K_bruteforce(params, budget=DEFAULT_BUDGET):
    return sum((weight * sum(_all_collision(counts, i) for i in range(params.t))
                for weight, counts in _enumerate(params, budget)), Fraction(0))


@oracle(Exactness.EXACT)
def exact_expected_R_bruteforce(params, budget=DEFAULT_BUDGET):
    return sum((weight * sum(counts[0][i] >= 2 for i in range(params.t))
                for weight, counts in _enumerate(params, budget)), Fraction(0))
