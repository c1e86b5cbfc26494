import itertools
import math

from .budget import DEFAULT_BUDGET, Exactness, oracle


def _success(params, j):
    x = params.n - j
    if x <= 0:
        return 0.0
    remaining = params.n_hat - j
    p = 1.0 if remaining <= 1 else 1.0 / remaining
    return x * p * (1.0 - p) ** (x - 1)


@oracle(Exactness.EXACT)
def nested_sum_pm(params, m, budget=DEFAULT_BUDGET):
    """P(M = m) as the literal m-fold sum over the success positions k_1 < ... < k_m <= W_m."""
    budget.check('m', m, budget.max_nested_m)
    budget.check('W', params.W, budget.max_nested_W)
    window = (params.W - m * params.d) // 2
    if window < 0:
        return 0.0
    r = [_success(params, j) for j in range(m + 1)]
    terms = []
    for ks in itertools.combinations(range(1, window + 1), m):
        term, previous = 1.0, 0
        for j, k in enumerate(ks):
            term *= (1.0 - r[j]) ** (k - previous - 1) * r[j]
            previous = k
        terms.append(term * (1.0 - r[m]) ** (window - previous))
    return math.fsum(terms)
