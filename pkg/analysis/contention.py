"""Successful contentions and energy spent in the CDTW of one channel.

The contention process is a chain over attempts (one UL slot plus one DL
slot each). With j successes so far, n - j nodes contend with probability
p_j = min(1 / (n_hat - j), 1) and the attempt succeeds with r_j. After m
successes only W_m = floor((W - m d) / 2) attempts fit in the window, so
P(M = m) is the probability of exactly m successes in the first W_m
attempts. Every evaluator below is a forward or backward pass over that
chain rather than the m-fold nested sum.
"""
import logging
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from core.exceptions import InvalidParameterError

logger = logging.getLogger(__name__)

POSTERIORS = ('exact', 'verbatim')

# slack on [0, 1] before the verbatim posterior counts as divergent
POSTERIOR_TOLERANCE = 1e-9


@dataclass(frozen=True)
class MacAnalysisParams:
    n: int
    n_hat: float
    W: int
    d: int = 1
    gamma_I: float = 0.0
    gamma_T: float = 0.0
    gamma_R: float = 0.0

    def __post_init__(self):
        if self.W < 0:
            raise InvalidParameterError(f"W must be >= 0, got {self.W}")
        if self.d < 1:
            raise InvalidParameterError(f"d must be >= 1, got {self.d}")
        if self.n < 0:
            raise InvalidParameterError(f"n must be >= 0, got {self.n}")
        if self.n >= 1 and self.n_hat < 1:
            raise InvalidParameterError(f"n_hat must be >= 1 when nodes are active, got {self.n_hat}")
        if min(self.gamma_I, self.gamma_T, self.gamma_R) < 0:
            raise InvalidParameterError("energy per slot must be >= 0")

    @property
    def m_max(self):
        return self.W // (2 + self.d)

    def attempts(self, m):
        """W_m: UL attempts that fit once m data reservations are made."""
        return max((self.W - m * self.d) // 2, 0)


class EnergyExpectation(NamedTuple):
    ul: float
    dl: float
    dt: float

    @property
    def total(self):
        return self.ul + self.dl + self.dt


def contention_prob(estimate, j=0):
    """min(1 / (estimate - j), 1); the estimate may be fractional (per-channel share)."""
    remaining = estimate - j
    if remaining <= 1:
        return 1.0
    return 1.0 / remaining


def success_prob(x, p):
    if x < 0:
        raise InvalidParameterError(f"contender count must be >= 0, got {x}")
    if not 0.0 <= p <= 1.0:
        raise InvalidParameterError(f"contention probability must lie in [0, 1], got {p}")
    if x == 0:
        return 0.0
    return x * p * (1.0 - p) ** (x - 1)


def _chain(params):
    """Contender counts, contention and success probabilities indexed by successes so far."""
    size = max(params.n, params.m_max) + 2
    j = np.arange(size)
    contenders = np.maximum(params.n - j, 0)
    p = np.array([contention_prob(params.n_hat, k) for k in j])
    r = np.array([success_prob(int(x), float(pk)) for x, pk in zip(contenders, p)])
    return contenders, p, r


def _forward(r, steps, width):
    """g[k, j] = P(j successes in the first k attempts)."""
    g = np.zeros((steps + 1, width))
    g[0, 0] = 1.0
    for k in range(1, steps + 1):
        g[k] = g[k - 1] * (1.0 - r[:width])
        g[k, 1:] += g[k - 1, :-1] * r[:width - 1]
    return g


def _backward(r, m, steps):
    """b[k, j] = P(exactly m successes after ``steps`` attempts | j successes after k)."""
    b = np.zeros((steps + 1, m + 2))
    b[steps, m] = 1.0
    rj = r[:m + 1]
    for k in range(steps, 0, -1):
        b[k - 1, :m + 1] = rj * b[k, 1:m + 2] + (1.0 - rj) * b[k, :m + 1]
    return b


def pm_distribution(params: MacAnalysisParams):
    """P(M = m) for m = 0 .. floor(W / (2 + d))."""
    _, _, r = _chain(params)
    width = params.m_max + 1
    g = _forward(r, params.attempts(0), width)
    return np.array([g[params.attempts(m), m] for m in range(width)])


def expected_M(params: MacAnalysisParams):
    pm = pm_distribution(params)
    return float(np.arange(len(pm)) @ pm)


def normalization_deficit(params: MacAnalysisParams):
    """1 - sum_m P(M = m): mass of the frames whose last success overruns its window."""
    return float(1.0 - pm_distribution(params).sum())


def _conditional_means(params, m, g, b, chain, posterior, pm):
    """Per attempt i = 1..W_m: E[L_i; M = m] and E[N_i; M = m]."""
    contenders, p, r = chain
    steps = params.attempts(m)
    x, rj = contenders[:m + 1].astype(float), r[:m + 1]
    mean_tx = x * p[:m + 1]
    # E[L_i 1{M=m} | N_i = n - j] for every attempt at once
    numer = rj * b[1:, 1:m + 2] + (mean_tx - rj) * b[1:, :m + 1]
    reach = b[:-1, :m + 1]
    if posterior == 'exact':
        occupancy = g[:steps, :m + 1]
        return (occupancy * numer).sum(axis=1), (occupancy * reach * x).sum(axis=1)

    # posterior over N_i given M = m from the success recursion with marginal r_j
    cond_tx = np.divide(numer, reach, out=np.zeros_like(numer), where=reach > 0)
    hit = b[1:, 1:m + 2] * rj / pm
    post = np.zeros(m + 2)
    post[0] = 1.0
    mean_l, mean_n = np.zeros(steps), np.zeros(steps)
    for i in range(steps):
        mean_l[i] = post[:m + 1] @ cond_tx[i] * pm
        mean_n[i] = post[:m + 1] @ x * pm
        moved = post[:m + 1] * hit[i]
        post[:m + 1] -= moved
        post[1:m + 2] += moved
        if not np.all((post >= -POSTERIOR_TOLERANCE) & (post <= 1.0 + POSTERIOR_TOLERANCE)):
            return None
    return mean_l, mean_n


def expected_energy(params: MacAnalysisParams, posterior='exact'):
    """(E_UL, E_DL, E_DT) for one CDTW; every active node of the channel is charged in UL and DL slots.

    ``posterior='exact'`` conditions the contender count on M = m through the
    full forward-backward chain. ``'verbatim'`` propagates that count with
    the Bayes step that uses the marginal success probability r_j; that
    step is not a probability update, and once its mass leaves [0, 1] the
    result carries NaN for E_UL and E_DL (E_DT does not depend on it).
    """
    if posterior not in POSTERIORS:
        raise InvalidParameterError(f"posterior must be one of {POSTERIORS}, got {posterior!r}")
    chain = _chain(params)
    r = chain[2]
    g = _forward(r, params.attempts(0), params.m_max + 1)
    pms = np.array([g[params.attempts(m), m] for m in range(params.m_max + 1)])

    ul = dl = 0.0
    for m, pm in enumerate(pms):
        if pm <= 0.0:
            continue
        steps = params.attempts(m)
        if steps == 0:
            continue
        b = _backward(r, m, steps)
        means = _conditional_means(params, m, g, b, chain, posterior, pm)
        if means is None:
            logger.warning(f"verbatim posterior left [0, 1] at m={m} (n={params.n}, n_hat={params.n_hat}, "
                           f"W={params.W}, d={params.d}); E_UL and E_DL are undefined")
            ul = dl = float('nan')
            break
        mean_l, mean_n = means
        idle = params.n * pm * steps
        ul += params.gamma_T * mean_l.sum() + params.gamma_I * (idle - mean_l.sum())
        dl += params.gamma_R * mean_n.sum() + params.gamma_I * (idle - mean_n.sum())

    e_m = float(np.arange(len(pms)) @ pms)
    dt = params.d * e_m * (params.gamma_T + max(params.n - 1, 0) * params.gamma_I)
    logger.debug(f"energy n={params.n} n_hat={params.n_hat} W={params.W} d={params.d} "
                 f"posterior={posterior}: ul={ul:.4f} dl={dl:.4f} dt={dt:.4f}")
    return EnergyExpectation(float(ul), float(dl), float(dt))
