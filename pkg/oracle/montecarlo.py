"""Direct Monte Carlo of the processes the closed forms describe.

Nothing here goes through the estimator or MAC code: bins come straight
from multinomial draws and the contention window is the bare success
chain with constant d-slot reservations.
"""
import logging

import numpy as np
import pandas as pd

from core.exceptions import InvalidParameterError

from .budget import DEFAULT_BUDGET, Exactness, oracle

logger = logging.getLogger(__name__)


def _bin_probs(t):
    return np.array([2.0 ** -(t - 1) if i == t - 1 else 2.0 ** -(i + 1) for i in range(t)])


@oracle(Exactness.STATISTICAL)
def mc_phase_counts(n, t, runs, source, budget=DEFAULT_BUDGET):
    """|C_I| (column K) and |C_II| (column R) of Method I for ``runs`` independent hash draws."""
    if runs < 1:
        raise InvalidParameterError(f"runs must be >= 1, got {runs}")
    if len(n) < 2:
        raise InvalidParameterError("Method I needs at least two types")
    budget.check('runs', runs, budget.max_samples)
    rng = source.child('oracle', 'phase-counts').generator()
    p = _bin_probs(t)
    counts = np.stack([rng.multinomial(int(nb), p, size=runs) for nb in n], axis=1)
    type1 = counts[:, 0, :]
    all_collision = np.all(type1[:, None, :] + counts[:, 1:, :] >= 2, axis=1)
    return pd.DataFrame({'K': all_collision.sum(axis=1), 'R': (type1 >= 2).sum(axis=1)})


@oracle(Exactness.STATISTICAL)
def mc_frame_process(params, samples, source, budget=DEFAULT_BUDGET):
    """Per-frame M and UL/DL/DT energy of the single-channel contention window.

    A frame whose m-th success lands after attempt W_m overflows the window;
    it is tallied as zero in every column and flagged in ``overflow``.
    """
    if samples < 1:
        raise InvalidParameterError(f"samples must be >= 1, got {samples}")
    budget.check('samples', samples, budget.max_samples)
    rng = source.child('oracle', 'frame-process').generator()
    n, d = params.n, params.d
    g_i, g_t, g_r = params.gamma_I, params.gamma_T, params.gamma_R
    windows = np.array([max((params.W - m * d) // 2, 0) for m in range(n + 2)])
    p = np.array([1.0 if params.n_hat - j <= 1 else 1.0 / (params.n_hat - j) for j in range(n + 1)])

    wins = np.zeros(samples, dtype=np.int64)
    ul = np.zeros(samples)
    dl = np.zeros(samples)
    overflow = np.zeros(samples, dtype=bool)
    alive = np.full(samples, windows[0] >= 1)
    for k in range(1, windows[0] + 1):
        idx = np.flatnonzero(alive)
        if idx.size == 0:
            break
        contenders = n - wins[idx]
        sent = rng.binomial(contenders, p[wins[idx]])
        ul[idx] += sent * g_t + (n - sent) * g_i
        dl[idx] += contenders * g_r + (n - contenders) * g_i
        winners = idx[sent == 1]
        wins[winners] += 1
        overflow[winners] = k > windows[wins[winners]]
        alive[idx] = (k + 1 <= windows[wins[idx]]) & ~overflow[idx]

    wins[overflow] = 0
    ul[overflow] = 0.0
    dl[overflow] = 0.0
    dt = d * wins * (g_t + max(n - 1, 0) * g_i)
    if overflow.any():
        logger.debug(f"frame process n={n} W={params.W} d={d}: overflow rate {overflow.mean():.4g}")
    return pd.DataFrame({'M': wins, 'ul': ul, 'dl': dl, 'dt': dt, 'overflow': overflow})
