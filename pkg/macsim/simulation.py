import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
import pandas as pd
from scipy import stats

from core.exceptions import InvalidParameterError
from core.randomness import RandomSource

from .frame import CLASSES, FrameConfig, Mode, SimulationState, run_frame

logger = logging.getLogger(__name__)

FRAME_COLUMNS = ['frame', 'class', 'arrivals', 'deliveries', 'successes', 'mean_delay',
                 'energy_T', 'energy_R', 'energy_I', 'queued', 'delay_sum',
                 'free_channels', 'bw1_slots', 'ew_slots', 'cdtw_slots']


def batch_means_ci(values, batches=10, confidence=0.95):
    """Mean and half-width of the t-interval over ``batches`` consecutive batch means."""
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        return np.nan, np.nan
    batches = min(batches, values.size)
    means = np.array([chunk.mean() for chunk in np.array_split(values, batches)])
    if batches < 2:
        return float(means.mean()), np.nan
    half = stats.t.ppf((1 + confidence) / 2, batches - 1) * means.std(ddof=1) / np.sqrt(batches)
    return float(means.mean()), float(half)


def _ratio_ci(numerators, denominators, batches, confidence=0.95):
    """Batch-means interval of sum(num) / sum(den) per batch (batches with den = 0 dropped)."""
    num, den = np.asarray(numerators, float), np.asarray(denominators, float)
    if num.size == 0:
        return np.nan, np.nan
    batches = min(batches, num.size)
    ratios = np.array([n.sum() / d.sum() for n, d in zip(np.array_split(num, batches),
                                                      np.array_split(den, batches)) if d.sum() > 0])
    if ratios.size == 0:
        return np.nan, np.nan
    if ratios.size < 2:
        return float(ratios[0]), np.nan
    half = stats.t.ppf((1 + confidence) / 2, ratios.size - 1) * ratios.std(ddof=1) / np.sqrt(ratios.size)
    return float(num.sum() / den.sum()), float(half)


@dataclass(frozen=True)
class MetricsRecord:
    per_frame: pd.DataFrame
    summary: pd.DataFrame
    warmup: int
    batches: int
    trace: Optional[pd.DataFrame] = None

    def row(self, cls):
        return self.summary.set_index('class').loc[cls]

    def equals(self, other):
        return self.per_frame.equals(other.per_frame) and self.summary.equals(other.summary)


def summarize(per_frame, config: FrameConfig, warmup=0, batches=10):
    kept = per_frame[per_frame['frame'] >= warmup]
    rows = []
    for c, label in enumerate(CLASSES):
        name = label.name.lower()
        frames = kept[kept['class'] == name]
        throughput, throughput_ci = batch_means_ci(frames['deliveries'] / config.nodes_per_class, batches)
        delay, delay_ci = _ratio_ci(frames['delay_sum'], frames['deliveries'], batches)
        energy = frames['energy_T'] + frames['energy_R'] + frames['energy_I']
        rows.append({
            'class': name,
            'arrival_rate': config.arrival_rates[c],
            'throughput': throughput,
            'throughput_ci': throughput_ci,
            'mean_delay': delay,
            'delay_ci': delay_ci,
            'successes': frames['successes'].mean(),
            'energy': energy.mean(),
            'queued_end': int(frames['queued'].iloc[-1]) if len(frames) else 0,
        })
    return pd.DataFrame(rows)


def run_simulation(config: FrameConfig, frames, seed, mode=Mode.PROPOSED, warmup=0, batches=10, estimator=None,
                   trace=False):
    """Simulate ``frames`` frames; the first ``warmup`` are kept in ``per_frame`` but left out of the summary.

    With ``trace`` the EW slots of every frame are kept in ``MetricsRecord.trace``.
    """
    if frames < 1:
        raise InvalidParameterError(f"frames must be >= 1, got {frames}")
    if not 0 <= warmup < frames:
        raise InvalidParameterError(f"warm-up must lie in [0, {frames}), got {warmup}")
    source = RandomSource(seed).child('macsim')
    state = SimulationState.initial(config, source)
    if trace:
        state.trace = []
    logger.info(f"mac simulation: mode={mode.value} frames={frames} seed={seed} "
                f"lambda={config.arrival_rates} weights={config.weights}")
    rows = []
    for _ in range(frames):
        rows.extend(run_frame(state, mode, source, estimator=estimator))
    per_frame = pd.DataFrame(rows, columns=FRAME_COLUMNS)
    summary = summarize(per_frame, config, warmup, batches)
    logger.info(f"mac simulation done: throughput={summary['throughput'].round(4).tolist()}")
    slots = pd.concat(state.trace, ignore_index=True) if state.trace else None
    return MetricsRecord(per_frame, summary, warmup, batches, slots)
