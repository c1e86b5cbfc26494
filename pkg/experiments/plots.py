"""PNG figures from the CSV files the experiment commands write."""
import logging
from pathlib import Path

import matplotlib

matplotlib.use('Agg')
import matplotlib.pyplot as plt  # noqa: E402
import pandas as pd  # noqa: E402

from core.exceptions import InvalidParameterError  # noqa: E402

logger = logging.getLogger(__name__)

COLORS = {
    'method1': 'steelblue', 'method2': 'coral', 'baseline': 'gray',
    'emergency': 'firebrick', 'periodic': 'darkorange', 'normal': 'seagreen',
}


def read_csv(path):
    return pd.read_csv(path, comment='#')


def detect_kind(frame):
    columns = set(frame.columns)
    if {'protocol', 'slots_mean'} <= columns:
        return 'estimation-sweep'
    if {'q1_threshold', 'q2_threshold'} <= columns:
        return 'threshold-sweep'
    if {'mode', 'throughput', 'delay'} <= columns:
        return 'mac-sim'
    raise InvalidParameterError(f"no figure is defined for a table with columns {sorted(columns)}")


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    logger.info(f"wrote {path}")
    return path


def plot_estimation_sweep(frame, out_dir, stem):
    fig, ax = plt.subplots(figsize=(10, 6))
    for protocol, group in frame.groupby('protocol', sort=False):
        color = COLORS.get(protocol)
        ax.errorbar(group['value'], group['slots_mean'], yerr=group['slots_ci95'], color=color,
                    marker='o', capsize=3, label=f'{protocol} (simulated)')
        if group['slots_analytic'].notna().any():
            ax.plot(group['value'], group['slots_analytic'], color=color, linestyle='--',
                    label=f'{protocol} (analytic)')
    ax.set_xlabel(f"activity probability {frame['variable'].iloc[0]}", fontsize=12)
    ax.set_ylabel('slots per estimation', fontsize=12)
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=10)
    return [_save(fig, out_dir / f'{stem}.png')]


def plot_threshold_sweep(frame, out_dir, stem):
    fig, ax = plt.subplots(figsize=(10, 6))
    labels = [f'T={row.T} D={row.D}' for row in frame.itertuples(index=False)]
    positions = range(len(frame))
    width = 0.4
    ax.bar([p - width / 2 for p in positions], frame['q1_threshold'], width, color=COLORS['method1'],
           edgecolor='black', alpha=0.7, label='Method I')
    ax.bar([p + width / 2 for p in positions], frame['q2_threshold'], width, color=COLORS['method2'],
           edgecolor='black', alpha=0.7, label='Method II')
    ax.scatter([p - width / 2 for p in positions], frame['q1_threshold_analytic'], marker='x', color='black',
               zorder=3, label='Method I (analytic)')
    ax.set_xticks(list(positions))
    ax.set_xticklabels(labels)
    ax.set_ylabel('activity probability where the baseline becomes cheaper', fontsize=12)
    ax.set_ylim(0, 1)
    ax.grid(True, alpha=0.3, axis='y')
    ax.legend(fontsize=10)
    return [_save(fig, out_dir / f'{stem}.png')]


def plot_mac_sim(frame, out_dir, stem):
    paths = []
    for metric, ylabel in (('throughput', 'packets per node per frame'), ('delay', 'frames')):
        fig, ax = plt.subplots(figsize=(10, 6))
        for (mode, cls), group in frame.groupby(['mode', 'class'], sort=False):
            ax.errorbar(group['lambda'], group[metric], yerr=group[f'{metric}_ci95'], color=COLORS.get(cls),
                        linestyle='-' if mode == 'proposed' else ':', marker='o', capsize=3,
                        label=f'{cls} ({mode})')
        ax.set_xlabel('arrival rate (packets per node per frame)', fontsize=12)
        ax.set_ylabel(ylabel, fontsize=12)
        ax.grid(True, alpha=0.3)
        ax.legend(fontsize=10)
        paths.append(_save(fig, out_dir / f'{stem}_{metric}.png'))
    return paths


PLOTTERS = {
    'estimation-sweep': plot_estimation_sweep,
    'threshold-sweep': plot_threshold_sweep,
    'mac-sim': plot_mac_sim,
}


def render_plots(csv_path, out_dir=None):
    """Draw the figures for one result CSV; returns the PNG paths."""
    csv_path = Path(csv_path)
    out_dir = Path(out_dir) if out_dir else csv_path.parent
    out_dir.mkdir(parents=True, exist_ok=True)
    frame = read_csv(csv_path)
    kind = detect_kind(frame)
    stem = csv_path.name.split('.')[0]
    logger.info(f"rendering {kind} figures from {csv_path}")
    return PLOTTERS[kind](frame, out_dir, stem)
