"""Experiment runners.

Every runner is a pure function of a resolved config (see
``serializers.load_config``) and returns pandas tables. Sweep points are
independent tasks keyed by their index, so ``--jobs`` only changes how
fast the rows arrive, never their values or order.
"""
import logging
import math
from concurrent.futures import ProcessPoolExecutor

import numpy as np
import pandas as pd
from scipy import stats

from analysis.contention import (
    MacAnalysisParams, expected_energy, expected_M, normalization_deficit, pm_distribution,
)
from analysis.estimation import (
    EstimationParams, bound_K, bound_R, bound_total_method1, expected_K, expected_R,
    expected_total_method1, expected_total_method1_bernoulli,
)
from core.hashing import bitmap_length
from core.randomness import RandomSource
from core.types import HashingMode, NodePopulation
from estimators.assignment import assign_hashes
from estimators.protocols import baseline_from_hashes, method1_from_hashes, method2_from_hashes
from estimators.symbols import Protocol
from macsim.cdtw import CdtwPolicy, Contender, EnergyModel, run_cdtw_channel
from macsim.channels import ChannelModel
from macsim.frame import FrameConfig, Mode
from macsim.simulation import run_simulation
from oracle.budget import DEFAULT_BUDGET
from oracle.bruteforce import exact_expected_K_bruteforce, exact_expected_R_bruteforce
from oracle.montecarlo import mc_frame_process, mc_phase_counts
from oracle.sums import nested_sum_pm

logger = logging.getLogger(__name__)

PROTOCOLS = {
    'method1': method1_from_hashes,
    'method2': method2_from_hashes,
    'baseline': lambda assignment, slot_bits: baseline_from_hashes(assignment),
}

ANALYSIS_COLUMNS = ['section', 'T', 'n', 't', 's', 'q', 'D', 'W', 'd', 'quantity', 'analytic',
                    'reference', 'provenance', 'sigma', 'delta', 'tolerance', 'status']


def parallel_map(func, items, jobs=1):
    """``map`` over independent tasks, in a process pool when ``jobs`` > 1; results keep task order."""
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [func(item) for item in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(func, items))


def mean_ci(values, confidence=0.95):
    """Sample mean and the half-width of its t-interval (0 for a single value)."""
    values = np.asarray(values, dtype=float)
    mean = float(values.mean())
    if values.size < 2:
        return mean, 0.0
    return mean, float(stats.t.ppf((1 + confidence) / 2, values.size - 1) * stats.sem(values))


def derived_seed(seed, *labels):
    """An integer seed for a sub-experiment, independent of every other label path."""
    return int(RandomSource(seed).child(*labels).seed_sequence().generate_state(1, np.uint64)[0])


def sweep_values(sweep):
    count = int(math.floor((sweep['stop'] - sweep['start']) / sweep['step'] + 1e-9)) + 1
    return [round(sweep['start'] + k * sweep['step'], 10) for k in range(count)]


def _activity(estimation, value):
    variable = estimation['sweep']['variable']
    if variable == 'q':
        return [value] * estimation['T']
    q = list(estimation['q'])
    q[int(variable[1:]) - 1] = value
    return q


def simulate_slots(T, D, n_all, q, protocols, reps, source, slot_bits=5, mode=HashingMode.REDRAW):
    """Slots used by each protocol over ``reps`` Bernoulli populations sharing hash assignments.

    Returns ({protocol: [slots per rep]}, number of reps where the estimates disagreed).
    """
    t = bitmap_length(n_all)
    slots = {protocol: [] for protocol in protocols}
    disagreements = 0
    for rep in range(reps):
        population = NodePopulation.bernoulli([D] * T, q, source.child('population', rep), n_all=n_all)
        assignment = assign_hashes(population, source, mode, frame=rep, t=t)
        reports = [PROTOCOLS[protocol](assignment, slot_bits) for protocol in protocols]
        if len({report.rho for report in reports}) > 1:
            disagreements += 1
        for protocol, report in zip(protocols, reports):
            slots[protocol].append(report.slots_total)
    return slots, disagreements


def _estimation_point(task):
    config, index, value = task
    estimation = config['estimation']
    T, D = estimation['T'], estimation['D']
    n_all = estimation['n_all'] or D
    t = bitmap_length(n_all)
    q = _activity(estimation, value)
    logger.info(f"estimation sweep: {estimation['sweep']['variable']}={value} (point {index})")
    slots, disagreements = simulate_slots(
        T, D, n_all, q, estimation['protocols'], config['reps'],
        RandomSource(config['seed']).child('estimation-sweep', index),
        config['slot_bits'], HashingMode(config['hashing_mode']),
    )
    method1 = expected_total_method1_bernoulli(T, D, q, t, config['slot_bits'])
    analytic = {'method1': method1, 'method2': method1 if T <= 3 else np.nan, 'baseline': float(T * t)}
    rows = []
    for protocol in estimation['protocols']:
        mean, half = mean_ci(slots[protocol])
        rows.append({
            'variable': estimation['sweep']['variable'],
            'value': value,
            'protocol': protocol,
            'slots_mean': mean,
            'slots_ci95': half,
            'slots_analytic': analytic[protocol],
            'reps': config['reps'],
            'disagreements': disagreements,
        })
    return rows


def estimation_sweep(config):
    values = sweep_values(config['estimation']['sweep'])
    tasks = [(config, index, value) for index, value in enumerate(values)]
    rows = [row for point in parallel_map(_estimation_point, tasks, config['jobs']) for row in point]
    frame = pd.DataFrame(rows)
    frame.attrs['units'] = {
        'slots_mean': 'slots (simulated)',
        'slots_ci95': 'slots (simulated, 95% t-interval half-width)',
        'slots_analytic': 'slots (analytic)',
    }
    return {'estimation_sweep': frame}


def _crossing(excess, tolerance, max_iterations):
    """Smallest q in [0, 1] with excess(q) >= 0 by bisection; 0 or 1 when no crossing lies inside."""
    lo, hi = 0.0, 1.0
    if excess(lo) >= 0:
        return lo
    if excess(hi) < 0:
        return hi
    for _ in range(max_iterations):
        if hi - lo <= tolerance:
            break
        mid = (lo + hi) / 2
        if excess(mid) < 0:
            lo = mid
        else:
            hi = mid
    return (lo + hi) / 2


def _threshold_point(task):
    config, T, D = task
    threshold = config['threshold']
    n_all = threshold['n_all'] or D
    t = bitmap_length(n_all)
    baseline = T * t
    source = RandomSource(config['seed']).child('threshold-sweep', T, D)
    mode = HashingMode(config['hashing_mode'])

    def simulated(protocol):
        def excess(q):
            slots, _ = simulate_slots(T, D, n_all, [q] * T, [protocol], config['reps'], source,
                                      config['slot_bits'], mode)
            return float(np.mean(slots[protocol])) - baseline
        return excess

    def analytic(q):
        return expected_total_method1_bernoulli(T, D, q, t, config['slot_bits']) - baseline

    logger.info(f"threshold sweep: T={T} D={D} t={t}")
    args = (threshold['tolerance'], threshold['max_iterations'])
    row = {
        'T': T,
        'D': D,
        'n_all': n_all,
        't': t,
        'baseline_slots': baseline,
        'q1_threshold': _crossing(simulated('method1'), *args),
        'q2_threshold': _crossing(simulated('method2'), *args),
        'q1_threshold_analytic': _crossing(analytic, *args),
    }
    logger.info(f"threshold sweep: T={T} D={D} -> q1={row['q1_threshold']:.3f} q2={row['q2_threshold']:.3f}")
    return row


def threshold_sweep(config):
    threshold = config['threshold']
    tasks = [(config, T, D) for T in sorted(threshold['T_values']) for D in sorted(threshold['D_values'])]
    frame = pd.DataFrame(parallel_map(_threshold_point, tasks, config['jobs']))
    frame.attrs['units'] = {
        'baseline_slots': 'slots (analytic)',
        'q1_threshold': 'activity probability (simulated)',
        'q2_threshold': 'activity probability (simulated)',
        'q1_threshold_analytic': 'activity probability (analytic)',
    }
    return {'threshold_sweep': frame}


def frame_config(config, rate, mac=None):
    mac = mac or config['mac']
    z = mac['z'] or [mac['pu_probability']] * mac['channels']
    return FrameConfig(
        channels=ChannelModel(z),
        nodes_per_class=mac['nodes_per_class'],
        arrival_rates=(rate,) * 3,
        weights=tuple(mac['weights']),
        caps=tuple(mac['caps']),
        slots_per_frame=mac['slots_per_frame'],
        sw_slots=mac['sw_slots'],
        bw1_cap=mac['bw1_cap'],
        bw2_slots=mac['bw2_slots'],
        slot_bits=config['slot_bits'],
        estimator=Protocol(mac['estimator']),
        hashing_mode=HashingMode(config['hashing_mode']),
        energy=EnergyModel(**mac['energy']),
    )


def _mac_point(task):
    config, index, rate, mode, rep = task
    mac = config['mac']
    # PROPOSED and IDEAL share arrivals and spectrum draws at each point
    seed = derived_seed(config['seed'], 'mac-sim', index, rep)
    record = run_simulation(frame_config(config, rate), mac['frames'], seed, Mode(mode), mac['warmup'],
                            mac['batches'], trace=config['trace'] and mode == 'proposed')
    tags = {'lambda': rate, 'mode': mode, 'rep': rep}
    trace = record.trace.assign(**tags) if record.trace is not None else None
    return record.summary.assign(**tags), record.per_frame.assign(**tags), trace


def _combine_reps(summary):
    rows = []
    for (rate, mode, cls), group in summary.groupby(['lambda', 'mode', 'class'], sort=False):
        if len(group) == 1:
            row = group.iloc[0]
            throughput, throughput_ci = row['throughput'], row['throughput_ci']
            delay, delay_ci = row['mean_delay'], row['delay_ci']
        else:
            throughput, throughput_ci = mean_ci(group['throughput'])
            delay, delay_ci = mean_ci(group['mean_delay'].dropna()) if group['mean_delay'].notna().any() \
                else (np.nan, np.nan)
        rows.append({
            'lambda': rate,
            'mode': mode,
            'class': cls,
            'throughput': throughput,
            'throughput_ci95': throughput_ci,
            'delay': delay,
            'delay_ci95': delay_ci,
            'energy': group['energy'].mean(),
            'successes': group['successes'].mean(),
            'reps': len(group),
        })
    combined = pd.DataFrame(rows)
    ideal = combined.loc[combined['mode'] == 'ideal', ['lambda', 'class', 'throughput']]
    combined = combined.merge(ideal.rename(columns={'throughput': 'ideal'}), on=['lambda', 'class'], how='left')
    combined['ideal_ratio'] = combined['throughput'] / combined['ideal'].replace(0.0, np.nan)
    return combined.drop(columns='ideal')


def mac_sim_experiment(config):
    mac = config['mac']
    tasks = [(config, index, rate, mode, rep)
             for index, rate in enumerate(mac['lambdas'])
             for mode in mac['modes']
             for rep in range(config['reps'])]
    results = parallel_map(_mac_point, tasks, config['jobs'])
    summary = _combine_reps(pd.concat([r[0] for r in results], ignore_index=True))
    summary.attrs['units'] = {
        'lambda': 'packets per node per frame',
        'throughput': 'packets per node per frame (simulated)',
        'throughput_ci95': 'packets per node per frame (simulated, 95% half-width)',
        'delay': 'frames (simulated)',
        'delay_ci95': 'frames (simulated, 95% half-width)',
        'energy': 'energy units per frame (simulated)',
        'successes': 'successful contentions per frame (simulated)',
    }
    tables = {
        'mac_sim': summary,
        'mac_sim_frames': pd.concat([r[1] for r in results], ignore_index=True),
    }
    traces = [r[2] for r in results if r[2] is not None]
    if traces:
        tables['mac_sim_trace'] = pd.concat(traces, ignore_index=True)
    return tables


def _row(section, quantity, analytic, reference=np.nan, provenance='', sigma=np.nan, tolerance=np.nan,
         status='', **params):
    delta = analytic - reference if not (np.isnan(reference) or np.isnan(analytic)) else np.nan
    row = dict.fromkeys(ANALYSIS_COLUMNS, np.nan)
    row.update(params)
    row.update({'section': section, 'quantity': quantity, 'analytic': float(analytic),
                'reference': float(reference), 'provenance': provenance, 'sigma': sigma, 'delta': delta,
                'tolerance': tolerance, 'status': status})
    if isinstance(row['n'], (tuple, list)):
        row['n'] = ' '.join(str(x) for x in row['n'])
    return row


def _statistical(section, quantity, analytic, samples, sigmas, **params):
    samples = np.asarray(samples, dtype=float)
    mean = float(samples.mean())
    sigma = float(samples.std(ddof=1) / math.sqrt(samples.size)) if samples.size > 1 else 0.0
    tolerance = sigmas * sigma + DEFAULT_BUDGET.tolerance
    status = 'ok' if abs(analytic - mean) <= tolerance else 'flagged'
    return _row(section, quantity, analytic, mean, 'simulated', sigma, tolerance, status, **params)


def _exact(section, quantity, analytic, reference, **params):
    tolerance = DEFAULT_BUDGET.tolerance
    status = 'ok' if abs(analytic - reference) <= tolerance else 'flagged'
    return _row(section, quantity, analytic, reference, 'oracle', 0.0, tolerance, status, **params)


def _bound(section, quantity, bound, exact, **params):
    status = 'ok' if bound >= exact - DEFAULT_BUDGET.tolerance else 'violation'
    return _row(section, quantity, bound, exact, 'analytic', tolerance=0.0, status=status, **params)


def _expectation_rows(task):
    config, index, T, n, s = task
    analysis = config['analysis']
    counts = (n,) * T
    l = max(int(n - 1).bit_length(), 1) if n > 0 else 0
    t = max(l + s, 1)
    params = EstimationParams(T, counts, t, config['slot_bits'])
    where = {'T': T, 'n': counts, 't': t, 's': s}
    phases = mc_phase_counts(counts, t, analysis['mc_runs'],
                             RandomSource(config['seed']).child('analysis', 'phases', index))
    k, r = expected_K(params), expected_R(params)
    sigmas = DEFAULT_BUDGET.sigmas
    exact_total = expected_total_method1(params)
    bound_total = bound_total_method1(params)
    return [
        _statistical('expectations', 'K', k, phases['K'], sigmas, **where),
        _statistical('expectations', 'R', r, phases['R'], sigmas, **where),
        _bound('bounds', 'bound_K', bound_K(params), k, **where),
        _bound('bounds', 'bound_R', bound_R(params), r, **where),
        _bound('bounds', 'bound_total', bound_total, exact_total, **where),
        _row('bounds', 'bound_ratio', bound_total / exact_total, provenance='analytic', status='info', **where),
    ]


def expectation_section(config):
    analysis = config['analysis']
    tasks, index = [], 0
    for T in analysis['T_values']:
        for n in analysis['n_values']:
            for s in analysis['s_values']:
                tasks.append((config, index, T, n, s))
                index += 1
    return [row for rows in parallel_map(_expectation_rows, tasks, config['jobs']) for row in rows]


def bruteforce_section(config):
    rows = []
    grid = [(2, (n1, n2), t) for t in (1, 2, 3) for n1 in range(5) for n2 in range(5 - n1)]
    grid += [(3, (2, 1, 2), 3), (3, (1, 1, 1), 2), (4, (1, 2, 1, 1), 2)]
    for T, counts, t in grid:
        params = EstimationParams(T, counts, t, config['slot_bits'])
        where = {'T': T, 'n': counts, 't': t}
        rows.append(_exact('bruteforce', 'K', expected_K(params), float(exact_expected_K_bruteforce(params)),
                           **where))
        rows.append(_exact('bruteforce', 'R', expected_R(params), float(exact_expected_R_bruteforce(params)),
                           **where))
    return rows


def bound_check_section(config):
    """Bound against exact total at the mean counts: over T at fixed q, then over q at fixed T."""
    analysis = config['analysis']
    D, q0, T0 = analysis['bound_D'], analysis['bound_q'], analysis['bound_T']
    t = bitmap_length(D)
    points = [(T, q0) for T in analysis['T_values']] + [(T0, q) for q in analysis['q_values']]
    rows = []
    for T, q in points:
        counts = (round(q * D),) * T
        params = EstimationParams(T, counts, t, config['slot_bits'])
        exact = expected_total_method1(params)
        bound = bound_total_method1(params)
        where = {'T': T, 'n': counts, 't': t, 'q': q, 'D': D}
        rows.append(_bound('bound-check', 'total_slots', bound, exact, **where))
        rows.append(_row('bound-check', 'bound_ratio', bound / exact, provenance='analytic', status='info', **where))
        rows.append(_row('bound-check', 'total_slots_bernoulli',
                         expected_total_method1_bernoulli(T, D, q, t, config['slot_bits']), exact,
                         'analytic', status='info', **where))
    return rows


def _fixture_runs(params, runs, source):
    """Constant-grant CDTW fixture: per run (M, total energy), both zero on overflow."""
    energy = EnergyModel(params.gamma_I, params.gamma_T, params.gamma_R)
    wins, spent = np.zeros(runs), np.zeros(runs)
    contenders = [Contender(i, 1) for i in range(params.n)]
    for k in range(runs):
        log = run_cdtw_channel(contenders, params.n_hat, params.W, source.child(k).generator(),
                               policy=CdtwPolicy.ANALYSIS, d=params.d, energy=energy)
        if not log.overflow:
            wins[k], spent[k] = log.successes, log.energy
    return wins, spent


def _contention_rows(task):
    config, index, point, samples, fixture_runs = task
    energy = config['analysis']['energy']
    params = MacAnalysisParams(n=point['n'], n_hat=max(point['n'], 1), W=point['W'], d=point['d'], **energy)
    where = {'n': point['n'], 'W': point['W'], 'd': point['d']}
    source = RandomSource(config['seed']).child('analysis', 'contention', index)
    logger.info(f"analysis contention point W={params.W} d={params.d} n={params.n}")
    sigmas = DEFAULT_BUDGET.sigmas

    e_m = expected_M(params)
    exact = expected_energy(params, 'exact')
    verbatim = expected_energy(params, 'verbatim')
    verbatim_status = 'info' if np.isfinite(verbatim.ul) else 'divergent'
    deficit = normalization_deficit(params)
    mc = mc_frame_process(params, samples, source.child('process'))
    wins, spent = _fixture_runs(params, fixture_runs, source.child('fixture'))

    rows = [
        _statistical('contention', 'E_M', e_m, mc['M'], sigmas, **where),
        _statistical('contention', 'E_M_fixture', e_m, wins, sigmas, **where),
        _statistical('contention', 'E_UL', exact.ul, mc['ul'], sigmas, **where),
        _statistical('contention', 'E_DL', exact.dl, mc['dl'], sigmas, **where),
        _statistical('contention', 'E_DT', exact.dt, mc['dt'], sigmas, **where),
        _statistical('contention', 'energy_fixture', exact.total, spent, sigmas, **where),
        _statistical('contention', 'deficit', deficit, mc['overflow'].astype(float), sigmas, **where),
        _row('contention', 'mass', float(pm_distribution(params).sum()), provenance='analytic', status='info',
             **where),
        _row('contention', 'E_UL_verbatim', verbatim.ul, exact.ul, 'analytic', status=verbatim_status, **where),
        _row('contention', 'E_DL_verbatim', verbatim.dl, exact.dl, 'analytic', status=verbatim_status, **where),
    ]
    return rows


def contention_section(config, samples=None, fixture_runs=None):
    analysis = config['analysis']
    tasks = [(config, index, point, samples or analysis['samples'], fixture_runs or analysis['fixture_runs'])
             for index, point in enumerate(analysis['mac_points'])]
    return [row for rows in parallel_map(_contention_rows, tasks, config['jobs']) for row in rows]


def nested_sum_section(config, max_W=10, max_d=3, max_n=4):
    rows = []
    for W in range(max_W + 1):
        for d in range(1, max_d + 1):
            for n in range(max_n + 1):
                params = MacAnalysisParams(n=n, n_hat=max(n, 1), W=W, d=d)
                for m, mass in enumerate(pm_distribution(params)):
                    if m > DEFAULT_BUDGET.max_nested_m:
                        break
                    rows.append(_exact('nested-sum', f'P(M={m})', float(mass), nested_sum_pm(params, m),
                                       n=n, W=W, d=d))
    return rows


def analysis_table(config):
    rows = (expectation_section(config) + bruteforce_section(config) + bound_check_section(config)
            + contention_section(config) + nested_sum_section(config))
    frame = pd.DataFrame(rows, columns=ANALYSIS_COLUMNS)
    flagged = frame[frame['status'].isin(['flagged', 'violation'])]
    if len(flagged):
        logger.warning(f"analysis table: {len(flagged)} of {len(frame)} rows outside tolerance")
    frame.attrs['units'] = {
        'analytic': 'closed form',
        'reference': 'oracle, Monte Carlo or exact value named by provenance',
        'sigma': 'standard error of the reference',
        'tolerance': f'{DEFAULT_BUDGET.sigmas:g} sigma (statistical) or 1e-12 (exact)',
    }
    return {'analysis_table': frame}
