"""Acceptance checks behind the ``validate`` command.

Statistical comparisons use the oracle budget's 3-sigma band per point. A
check made of many comparisons passes when no point lies beyond 5 sigma and
the number of points outside 3 sigma is within the 99.9% quantile of what
chance alone produces.
"""
import copy
import logging

import numpy as np
import pandas as pd
from scipy import stats

from core.randomness import RandomSource
from core.types import HashingMode, NodePopulation
from estimators.assignment import assign_hashes
from estimators.tables import table_mismatches
from oracle.budget import DEFAULT_BUDGET

from . import runners
from .output import render_csv

logger = logging.getLogger(__name__)

SCALES = {
    'quick': {'realizations': 500, 'mc_runs': 4000, 'samples': 20000, 'fixture_runs': 2000,
              'threshold_reps': 40, 'mac_frames': 300, 'mac_warmup': 50},
    'full': {'realizations': 10_000, 'mc_runs': 100_000, 'samples': 100_000, 'fixture_runs': 100_000,
             'threshold_reps': 200, 'mac_frames': 2000, 'mac_warmup': 200},
}

THRESHOLD_TARGETS = {5: (0.13, 0.45), 6: (0.10, 0.27)}
THRESHOLD_SLACK = 0.05
GROSS_SIGMAS = 5.0


def _result(check, detail, value, limit, passed):
    return {'check': check, 'detail': detail, 'value': value, 'limit': limit, 'passed': bool(passed)}


def _allowed_outliers(count):
    tail = 2 * stats.norm.sf(DEFAULT_BUDGET.sigmas)
    return int(stats.binom.ppf(0.999, count, tail))


def _statistical_rows(check, rows):
    frame = pd.DataFrame(rows)
    frame = frame[frame['provenance'] == 'simulated']
    flagged = int((frame['status'] == 'flagged').sum())
    allowed = _allowed_outliers(len(frame))
    gross = frame[(frame['delta'].abs() > GROSS_SIGMAS * frame['sigma'] + DEFAULT_BUDGET.tolerance)]
    return [
        _result(check, f'{len(frame)} points outside {DEFAULT_BUDGET.sigmas:g} sigma', flagged, allowed,
                flagged <= allowed),
        _result(check, f'points beyond {GROSS_SIGMAS:g} sigma', len(gross), 0, gross.empty),
    ]


def check_equivalence(config, scale):
    results = []
    source = RandomSource(config['seed']).child('validate', 'equivalence')
    for T in range(2, 7):
        rng = source.child('activity', T).generator()
        mismatches = 0
        for k in range(scale['realizations']):
            q = rng.uniform(0.0, 0.6, size=T)
            population = NodePopulation.bernoulli([40] * T, q, source.child('population', T, k))
            assignment = assign_hashes(population, source, HashingMode(config['hashing_mode']), frame=k)
            reports = [protocol(assignment, config['slot_bits']) for protocol in runners.PROTOCOLS.values()]
            if len({(r.rho, r.n_hat) for r in reports}) != 1:
                mismatches += 1
        results.append(_result('equivalence', f"T={T}, {scale['realizations']} realizations", mismatches, 0,
                               mismatches == 0))
    return results


def check_tables(config, scale):
    problems = table_mismatches()
    for problem in problems:
        logger.error(f"table mismatch: {problem}")
    return [_result('tables', 'decoder vs reference tables', len(problems), 0, not problems)]


def _analysis_config(config, scale):
    resolved = copy.deepcopy(config)
    resolved['analysis'].update({
        'T_values': [2, 3, 4, 5, 6],
        'n_values': [1, 10, 100],
        's_values': [0, 2, 4],
        'mc_runs': scale['mc_runs'],
    })
    return resolved


def check_expectations(config, scale):
    resolved = _analysis_config(config, scale)
    rows = [row for row in runners.expectation_section(resolved) if row['section'] == 'expectations']
    results = _statistical_rows('expectations', rows)
    exact = runners.bruteforce_section(resolved)
    bad = sum(row['status'] != 'ok' for row in exact)
    results.append(_result('expectations', f'{len(exact)} brute-force points', bad, 0, bad == 0))
    return results


def check_bounds(config, scale):
    resolved = copy.deepcopy(config)
    resolved['analysis'].update({'T_values': [2, 3, 4, 5, 6], 'n_values': [1, 10, 100],
                                 's_values': [0, 1, 2, 3, 4], 'mc_runs': 10})
    rows = [row for row in runners.expectation_section(resolved) if row['section'] == 'bounds']
    rows += runners.bound_check_section(resolved)
    violations = sum(row['status'] == 'violation' for row in rows)
    ratios = [row['analytic'] for row in rows if row['quantity'] == 'bound_ratio']
    return [
        _result('bounds', f'{len(rows)} bound rows', violations, 0, violations == 0),
        _result('bounds', 'largest bound/exact ratio', max(ratios), np.nan, True),
    ]


def check_thresholds(config, scale):
    resolved = copy.deepcopy(config)
    resolved['reps'] = scale['threshold_reps']
    resolved['threshold'].update({'T_values': sorted(THRESHOLD_TARGETS), 'D_values': [100],
                                  'n_all': resolved['threshold']['n_all'] or 2 ** 20})
    frame = runners.threshold_sweep(resolved)['threshold_sweep']
    results = []
    for row in frame.itertuples(index=False):
        for name, value, target in zip(('q1', 'q2'), (row.q1_threshold, row.q2_threshold),
                                       THRESHOLD_TARGETS[row.T]):
            results.append(_result('thresholds', f'{name} threshold at T={row.T}, D={row.D}', value, target,
                                   abs(value - target) <= THRESHOLD_SLACK))

    # Method II never needs more slots than Method I on the tested activity grid
    n_all = resolved['threshold']['n_all']
    source = RandomSource(config['seed']).child('validate', 'method-order')
    worse = []
    for T in sorted(THRESHOLD_TARGETS):
        for q in np.round(np.arange(0.05, 1.0, 0.1), 2):
            slots, _ = runners.simulate_slots(T, 100, n_all, [q] * T, ['method1', 'method2'],
                                              scale['threshold_reps'], source.child(T, int(q * 100)),
                                              config['slot_bits'], HashingMode(config['hashing_mode']))
            if np.mean(slots['method2']) > np.mean(slots['method1']):
                worse.append(f'T={T} q={q}')
    results.append(_result('thresholds', 'grid points where Method II is worse', len(worse), 0, not worse))
    return results


def check_nested_sum(config, scale):
    rows = runners.nested_sum_section(config)
    bad = sum(row['status'] != 'ok' for row in rows)
    return [_result('nested-sum', f'{len(rows)} (W, d, n, m) points', bad, 0, bad == 0)]


def check_triangulation(config, scale):
    resolved = copy.deepcopy(config)
    resolved['analysis']['mac_points'] = [{'W': 50, 'd': d, 'n': n} for d in (1, 5) for n in (5, 20)]
    rows = runners.contention_section(resolved, scale['samples'], scale['fixture_runs'])
    results = _statistical_rows('triangulation', [row for row in rows if row['quantity'] != 'deficit'])
    for row in rows:
        if row['quantity'] == 'deficit':
            results.append(_result('triangulation', f"normalization deficit W={row['W']} d={row['d']} "
                                                    f"n={row['n']}", row['analytic'], np.nan, True))
    return results


def _mac_run(config, scale, weights, rates, modes=('proposed',)):
    resolved = copy.deepcopy(config)
    resolved['reps'] = 1
    resolved['trace'] = False
    resolved['mac'].update({'channels': 30, 'nodes_per_class': 50, 'slots_per_frame': 50,
                            'weights': list(weights), 'caps': [5, 5, 5], 'lambdas': list(rates),
                            'modes': list(modes), 'frames': scale['mac_frames'], 'warmup': scale['mac_warmup']})
    return runners.mac_sim_experiment(resolved)['mac_sim'].set_index(['lambda', 'mode', 'class'])


def check_mac(config, scale):
    results = []
    equal = _mac_run(config, scale, (1.0, 1.0, 1.0), [0.05])
    rows = equal.loc[(0.05, 'proposed')]
    low = (rows['throughput'] + rows['throughput_ci95']).min()
    high = (rows['throughput'] - rows['throughput_ci95']).max()
    results.append(_result('mac', 'equal weights: class intervals overlap', high - low, 0.0, high <= low))

    saturated = 0.5
    weighted = _mac_run(config, scale, (3.0, 2.0, 1.0), [saturated], modes=('proposed', 'ideal'))
    proposed = weighted.loc[(saturated, 'proposed')]
    throughput = proposed['throughput']
    results.append(_result('mac', 'w=(3,2,1): throughput emergency > periodic > normal',
                           throughput['emergency'] - throughput['normal'], 0.0,
                           throughput['emergency'] > throughput['periodic'] > throughput['normal']))
    delay = proposed['delay']
    results.append(_result('mac', 'w=(3,2,1): delay emergency < periodic < normal',
                           delay['normal'] - delay['emergency'], 0.0,
                           delay['emergency'] < delay['periodic'] < delay['normal']))
    for cls, floor in (('emergency', 0.75), ('normal', 0.55)):
        ratio = proposed.loc[cls, 'ideal_ratio']
        results.append(_result('mac', f'w=(3,2,1): {cls} share of ideal throughput', ratio, floor, ratio >= floor))

    stable = 0.02
    light = _mac_run(config, scale, (1.0, 1.0, 1.0), [stable]).loc[(stable, 'proposed')]
    gap = (light['throughput'] - stable).abs().max()
    band = light['throughput_ci95'].max() + 0.1 * stable
    results.append(_result('mac', f'stable region: throughput = lambda = {stable}', gap, band, gap <= band))
    return results


def check_determinism(config, scale):
    resolved = copy.deepcopy(config)
    resolved['reps'] = 20
    resolved['estimation'].update({'T': 4, 'q': [0.2, 0.2, 0.75, 0.12],
                                   'sweep': {'variable': 'q1', 'start': 0.0, 'stop': 0.3, 'step': 0.1}})
    first = render_csv(runners.estimation_sweep(resolved)['estimation_sweep'], resolved)
    second = render_csv(runners.estimation_sweep(resolved)['estimation_sweep'], resolved)
    return [_result('determinism', 'estimation sweep rendered twice', int(first != second), 0, first == second)]


CHECKS = {
    'equivalence': check_equivalence,
    'tables': check_tables,
    'expectations': check_expectations,
    'bounds': check_bounds,
    'thresholds': check_thresholds,
    'nested-sum': check_nested_sum,
    'triangulation': check_triangulation,
    'mac': check_mac,
    'determinism': check_determinism,
}


def validate(config):
    scale = SCALES[config['validate']['scale']]
    rows = []
    for name in config['validate']['checks']:
        logger.info(f"validate: {name} ({config['validate']['scale']} scale)")
        results = CHECKS[name](config, scale)
        for result in results:
            if not result['passed']:
                logger.error(f"validate: {name} failed: {result['detail']} = {result['value']} "
                              f"(limit {result['limit']})")
        rows.extend(results)
    frame = pd.DataFrame(rows, columns=['check', 'detail', 'value', 'limit', 'passed'])
    frame.attrs['units'] = {'value': 'measured', 'limit': 'acceptance limit'}
    return {'validate': frame}
