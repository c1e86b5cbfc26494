import gzip
import json
import os
import tempfile
from unittest import mock

import pandas as pd
from django.conf import settings
from django.contrib.auth import get_user_model
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase, TestCase
from django.urls import reverse
from rest_framework import serializers, status
from rest_framework.test import APIClient, APITestCase
from rest_framework_simplejwt.tokens import RefreshToken

from .factories import ExperimentRunFactory
from .models import ExperimentRun
from .output import render_csv, write_csv
from .plots import detect_kind, render_plots
from .runners import analysis_table, estimation_sweep, mac_sim_experiment, parallel_map, threshold_sweep
from .serializers import load_config
from .validation import _allowed_outliers, check_equivalence, validate

User = get_user_model()


def write_json(directory, data, name='config.json'):
    path = os.path.join(directory, name)
    with open(path, 'w', encoding='utf-8') as fh:
        json.dump(data, fh)
    return path


def tiny_estimation(**overrides):
    config = load_config('estimation-sweep', overrides={'reps': 5, 'seed': 11})
    config['estimation'].update({'T': 3, 'D': 20, 'q': [0.1, 0.1, 0.1],
                                 'sweep': {'variable': 'q1', 'start': 0.0, 'stop': 0.2, 'step': 0.1}})
    config.update(overrides)
    return config


def tiny_mac(**overrides):
    config = load_config('mac-sim', overrides={'seed': 5})
    config['mac'].update({'channels': 5, 'nodes_per_class': 5, 'frames': 20, 'warmup': 4, 'batches': 4,
                          'lambdas': [0.0, 0.1], 'modes': ['proposed', 'ideal']})
    config.update(overrides)
    return config


class ConfigTests(SimpleTestCase):
    def test_defaults_come_from_settings(self):
        config = load_config('estimation-sweep')
        self.assertEqual(config['seed'], settings.SIMULATION['SEED'])
        self.assertEqual(config['slot_bits'], settings.SIMULATION['SLOT_BITS'])
        self.assertEqual(config['reps'], 200)
        self.assertEqual(config['estimation']['q'], [0.1] * 4)
        self.assertEqual(config['mac']['energy'], {'gamma_I': 0.05, 'gamma_T': 1.0, 'gamma_R': 0.5})

    def test_flags_beat_file(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = write_json(tmp, {'kind': 'mac-sim', 'seed': 5, 'reps': 3})
            config = load_config('mac-sim', path, {'seed': 7, 'reps': None})
        self.assertEqual(config['seed'], 7)
        self.assertEqual(config['reps'], 3)

    def test_unknown_keys_rejected_at_every_level(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = write_json(tmp, {'colour': 'red', 'mac': {'energy': {'gamma_X': 1}}})
            with self.assertRaises(serializers.ValidationError) as ctx:
                load_config('mac-sim', path)
        messages = [str(m) for m in ctx.exception.detail]
        self.assertIn('colour: Unknown key.', messages)

        with tempfile.TemporaryDirectory() as tmp:
            path = write_json(tmp, {'mac': {'energy': {'gamma_X': 1}}})
            with self.assertRaises(serializers.ValidationError) as ctx:
                load_config('mac-sim', path)
        self.assertIn('mac.energy.gamma_X: Unknown key.', [str(m) for m in ctx.exception.detail])

    def test_error_paths_are_dotted(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = write_json(tmp, {'mac': {'weights': [1.0, 0.0, 0.0]}})
            with self.assertRaises(serializers.ValidationError) as ctx:
                load_config('mac-sim', path)
        self.assertIn('mac.weights.1: Ensure this value is greater than 0.', [str(m) for m in ctx.exception.detail])

    def test_cross_field_rules(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = write_json(tmp, {'estimation': {'T': 3, 'q': [0.1, 0.2]}})
            with self.assertRaises(serializers.ValidationError) as ctx:
                load_config('estimation-sweep', path)
        self.assertIn('estimation.q: Expected 3 activity probabilities.', [str(m) for m in ctx.exception.detail])

    def test_kind_mismatch_and_bad_json(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = write_json(tmp, {'kind': 'validate'})
            with self.assertRaises(serializers.ValidationError):
                load_config('mac-sim', path)
            broken = os.path.join(tmp, 'broken.json')
            with open(broken, 'w') as fh:
                fh.write('{"seed": ')
            with self.assertRaises(serializers.ValidationError):
                load_config('mac-sim', broken)

    def test_bound_check_is_an_analysis_table_section(self):
        self.assertNotIn('bound-check', [kind for kind, _ in ExperimentRun.KIND_CHOICES])
        with tempfile.TemporaryDirectory() as tmp:
            path = write_json(tmp, {'kind': 'bound-check'})
            with self.assertRaises(serializers.ValidationError) as ctx:
                load_config('analysis-table', path)
        self.assertIn("kind: this file configures 'bound-check', not 'analysis-table'",
                      [str(m) for m in ctx.exception.detail])

    def test_validate_section(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = write_json(tmp, {'kind': 'validate', 'validate': {'scale': 'full', 'checks': ['tables']}})
            config = load_config('validate', path)
        self.assertEqual(config['validate'], {'scale': 'full', 'checks': ['tables']})

    def test_presets_are_valid(self):
        directory = os.path.join(settings.BASE_DIR, 'experiments', 'configs')
        for name in sorted(os.listdir(directory)):
            path = os.path.join(directory, name)
            with open(path) as fh:
                kind = json.load(fh)['kind']
            load_config(kind, path)


class OutputTests(SimpleTestCase):
    def test_header_lines(self):
        config = tiny_estimation(jobs=3, out='/somewhere')
        frame = pd.DataFrame({'x': [0.1, 0.2]})
        frame.attrs['units'] = {'x': 'slots'}
        lines = render_csv(frame, config).splitlines()
        self.assertTrue(lines[0].startswith('# config: '))
        header = json.loads(lines[0][len('# config: '):])
        self.assertNotIn('jobs', header)
        self.assertNotIn('out', header)
        self.assertEqual(header['seed'], 11)
        self.assertEqual(lines[1], '# units: {"x": "slots"}')
        self.assertEqual(lines[2:], ['x', '0.1', '0.2'])

    def test_gzip_tables_are_reproducible(self):
        config = tiny_estimation()
        frame = pd.DataFrame({'frame': [0, 1], 'deliveries': [3, 4]})
        with tempfile.TemporaryDirectory() as tmp:
            first = write_csv(frame, config, 'mac_sim_frames', os.path.join(tmp, 'a'))
            second = write_csv(frame, config, 'mac_sim_frames', os.path.join(tmp, 'b'))
            with open(first, 'rb') as a, open(second, 'rb') as b:
                self.assertEqual(a.read(), b.read())
            with gzip.open(first, 'rt') as fh:
                self.assertTrue(fh.readline().startswith('# config: '))


class RunnerTests(SimpleTestCase):
    def test_parallel_map_keeps_order(self):
        self.assertEqual(parallel_map(abs, [-3, 2, -1], jobs=2), [3, 2, 1])

    def test_estimation_sweep_zero_activity(self):
        """Con q = 0 Method I usa (T-1)t + ceil(t/S_W) slots exactamente"""
        config = tiny_estimation()
        config['estimation']['q'] = [0.0, 0.0, 0.0]
        frame = estimation_sweep(config)['estimation_sweep']
        self.assertEqual(list(frame['value'].unique()), [0.0, 0.1, 0.2])
        first = frame[(frame['value'] == 0.0) & (frame['protocol'] == 'method1')].iloc[0]
        t = 5  # ceil(log2 20)
        self.assertEqual(first['slots_mean'], 2 * t + 1)
        self.assertEqual(first['slots_ci95'], 0.0)
        self.assertAlmostEqual(first['slots_analytic'], 2 * t + 1)
        baseline = frame[frame['protocol'] == 'baseline']
        self.assertTrue((baseline['slots_mean'] == 3 * t).all())
        self.assertTrue((frame['disagreements'] == 0).all())

    def test_sweep_is_independent_of_jobs(self):
        serial = render_csv(estimation_sweep(tiny_estimation(jobs=1))['estimation_sweep'], tiny_estimation(jobs=1))
        pooled = render_csv(estimation_sweep(tiny_estimation(jobs=2))['estimation_sweep'], tiny_estimation(jobs=2))
        self.assertEqual(serial, pooled)

    def test_threshold_sweep_columns(self):
        config = load_config('threshold-sweep', overrides={'reps': 3})
        config['threshold'].update({'T_values': [3], 'D_values': [20], 'tolerance': 0.05})
        frame = threshold_sweep(config)['threshold_sweep']
        self.assertEqual(len(frame), 1)
        row = frame.iloc[0]
        self.assertEqual(row['t'], 5)
        self.assertEqual(row['baseline_slots'], 15)
        for column in ('q1_threshold', 'q2_threshold', 'q1_threshold_analytic'):
            self.assertTrue(0.0 <= row[column] <= 1.0)

    def test_mac_sim_tables(self):
        tables = mac_sim_experiment(tiny_mac(trace=True))
        self.assertEqual(set(tables), {'mac_sim', 'mac_sim_frames', 'mac_sim_trace'})
        summary = tables['mac_sim']
        self.assertEqual(len(summary), 2 * 2 * 3)
        idle = summary[summary['lambda'] == 0.0]
        self.assertTrue((idle['throughput'] == 0.0).all())
        ideal = summary[(summary['mode'] == 'ideal') & (summary['throughput'] > 0)]
        self.assertTrue((ideal['ideal_ratio'] == 1.0).all())
        self.assertEqual(set(tables['mac_sim_trace']['mode']), {'proposed'})

    def test_mac_sim_replications(self):
        summary = mac_sim_experiment(tiny_mac(reps=2))['mac_sim']
        self.assertTrue((summary['reps'] == 2).all())

    def test_analysis_table_small_grid(self):
        config = load_config('analysis-table')
        config['analysis'].update({'T_values': [2], 'n_values': [0, 3], 's_values': [0], 'mc_runs': 200,
                                   'q_values': [0.1], 'mac_points': [{'W': 10, 'd': 1, 'n': 3}],
                                   'samples': 500, 'fixture_runs': 100})
        frame = analysis_table(config)['analysis_table']
        self.assertEqual(set(frame['section']),
                         {'expectations', 'bounds', 'bruteforce', 'bound-check', 'contention', 'nested-sum'})
        idle = frame[(frame['section'] == 'expectations') & (frame['n'] == '0 0')]
        self.assertTrue((idle['analytic'] == 0.0).all())
        self.assertFalse((frame['status'] == 'violation').any())
        self.assertTrue((frame.loc[frame['section'] == 'bruteforce', 'status'] == 'ok').all())
        self.assertTrue((frame.loc[frame['section'] == 'nested-sum', 'status'] == 'ok').all())
        self.assertTrue(set(frame['provenance']) <= {'simulated', 'oracle', 'analytic'})


class ValidationTests(SimpleTestCase):
    def test_allowed_outliers(self):
        self.assertGreaterEqual(_allowed_outliers(24), 0)
        self.assertGreater(_allowed_outliers(2000), _allowed_outliers(24))

    def test_cheap_checks_pass(self):
        config = load_config('validate')
        config['validate']['checks'] = ['tables', 'nested-sum', 'determinism']
        frame = validate(config)['validate']
        self.assertEqual(set(frame['check']), {'tables', 'nested-sum', 'determinism'})
        self.assertTrue(frame['passed'].all())

    def test_equivalence_small(self):
        config = load_config('validate')
        results = check_equivalence(config, {'realizations': 20})
        self.assertEqual(len(results), 5)
        self.assertTrue(all(result['passed'] for result in results))


class CommandTests(TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.out = self.tmp.name

    def tearDown(self):
        self.tmp.cleanup()

    def sweep_config(self):
        return write_json(self.out, {
            'kind': 'estimation-sweep',
            'estimation': {'T': 3, 'D': 20, 'sweep': {'variable': 'q', 'start': 0.0, 'stop': 0.2, 'step': 0.1}},
        })

    def test_estimate_sweep_writes_csv_and_registers_run(self):
        call_command('estimate_sweep', config=self.sweep_config(), out=self.out, reps=3, seed=4)
        path = os.path.join(self.out, 'estimation_sweep.csv')
        self.assertTrue(os.path.exists(path))
        run = ExperimentRun.objects.get()
        self.assertEqual(run.kind, 'estimation-sweep')
        self.assertEqual(run.seed, 4)
        self.assertEqual(run.status, 'completed')
        self.assertEqual(run.summary['files']['estimation_sweep'], path)

    def test_same_seed_same_bytes(self):
        config = self.sweep_config()
        call_command('estimate_sweep', config=config, out=os.path.join(self.out, 'a'), reps=3)
        call_command('estimate_sweep', config=config, out=os.path.join(self.out, 'b'), reps=3, jobs=2)
        with open(os.path.join(self.out, 'a', 'estimation_sweep.csv'), 'rb') as a, \
                open(os.path.join(self.out, 'b', 'estimation_sweep.csv'), 'rb') as b:
            self.assertEqual(a.read(), b.read())

    def test_config_error(self):
        path = write_json(self.out, {'estimation': {'T': 1}})
        with self.assertRaisesMessage(CommandError, 'config error: estimation.T'):
            call_command('estimate_sweep', config=path, out=self.out)
        self.assertFalse(ExperimentRun.objects.exists())

    def test_validate_passes(self):
        path = write_json(self.out, {'kind': 'validate', 'validate': {'checks': ['tables']}})
        call_command('validate', config=path, out=self.out)
        self.assertEqual(ExperimentRun.objects.get().status, 'passed')
        self.assertTrue(os.path.exists(os.path.join(self.out, 'validate.csv')))

    def test_validate_failure_exits_nonzero(self):
        failing = {'check': 'tables', 'detail': 'forced', 'value': 1, 'limit': 0, 'passed': False}
        with mock.patch.dict('experiments.validation.CHECKS', {'tables': lambda config, scale: [failing]}):
            with self.assertRaises(CommandError):
                call_command('validate', checks=['tables'], out=self.out)
        run = ExperimentRun.objects.get()
        self.assertEqual(run.status, 'failed')
        self.assertEqual(run.summary['failed'], 1)

    def test_validate_unknown_check(self):
        with self.assertRaisesMessage(CommandError, 'config error'):
            call_command('validate', checks=['astrology'], out=self.out)

    def test_render_plots(self):
        call_command('estimate_sweep', config=self.sweep_config(), out=self.out, reps=3)
        csv_path = os.path.join(self.out, 'estimation_sweep.csv')
        self.assertEqual(detect_kind(pd.read_csv(csv_path, comment='#')), 'estimation-sweep')
        call_command('render_plots', csv_path)
        self.assertTrue(os.path.exists(os.path.join(self.out, 'estimation_sweep.png')))

    def test_render_plots_errors(self):
        with self.assertRaises(CommandError):
            call_command('render_plots', os.path.join(self.out, 'missing.csv'))
        path = os.path.join(self.out, 'other.csv')
        pd.DataFrame({'a': [1]}).to_csv(path, index=False)
        with self.assertRaises(CommandError):
            call_command('render_plots', path)

    def test_mac_plots(self):
        frame = mac_sim_experiment(tiny_mac())['mac_sim']
        path = os.path.join(self.out, 'mac_sim.csv')
        frame.to_csv(path, index=False)
        paths = render_plots(path)
        self.assertEqual([os.path.basename(p) for p in paths], ['mac_sim_throughput.png', 'mac_sim_delay.png'])


class ExperimentRunApiTests(APITestCase):
    def setUp(self):
        """
        Configuración inicial para cada test.
        Crea un usuario y algunas corridas.
        """
        self.user = User.objects.create_user(username='analyst', password='TestPass123!')
        self.client = APIClient()
        refresh = RefreshToken.for_user(self.user)
        self.client.credentials(HTTP_AUTHORIZATION=f'Bearer {refresh.access_token}')
        self.runs = ExperimentRunFactory.create_batch(3)
        self.mac_run = ExperimentRunFactory(kind='mac-sim', status='failed')

    def test_list_runs(self):
        """Test listar corridas"""
        response = self.client.get(reverse('runs-list'))
        self.assertEqual(response.status_code, status.HTTP_200_OK)
        self.assertEqual(response.data['count'], 4)

    def test_filter_runs(self):
        response = self.client.get(reverse('runs-list'), {'kind': 'mac-sim'})
        self.assertEqual(response.status_code, status.HTTP_200_OK)
        self.assertEqual([run['id'] for run in response.data['results']], [self.mac_run.id])

    def test_run_detail(self):
        run = self.runs[0]
        response = self.client.get(reverse('runs-detail', args=[run.id]))
        self.assertEqual(response.status_code, status.HTTP_200_OK)
        self.assertEqual(response.data['seed'], run.seed)
        self.assertEqual(response.data['config']['kind'], 'estimation-sweep')

    def test_read_only(self):
        """Test que la API no permite crear ni borrar corridas"""
        response = self.client.post(reverse('runs-list'), {'kind': 'validate', 'seed': 1})
        self.assertEqual(response.status_code, status.HTTP_405_METHOD_NOT_ALLOWED)
        response = self.client.delete(reverse('runs-detail', args=[self.runs[0].id]))
        self.assertEqual(response.status_code, status.HTTP_405_METHOD_NOT_ALLOWED)

    def test_unauthorized_access(self):
        """Test acceso sin autenticación"""
        self.client.credentials()
        response = self.client.get(reverse('runs-list'))
        self.assertEqual(response.status_code, status.HTTP_401_UNAUTHORIZED)

    def test_token_endpoint(self):
        client = APIClient()
        response = client.post(reverse('token_obtain_pair'), {'username': 'analyst', 'password': 'TestPass123!'})
        self.assertEqual(response.status_code, status.HTTP_200_OK)
        self.assertIn('access', response.data)


class HealthTests(SimpleTestCase):
    def test_health(self):
        response = self.client.get(reverse('health_check'))
        self.assertEqual(response.status_code, 200)
        self.assertEqual(response.content, b'OK')
