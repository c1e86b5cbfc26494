import itertools

import numpy as np
from django.test import SimpleTestCase
from scipy.optimize import minimize_scalar

from core.exceptions import InvalidParameterError
from core.randomness import RandomSource
from estimators.assignment import HashAssignment
from estimators.protocols import method1_from_hashes
from oracle.montecarlo import mc_frame_process, mc_phase_counts

from .contention import (
    MacAnalysisParams, contention_prob, expected_energy, expected_M, normalization_deficit,
    pm_distribution, success_prob,
)
from .estimation import (
    BoundParams, EstimationParams, bound_K, bound_R, bound_total_method1, expected_K, expected_R,
    expected_total_method1, expected_total_method1_bernoulli, hash_prob, hash_probs,
)


class HashProbTests(SimpleTestCase):
    def test_examples(self):
        self.assertEqual(hash_prob(0, 7), 0.5)
        self.assertEqual(hash_prob(6, 7), 0.015625)
        self.assertEqual(hash_prob(0, 1), 1.0)

    def test_sums_to_one(self):
        for t in range(1, 25):
            self.assertAlmostEqual(hash_probs(t).sum(), 1.0, places=14)

    def test_out_of_range(self):
        with self.assertRaises(InvalidParameterError):
            hash_prob(7, 7)
        with self.assertRaises(InvalidParameterError):
            hash_prob(-1, 7)


class ExpectedSlotsTests(SimpleTestCase):
    def test_no_active_nodes(self):
        params = EstimationParams(3, (0, 0, 0), 7, 5)
        self.assertEqual(expected_K(params), 0.0)
        self.assertEqual(expected_R(params), 0.0)
        self.assertEqual(expected_total_method1(params), 16)

    def test_single_type1_node_never_collides(self):
        for t in range(1, 9):
            self.assertEqual(expected_K(EstimationParams(2, (1, 0), t)), 0.0)

    def test_R_needs_type1(self):
        self.assertEqual(expected_R(EstimationParams(3, (0, 40, 7), 7)), 0.0)

    def test_R_below_K(self):
        for n in itertools.product([0, 1, 3, 10], repeat=3):
            params = EstimationParams(3, n, 6)
            self.assertLessEqual(expected_R(params), expected_K(params) + 1e-12)

    def test_total_monotone_in_each_count(self):
        for n in itertools.product(range(5), repeat=3):
            base = expected_total_method1(EstimationParams(3, n, 5))
            for b in range(3):
                bumped = list(n)
                bumped[b] += 1
                self.assertGreaterEqual(expected_total_method1(EstimationParams(3, bumped, 5)), base - 1e-12)

    def test_invalid_params(self):
        with self.assertRaises(InvalidParameterError):
            EstimationParams(1, (3,), 7)
        with self.assertRaises(InvalidParameterError):
            EstimationParams(2, (3, -1), 7)
        with self.assertRaises(InvalidParameterError):
            EstimationParams(2, (3, 1), 0)
        with self.assertRaises(InvalidParameterError):
            EstimationParams(2, (3, 1), 7, slot_bits=0)

    def test_K_matches_phase_count_monte_carlo(self):
        """E[|C_I|], T = 4, n_b = 10, t = 7, within 3 sigma of 10^5 draws"""
        counts = mc_phase_counts((10, 10, 10, 10), 7, 100_000, RandomSource(31))
        analytic = expected_K(EstimationParams(4, (10, 10, 10, 10), 7))
        self.assertLessEqual(abs(counts['K'].mean() - analytic), 3 * counts['K'].sem())

    def test_R_matches_phase_count_monte_carlo(self):
        counts = mc_phase_counts((20, 5, 5), 7, 100_000, RandomSource(32))
        analytic = expected_R(EstimationParams(3, (20, 5, 5), 7))
        self.assertLessEqual(abs(counts['R'].mean() - analytic), 3 * counts['R'].sem())

    def test_total_matches_method1_runs(self):
        """Slots de Method I simulados contra la expresion cerrada (holgura de un slot)"""
        n, t, runs = (10, 10, 10, 10), 7, 1500
        rng = RandomSource(33).generator()
        p = hash_probs(t)
        totals = np.array([
            method1_from_hashes(HashAssignment.from_counts(
                np.stack([rng.multinomial(nb, p) for nb in n])), 5).slots_total
            for _ in range(runs)
        ])
        analytic = expected_total_method1(EstimationParams(4, n, t, 5))
        sem = totals.std(ddof=1) / np.sqrt(runs)
        self.assertLessEqual(abs(totals.mean() - analytic), 1 + 3 * sem)

    def test_bernoulli_total_reduces_to_fixed_counts(self):
        """q = 1 makes every node active: same as n_b = D"""
        fixed = expected_total_method1(EstimationParams(3, (8, 8, 8), 7))
        self.assertAlmostEqual(expected_total_method1_bernoulli(3, 8, 1.0, 7), fixed)
        self.assertAlmostEqual(expected_total_method1_bernoulli(3, 8, 0.0, 7), 16)

    def test_bernoulli_total_rejects_bad_q(self):
        with self.assertRaises(InvalidParameterError):
            expected_total_method1_bernoulli(3, 8, [0.1, 1.2, 0.1], 7)


class BoundTests(SimpleTestCase):
    def test_bounds_hold_on_grid(self):
        for T in range(2, 7):
            for n in itertools.product([1, 10, 100], repeat=T):
                l = max(int(max(n) - 1).bit_length(), 1)
                for s in range(5):
                    params = EstimationParams(T, n, l + s)
                    with self.subTest(T=T, n=n, s=s):
                        self.assertGreaterEqual(bound_K(params), expected_K(params) - 1e-12)
                        self.assertGreaterEqual(bound_R(params), expected_R(params) - 1e-12)
                        self.assertLessEqual(bound_R(params), bound_K(params))

    def test_bound_params(self):
        bound = BoundParams.from_params(EstimationParams(3, (10, 3, 7), 7))
        self.assertEqual((bound.n_r, bound.l, bound.s), (10, 4, 3))
        bound = BoundParams.from_params(EstimationParams(2, (1, 1), 3))
        self.assertEqual((bound.l, bound.s), (1, 2))

    def test_bitmap_shorter_than_log_n(self):
        with self.assertRaises(InvalidParameterError):
            bound_K(EstimationParams(2, (100, 1), 5))

    def test_no_active_nodes(self):
        params = EstimationParams(4, (0, 0, 0, 0), 7)
        self.assertEqual(bound_K(params), 0.0)
        self.assertEqual(bound_R(params), 0.0)

    def test_total_bound_is_fairly_tight(self):
        params = EstimationParams(4, (10, 10, 10, 10), 7, 5)
        ratio = bound_total_method1(params) / expected_total_method1(params)
        self.assertGreaterEqual(ratio, 1.0)
        self.assertLess(ratio, 1.3)


class ContentionTests(SimpleTestCase):
    def test_success_prob(self):
        self.assertEqual(success_prob(1, 1.0), 1.0)
        self.assertEqual(success_prob(2, 0.5), 0.5)
        self.assertEqual(success_prob(0, 0.3), 0.0)
        with self.assertRaises(InvalidParameterError):
            success_prob(2, 1.5)

    def test_success_prob_peaks_at_one_over_x(self):
        for x in range(2, 8):
            best = minimize_scalar(lambda p: -success_prob(x, p), bounds=(0.0, 1.0), method='bounded',
                                   options={'xatol': 1e-8})
            self.assertAlmostEqual(best.x, 1.0 / x, places=4)

    def test_contention_prob(self):
        self.assertEqual(contention_prob(10, 0), 0.1)
        self.assertEqual(contention_prob(10, 8), 0.5)
        self.assertEqual(contention_prob(10, 9), 1.0)
        self.assertEqual(contention_prob(2.5, 0), 0.4)

    def test_trivial_windows(self):
        params = MacAnalysisParams(n=1, n_hat=1, W=3, d=1)
        np.testing.assert_allclose(pm_distribution(params), [0.0, 1.0])
        self.assertEqual(expected_M(params), 1.0)
        np.testing.assert_allclose(pm_distribution(MacAnalysisParams(n=4, n_hat=4, W=0, d=2)), [1.0])
        self.assertEqual(expected_M(MacAnalysisParams(n=0, n_hat=1, W=20, d=1)), 0.0)

    def test_masses_and_deficit(self):
        for W, d, n in itertools.product([5, 12, 30], [1, 2, 5], [1, 3, 8]):
            params = MacAnalysisParams(n=n, n_hat=n, W=W, d=d)
            pm = pm_distribution(params)
            self.assertTrue(np.all((pm >= 0) & (pm <= 1)))
            deficit = normalization_deficit(params)
            self.assertGreaterEqual(deficit, -1e-12)
            self.assertLess(deficit, 1.0)

    def test_estimation_error_degrades_throughput(self):
        n = 5
        over = [expected_M(MacAnalysisParams(n=n, n_hat=h, W=50, d=1)) for h in range(n, 13)]
        under = [expected_M(MacAnalysisParams(n=n, n_hat=h, W=50, d=1)) for h in range(n, 0, -1)]
        for series in (over, under):
            self.assertTrue(all(a >= b - 1e-12 for a, b in zip(series, series[1:])))

    def test_invalid_params(self):
        with self.assertRaises(InvalidParameterError):
            MacAnalysisParams(n=3, n_hat=0, W=10)
        with self.assertRaises(InvalidParameterError):
            MacAnalysisParams(n=3, n_hat=3, W=10, d=0)
        with self.assertRaises(InvalidParameterError):
            MacAnalysisParams(n=3, n_hat=3, W=-1)

    def test_expected_M_matches_frame_process(self):
        for d, n in itertools.product([1, 5], [5, 20]):
            params = MacAnalysisParams(n=n, n_hat=n, W=50, d=d)
            tally = mc_frame_process(params, 20_000, RandomSource(40).child(d, n))
            with self.subTest(d=d, n=n):
                self.assertLessEqual(abs(tally['M'].mean() - expected_M(params)), 3 * tally['M'].sem())

    def test_deficit_is_overflow_rate(self):
        params = MacAnalysisParams(n=3, n_hat=3, W=12, d=2)
        tally = mc_frame_process(params, 50_000, RandomSource(41))
        rate = tally['overflow'].mean()
        sigma = np.sqrt(max(rate * (1 - rate), 1e-6) / len(tally))
        self.assertLessEqual(abs(rate - normalization_deficit(params)), 3 * sigma)


class EnergyTests(SimpleTestCase):
    def test_zero_energy_per_slot(self):
        params = MacAnalysisParams(n=5, n_hat=5, W=30, d=2)
        self.assertEqual(tuple(expected_energy(params)), (0.0, 0.0, 0.0))
        self.assertEqual(expected_energy(params, posterior='verbatim').dt, 0.0)

    def test_data_slot_energy(self):
        params = MacAnalysisParams(n=6, n_hat=4, W=40, d=3, gamma_I=0.2, gamma_T=1.5, gamma_R=1.0)
        energy = expected_energy(params)
        self.assertAlmostEqual(energy.dt, 3 * expected_M(params) * (1.5 + 5 * 0.2), places=12)

    def test_matches_frame_process(self):
        """E_UL y E_DL contra el proceso simulado, W = 12, d = 2, n = 3"""
        params = MacAnalysisParams(n=3, n_hat=3, W=12, d=2, gamma_I=0.1, gamma_T=1.0, gamma_R=0.6)
        energy = expected_energy(params)
        tally = mc_frame_process(params, 50_000, RandomSource(42))
        self.assertLessEqual(abs(tally['ul'].mean() - energy.ul), 3 * tally['ul'].sem())
        self.assertLessEqual(abs(tally['dl'].mean() - energy.dl), 3 * tally['dl'].sem())
        self.assertLessEqual(abs(tally['dt'].mean() - energy.dt), 3 * tally['dt'].sem())

    def test_posteriors_agree_on_deterministic_window(self):
        params = MacAnalysisParams(n=1, n_hat=1, W=3, d=1, gamma_I=0.5, gamma_T=2.0, gamma_R=1.0)
        exact = expected_energy(params)
        verbatim = expected_energy(params, posterior='verbatim')
        self.assertEqual(exact.ul, 2.0)
        self.assertEqual(exact.dl, 1.0)
        np.testing.assert_allclose(tuple(verbatim), tuple(exact))

    def test_verbatim_keeps_data_slot_energy(self):
        params = MacAnalysisParams(n=4, n_hat=4, W=20, d=2, gamma_I=0.1, gamma_T=1.0, gamma_R=0.6)
        verbatim = expected_energy(params, posterior='verbatim')
        self.assertAlmostEqual(verbatim.dt, expected_energy(params).dt)
        # either a finite value or NaN when the recursion diverged, never an infinity
        self.assertFalse(np.any(np.isinf((verbatim.ul, verbatim.dl))))

    def test_verbatim_divergence_is_reported(self):
        """W = 50, d = 1: la recursión con r_j marginal sale de [0, 1]"""
        for n in (5, 20):
            params = MacAnalysisParams(n=n, n_hat=n, W=50, d=1, gamma_I=0.05, gamma_T=1.0, gamma_R=0.5)
            with self.subTest(n=n):
                with self.assertLogs('analysis.contention', level='WARNING') as logs:
                    verbatim = expected_energy(params, posterior='verbatim')
                self.assertTrue(np.isnan(verbatim.ul))
                self.assertTrue(np.isnan(verbatim.dl))
                self.assertAlmostEqual(verbatim.dt, expected_energy(params).dt)
                self.assertIn('left [0, 1]', logs.output[0])

    def test_unknown_posterior(self):
        with self.assertRaises(InvalidParameterError):
            expected_energy(MacAnalysisParams(n=1, n_hat=1, W=3), posterior='approx')
