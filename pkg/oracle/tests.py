import itertools
from fractions import Fraction

from django.test import SimpleTestCase

from analysis.contention import MacAnalysisParams, pm_distribution
from analysis.estimation import EstimationParams, expected_K, expected_R
from core.exceptions import BudgetExceededError, InvalidParameterError
from core.randomness import RandomSource
from core.types import SlotOutcome
from estimators.decoder import decode_block, reachable_outcomes
from estimators.symbols import Protocol, symbol_matrix

from .budget import Exactness, OracleBudget
from .bruteforce import exact_expected_K_bruteforce, exact_expected_R_bruteforce
from .montecarlo import mc_frame_process, mc_phase_counts
from .profiles import enumerate_consistent_profiles
from .sums import nested_sum_pm


class ProfileOracleTests(SimpleTestCase):
    def test_all_empty(self):
        matrix = symbol_matrix(Protocol.METHOD2, 5)
        profiles = enumerate_consistent_profiles(matrix, (SlotOutcome.EMPTY,) * matrix.width)
        self.assertEqual(profiles, {(0, 0, 0, 0, 0)})

    def test_four_types_all_collision(self):
        matrix = symbol_matrix(Protocol.METHOD2, 4)
        profiles = enumerate_consistent_profiles(matrix, (SlotOutcome.COLLISION,) * 2)
        # Type 2 or Type 4 crowded, or both single, or Type 1 and 3 carrying the collisions
        self.assertIn((0, 2, 0, 0), profiles)
        self.assertIn((0, 1, 0, 1), profiles)
        self.assertIn((2, 0, 2, 0), profiles)
        self.assertIn((1, 1, 1, 0), profiles)
        self.assertNotIn((0, 0, 1, 0), profiles)
        self.assertNotIn((1, 0, 2, 0), profiles)

    def test_decoder_agrees_for_every_reachable_outcome(self):
        for protocol, T in [(Protocol.METHOD1, 2), (Protocol.METHOD1, 3), (Protocol.METHOD1, 5),
                            (Protocol.METHOD2, 4), (Protocol.METHOD2, 5), (Protocol.METHOD2, 6)]:
            matrix = symbol_matrix(protocol, T)
            for outcome in reachable_outcomes(matrix):
                profiles = enumerate_consistent_profiles(matrix, outcome)
                decoded = decode_block(matrix, outcome)
                with self.subTest(protocol=protocol, T=T, outcome=outcome):
                    self.assertEqual({tuple(int(c) for c in h) for h in decoded.hypotheses}, profiles)
                    for b in range(T):
                        seen = {p[b] for p in profiles}
                        self.assertEqual(b + 1 in decoded.active, 0 not in seen)
                        self.assertEqual(b + 1 in decoded.inactive, seen == {0})

    def test_unreachable_outcome_is_empty(self):
        matrix = symbol_matrix(Protocol.METHOD1, 3)
        self.assertEqual(enumerate_consistent_profiles(matrix, (SlotOutcome.EMPTY, SlotOutcome.ALPHA)), set())

    def test_budget(self):
        with self.assertRaises(BudgetExceededError):
            enumerate_consistent_profiles(symbol_matrix(Protocol.METHOD2, 6), (SlotOutcome.EMPTY,) * 3,
                                          budget=OracleBudget(max_profiles=100))

    def test_exactness_tags(self):
        self.assertIs(enumerate_consistent_profiles.exactness, Exactness.EXACT)
        self.assertIs(mc_frame_process.exactness, Exactness.STATISTICAL)


class NestedSumTests(SimpleTestCase):
    def test_no_success(self):
        params = MacAnalysisParams(n=3, n_hat=3, W=10, d=2)
        r = 3 * (1 / 3) * (2 / 3) ** 2
        self.assertAlmostEqual(nested_sum_pm(params, 0), (1 - r) ** 5, places=14)

    def test_single_node(self):
        self.assertEqual(nested_sum_pm(MacAnalysisParams(n=1, n_hat=1, W=3, d=1), 1), 1.0)

    def test_matches_dynamic_program(self):
        for W, d, n in itertools.product(range(11), range(1, 4), range(5)):
            params = MacAnalysisParams(n=n, n_hat=max(n, 1), W=W, d=d)
            pm = pm_distribution(params)
            for m, mass in enumerate(pm):
                with self.subTest(W=W, d=d, n=n, m=m):
                    self.assertAlmostEqual(nested_sum_pm(params, m), mass, delta=1e-12)

    def test_budget(self):
        with self.assertRaises(BudgetExceededError):
            nested_sum_pm(MacAnalysisParams(n=3, n_hat=3, W=40, d=1), 2)
        with self.assertRaises(BudgetExceededError):
            nested_sum_pm(MacAnalysisParams(n=9, n_hat=9, W=12, d=1), 5)


class BruteForceTests(SimpleTestCase):
    def test_no_active_nodes(self):
        self.assertEqual(exact_expected_K_bruteforce(EstimationParams(2, (0, 0), 3)), 0)

    def test_two_type1_nodes(self):
        """n = (2, 0), t = 2: sum of p_i^2"""
        value = exact_expected_K_bruteforce(EstimationParams(2, (2, 0), 2))
        self.assertEqual(value, Fraction(1, 4) + Fraction(1, 4))

    def test_matches_closed_form(self):
        for t in range(1, 4):
            for n1 in range(7):
                for n2 in range(7 - n1):
                    params = EstimationParams(2, (n1, n2), t)
                    with self.subTest(n=(n1, n2), t=t):
                        self.assertAlmostEqual(float(exact_expected_K_bruteforce(params)), expected_K(params),
                                               delta=1e-12)
                        self.assertAlmostEqual(float(exact_expected_R_bruteforce(params)), expected_R(params),
                                               delta=1e-12)

    def test_three_types(self):
        params = EstimationParams(3, (2, 1, 2), 3)
        self.assertAlmostEqual(float(exact_expected_K_bruteforce(params)), expected_K(params), delta=1e-12)

    def test_budget(self):
        with self.assertRaises(BudgetExceededError):
            exact_expected_K_bruteforce(EstimationParams(2, (4, 4), 3))
        with self.assertRaises(BudgetExceededError):
            exact_expected_R_bruteforce(EstimationParams(2, (1, 1), 5))


class MonteCarloOracleTests(SimpleTestCase):
    def test_no_active_nodes(self):
        tally = mc_frame_process(MacAnalysisParams(n=0, n_hat=1, W=30, d=2), 100, RandomSource(1))
        self.assertEqual(tally[['M', 'ul', 'dl', 'dt']].to_numpy().sum(), 0.0)
        self.assertFalse(tally['overflow'].any())

    def test_reproducible(self):
        params = MacAnalysisParams(n=4, n_hat=4, W=20, d=2, gamma_T=1.0)
        a = mc_frame_process(params, 500, RandomSource(9))
        b = mc_frame_process(params, 500, RandomSource(9))
        self.assertTrue(a.equals(b))

    def test_phase_counts_shape(self):
        counts = mc_phase_counts((3, 0, 1), 5, 200, RandomSource(2))
        self.assertEqual(list(counts.columns), ['K', 'R'])
        self.assertEqual(len(counts), 200)
        self.assertTrue((counts['R'] <= counts['K']).all())

    def test_rejects_bad_sizes(self):
        with self.assertRaises(InvalidParameterError):
            mc_frame_process(MacAnalysisParams(n=1, n_hat=1, W=3), 0, RandomSource(1))
        with self.assertRaises(BudgetExceededError):
            mc_phase_counts((1, 1), 3, 100, RandomSource(1), budget=OracleBudget(max_samples=10))
