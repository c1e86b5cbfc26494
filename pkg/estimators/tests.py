import itertools

import numpy as np
from django.test import SimpleTestCase

from core.exceptions import InvalidParameterError, ProtocolViolationError
from core.randomness import RandomSource
from core.types import HashingMode, NodePopulation, SlotOutcome

from .assignment import HashAssignment, assign_hashes
from .decoder import (
    ConstraintKind, MultiplicityClass, Verdict, ambiguity_family, bp_bits, bp_length,
    decode_block, reachable_outcomes,
)
from .lof import LOF_CONSTANT, Bitmap, lof_estimate
from .protocols import (
    baseline_from_hashes, method1_from_hashes, method2_from_hashes, run_lof, run_method1,
    run_method2, run_t_lof_baseline,
)
from .report import write_trace
from .symbols import Protocol, symbol_matrix
from .tables import METHOD2_VERDICTS, method2_t4_consistency_set, table_mismatches


def outcome(text):
    return tuple(SlotOutcome.parse(ch) for ch in text)


def decode(protocol, T, text):
    return decode_block(symbol_matrix(protocol, T), outcome(text))


class LofTests(SimpleTestCase):
    def test_lof_estimate_examples(self):
        self.assertEqual(lof_estimate(Bitmap.from_string('0000')), (0, LOF_CONSTANT))
        rho, n_hat = lof_estimate(Bitmap.from_string('1101'))
        self.assertEqual(rho, 2)
        self.assertAlmostEqual(n_hat, 5.1588)
        rho, n_hat = lof_estimate(Bitmap.from_string('11111'))
        self.assertEqual(rho, 5)
        self.assertAlmostEqual(n_hat, 41.2704)

    def test_run_lof_without_active_nodes(self):
        pop = NodePopulation.from_counts([0], RandomSource(1), sizes=[100])
        report, slots = run_lof(pop, RandomSource(1))
        self.assertEqual(slots, 7)
        self.assertEqual(report.rho, (0,))
        self.assertEqual(report.n_hat, (LOF_CONSTANT,))
        self.assertEqual(report.slots_total, 7)

    def test_lof_log_domain_unbiased(self):
        """1.2897 * 2^E[rho] tracks n = 64 within 15%"""
        pop = NodePopulation.from_counts([64], RandomSource(11), sizes=[64], n_all=1 << 15)
        source = RandomSource(12)
        rhos = [run_lof(pop, source, frame=k)[0].rho[0] for k in range(2000)]
        estimate = LOF_CONSTANT * 2 ** np.mean(rhos)
        self.assertLess(abs(estimate - 64) / 64, 0.15)


class SymbolMatrixTests(SimpleTestCase):
    def test_method2_rows(self):
        self.assertEqual(symbol_matrix(Protocol.METHOD2, 4).describe(), ['α0', 'αα', '0β', 'ββ'])
        self.assertEqual(symbol_matrix(Protocol.METHOD2, 5).describe(), ['α0', 'αα', '0β', 'ββ', 'βα'])
        self.assertEqual(symbol_matrix(Protocol.METHOD2, 6).describe(),
                         ['α00', 'αα0', 'ααα', '00β', '0ββ', 'βββ'])

    def test_method1_rows(self):
        self.assertEqual(symbol_matrix(Protocol.METHOD1, 3).describe(), ['αα', 'β0', '0β'])

    def test_small_T_falls_back_to_method1(self):
        self.assertEqual(symbol_matrix(Protocol.METHOD2, 3), symbol_matrix(Protocol.METHOD1, 3))

    def test_invalid_T(self):
        with self.assertRaises(InvalidParameterError):
            symbol_matrix(Protocol.METHOD1, 1)

    def test_rows_distinct_for_larger_T(self):
        for T in range(2, 10):
            rows = symbol_matrix(Protocol.METHOD2, T).rows
            self.assertEqual(len(set(rows)), T)


class TableOneTests(SimpleTestCase):
    """Method I, T = 3: slot outcomes -> activity bits"""

    ROWS = {
        'EE': (0, 0, 0), 'EC': (0, 0, 1), 'Eβ': (0, 0, 1),
        'CE': (0, 1, 0), 'Cα': (1, 1, 0), 'Cβ': (0, 1, 1),
        'αC': (1, 0, 1), 'αα': (1, 0, 0), 'βE': (0, 1, 0),
        'βC': (0, 1, 1), 'ββ': (0, 1, 1),
    }

    def test_rows(self):
        for text, bits in self.ROWS.items():
            with self.subTest(outcome=text):
                self.assertEqual(decode(Protocol.METHOD1, 3, text).bits, bits)

    def test_star_row(self):
        decoded = decode(Protocol.METHOD1, 3, 'CC')
        self.assertEqual(decoded.ambiguous, frozenset({1, 2, 3}))
        self.assertTrue(decoded.all_collision)
        self.assertEqual([c.kind for c in decoded.constraints], [ConstraintKind.JOINT])

    def test_unreachable(self):
        for text in ('Eα', 'αE', 'αβ', 'βα'):
            with self.subTest(outcome=text):
                with self.assertRaises(ProtocolViolationError):
                    decode(Protocol.METHOD1, 3, text)

    def test_reachable_set(self):
        reachable = {''.join(o.value for o in oc) for oc in reachable_outcomes(symbol_matrix(Protocol.METHOD1, 3))}
        self.assertEqual(reachable, set(self.ROWS) | {'CC'})

    def test_wrong_length(self):
        with self.assertRaises(InvalidParameterError):
            decode(Protocol.METHOD1, 3, 'CCC')


class AmbiguityTableTests(SimpleTestCase):
    """Tablas de inferencia de Method II para T = 4, 5, 6"""

    def check(self, T, text, active, inactive, constraints):
        decoded = decode(Protocol.METHOD2, T, text)
        self.assertEqual(decoded.active, frozenset(active), text)
        self.assertEqual(decoded.inactive, frozenset(inactive), text)
        got = {(c.kind, frozenset(c.types)) for c in decoded.constraints}
        self.assertEqual(got, {(k, frozenset(ts)) for k, ts in constraints}, text)

    def test_table_two(self):
        one_of = ConstraintKind.EXACTLY_ONE_OF
        self.check(4, 'CE', {1}, {2, 3, 4}, [])
        self.check(4, 'Cα', {1, 2}, {3, 4}, [])
        self.check(4, 'Cβ', {1}, {2}, [(one_of, {3, 4})])
        self.check(4, 'EC', {3}, {1, 2, 4}, [])
        self.check(4, 'αC', {3}, {4}, [(one_of, {1, 2})])
        self.check(4, 'βC', {3, 4}, {1, 2}, [])

    def test_table_three_consistency_set(self):
        star = set(MultiplicityClass)
        at_least_one = {MultiplicityClass.ONE, MultiplicityClass.TWO_PLUS}
        two_plus = {MultiplicityClass.TWO_PLUS}
        one, zero = {MultiplicityClass.ONE}, {MultiplicityClass.ZERO}
        rows = [
            (star, two_plus, star, star),
            (star, star, star, two_plus),
            (star, one, star, one),
            (at_least_one, one, at_least_one, zero),
            (at_least_one, zero, at_least_one, one),
            (two_plus, zero, two_plus, zero),
        ]
        expected = set()
        for row in rows:
            expected.update(itertools.product(*row))
        self.assertEqual(set(decode(Protocol.METHOD2, 4, 'CC').hypotheses), expected)

    def test_table_four(self):
        one_of = ConstraintKind.EXACTLY_ONE_OF
        self.check(5, 'CE', {1}, {2, 3, 4, 5}, [])
        self.check(5, 'Cα', {1}, {3, 4}, [(one_of, {2, 5})])
        self.check(5, 'Cβ', {1}, {2, 5}, [(one_of, {3, 4})])
        self.check(5, 'EC', {3}, {1, 2, 4, 5}, [])
        self.check(5, 'αC', {3}, {4, 5}, [(one_of, {1, 2})])
        self.check(5, 'βC', {3}, {1, 2}, [(one_of, {4, 5})])

    def test_table_five(self):
        one_of, single = ConstraintKind.EXACTLY_ONE_OF, ConstraintKind.INDEPENDENT
        self.check(6, 'Cββ', {1}, {2, 3, 4}, [(one_of, {5, 6})])
        self.check(6, 'ααC', {4}, {1, 5, 6}, [(one_of, {2, 3})])
        self.check(6, 'CCE', {2}, {3, 4, 5, 6}, [(single, {1})])
        self.check(6, 'CCα', {2, 3}, {4, 5, 6}, [(single, {1})])
        self.check(6, 'CCβ', {2}, {3}, [(single, {1}), (one_of, {4, 5, 6})])
        self.check(6, 'ECC', {5}, {1, 2, 3, 6}, [(single, {4})])
        self.check(6, 'αCC', {5}, {6}, [(single, {4}), (one_of, {1, 2, 3})])
        self.check(6, 'βCC', {5, 6}, {1, 2, 3}, [(single, {4})])
        self.check(6, 'CαC', {1, 4}, {5, 6}, [(one_of, {2, 3})])
        self.check(6, 'CβC', {1, 4}, {2, 3}, [(one_of, {5, 6})])

    def test_table_five_is_complete(self):
        """Only the ten listed outcomes (plus CCC) leave T = 6 ambiguous"""
        matrix = symbol_matrix(Protocol.METHOD2, 6)
        ambiguous = {''.join(o.value for o in oc) for oc in reachable_outcomes(matrix)
                     if not decode_block(matrix, oc).resolved}
        self.assertEqual(ambiguous, {'Cββ', 'ααC', 'CCE', 'CCα', 'CCβ', 'ECC', 'αCC', 'βCC',
                                     'CαC', 'CβC', 'CCC'})

    def test_all_empty(self):
        for T in range(2, 8):
            matrix = symbol_matrix(Protocol.METHOD2, T)
            decoded = decode_block(matrix, (SlotOutcome.EMPTY,) * matrix.width)
            self.assertTrue(all(v is Verdict.INACTIVE for v in decoded.verdicts))

    def test_ambiguity_families(self):
        self.assertEqual(ambiguity_family(Protocol.METHOD2, 4),
                         {frozenset(), frozenset({3, 4}), frozenset({1, 2}), frozenset({1, 2, 3, 4})})
        self.assertEqual(ambiguity_family(Protocol.METHOD2, 5), {
            frozenset(), frozenset({2, 5}), frozenset({3, 4}), frozenset({1, 2}),
            frozenset({4, 5}), frozenset({1, 2, 3, 4, 5})})
        self.assertEqual(ambiguity_family(Protocol.METHOD2, 6), {
            frozenset(), frozenset({5, 6}), frozenset({2, 3}), frozenset({1}),
            frozenset({1, 4, 5, 6}), frozenset({4}), frozenset({1, 2, 3, 4}),
            frozenset(range(1, 7))})
        self.assertEqual([bp_bits(Protocol.METHOD2, T) for T in (3, 4, 5, 6)], [1, 2, 3, 3])
        self.assertEqual(bp_length(Protocol.METHOD2, 4, 7, 5), 3)
        self.assertEqual(bp_length(Protocol.METHOD2, 5, 7, 5), 5)


class ReferenceTableTests(SimpleTestCase):
    def test_decoder_reproduces_tables(self):
        self.assertEqual(table_mismatches(), [])

    def test_consistency_set_membership(self):
        profiles = method2_t4_consistency_set()
        self.assertTrue(all(len(p) == 4 for p in profiles))
        self.assertIn((MultiplicityClass.ZERO, MultiplicityClass.TWO_PLUS, MultiplicityClass.ZERO,
                       MultiplicityClass.ZERO), profiles)
        self.assertNotIn((MultiplicityClass.ONE, MultiplicityClass.ZERO, MultiplicityClass.ZERO,
                          MultiplicityClass.ZERO), profiles)

    def test_verdict_tables_cover_t4_to_t6(self):
        self.assertEqual(sorted(METHOD2_VERDICTS), [4, 5, 6])


class MethodOneTests(SimpleTestCase):
    def test_inactive_population(self):
        for T in (2, 3, 4):
            report = method1_from_hashes(HashAssignment(7, ((),) * T), 5)
            self.assertEqual(report.slots_total, (T - 1) * 7 + 2)
            self.assertEqual(report.n_hat, (LOF_CONSTANT,) * T)

    def test_slot_accounting_fixture(self):
        """T = 3, t = 7, |C_I| = 2, |C_II| = 1 -> 21 slots"""
        counts = np.zeros((3, 7), dtype=int)
        counts[:, 0] = (2, 1, 1)
        counts[:, 1] = (0, 2, 2)
        report = method1_from_hashes(HashAssignment.from_counts(counts), 5)
        self.assertEqual((report.slots_phase1, report.slots_bp, report.slots_phase2, report.slots_phase3),
                         (14, 3, 2, 2))
        self.assertEqual(report.slots_total, 21)
        self.assertEqual(len(report.trace), 21)
        self.assertEqual([str(bm) for bm in report.bitmaps], ['1000000', '1100000', '1100000'])

    def test_phase_participation(self):
        counts = np.zeros((3, 7), dtype=int)
        counts[:, 0] = (2, 1, 1)
        report = method1_from_hashes(HashAssignment.from_counts(counts), 5)
        phase2 = [r for r in report.trace if r.phase == 'phase2']
        self.assertTrue(all('type 1' in r.note for r in phase2))
        phase3 = [r for r in report.trace if r.phase == 'phase3']
        self.assertTrue(all(r.note.startswith('block 0') for r in phase3))

    def test_no_unreachable_outcomes_in_traces(self):
        forbidden = {outcome('Eα'), outcome('αE'), outcome('αβ'), outcome('βα')}
        source = RandomSource(21)
        for k in range(300):
            pop = NodePopulation.bernoulli([20, 20, 20], [0.1, 0.05, 0.2], source.child('pop', k))
            report = run_method1(pop, 3, 5, source, frame=k)
            phase1 = [r.outcome for r in report.trace if r.phase == 'phase1']
            pairs = {tuple(phase1[j:j + 2]) for j in range(0, len(phase1), 2)}
            self.assertFalse(pairs & forbidden)


class MethodTwoTests(SimpleTestCase):
    def test_inactive_population(self):
        for T, eta in ((4, 2), (5, 2), (6, 3)):
            report = method2_from_hashes(HashAssignment(7, ((),) * T), 5)
            self.assertEqual(report.slots_total, eta * 7 + bp_length(Protocol.METHOD2, T, 7, 5))

    def test_small_T_matches_method1(self):
        counts = np.array([[3, 1, 0, 0], [1, 2, 1, 0], [0, 2, 0, 1]])
        a = method1_from_hashes(HashAssignment.from_counts(counts), 5)
        b = method2_from_hashes(HashAssignment.from_counts(counts), 5)
        self.assertEqual(a.slots_total, b.slots_total)
        self.assertEqual(b.protocol, 'method2')

    def test_ccbeta_costs_two_slots(self):
        """T = 6, block C C beta: Type-1 probe plus one alpha/beta/silence probe"""
        counts = np.zeros((6, 1), dtype=int)
        counts[:, 0] = (1, 2, 0, 0, 0, 1)
        report = method2_from_hashes(HashAssignment.from_counts(counts), 5)
        self.assertEqual(report.slots_phase2, 2)
        self.assertEqual(report.slots_phase1, 3)

    def test_all_collision_recursion(self):
        counts = np.zeros((4, 1), dtype=int)
        counts[:, 0] = (2, 2, 2, 2)
        report = method2_from_hashes(HashAssignment.from_counts(counts), 5)
        # each pair: joint slot, lead probe, second probe
        self.assertEqual(report.slots_phase2, 6)
        self.assertEqual([str(bm) for bm in report.bitmaps], ['1'] * 4)

    def test_large_T_resolves(self):
        source = RandomSource(5)
        for T in (7, 8):
            for k in range(20):
                pop = NodePopulation.bernoulli([30] * T, [0.3] * T, source.child(T, k))
                report = run_method2(pop, T, 5, source, frame=k)
                self.assertEqual(len(report.trace), report.slots_total)


class EquivalenceTests(SimpleTestCase):
    def check_realizations(self, T, runs):
        source = RandomSource(1000 + T)
        rng = source.child('activity').generator()
        for k in range(runs):
            q = rng.uniform(0.0, 0.6, size=T)
            pop = NodePopulation.bernoulli([40] * T, q, source.child('pop', k))
            assignment = assign_hashes(pop, source, HashingMode.REDRAW, frame=k)
            reports = [method1_from_hashes(assignment), method2_from_hashes(assignment),
                       baseline_from_hashes(assignment)]
            estimates = {(r.rho, r.n_hat) for r in reports}
            self.assertEqual(len(estimates), 1, f"T={T} run {k}")
            for r in reports:
                self.assertEqual(len(r.trace), r.slots_total)

    def test_equivalence(self):
        """Misma asignación de hashes, mismas estimaciones en los tres protocolos"""
        for T in range(2, 7):
            with self.subTest(T=T):
                self.check_realizations(T, 400)

    def test_baseline_matches_population_runs(self):
        source = RandomSource(77)
        pop = NodePopulation.bernoulli([100] * 4, [0.1, 0.3, 0.5, 0.05], source)
        for mode in HashingMode:
            baseline = run_t_lof_baseline(pop, 4, source, mode)
            method1 = run_method1(pop, 4, 5, source, mode)
            method2 = run_method2(pop, 4, 5, source, mode)
            self.assertEqual(baseline.slots_total, 28)
            self.assertEqual(baseline.rho, method1.rho)
            self.assertEqual(baseline.rho, method2.rho)

    def test_type_count_mismatch(self):
        pop = NodePopulation.bernoulli([10] * 3, [0.5] * 3, RandomSource(1))
        with self.assertRaises(InvalidParameterError):
            run_method1(pop, 4, 5, RandomSource(1))


class TraceTests(SimpleTestCase):
    def test_trace_frame_and_file(self):
        import os
        import tempfile

        counts = np.zeros((3, 7), dtype=int)
        counts[:, 0] = (2, 1, 1)
        report = method1_from_hashes(HashAssignment.from_counts(counts), 5)
        frame = report.trace_frame()
        self.assertEqual(len(frame), report.slots_total)
        self.assertEqual(list(frame['phase'].unique()), ['phase1', 'bp', 'phase2', 'phase3'])
        with tempfile.TemporaryDirectory() as tmp:
            path = write_trace(report, os.path.join(tmp, 'trace.csv.gz'))
            self.assertTrue(os.path.getsize(path) > 0)

    def test_deterministic_replay(self):
        pop = NodePopulation.bernoulli([50] * 3, [0.2] * 3, RandomSource(9))
        a = run_method1(pop, 3, 5, RandomSource(9), frame=4)
        b = run_method1(pop, 3, 5, RandomSource(9), frame=4)
        self.assertEqual(a.trace, b.trace)
