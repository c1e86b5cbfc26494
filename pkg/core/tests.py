import itertools

import numpy as np
from django.test import SimpleTestCase

from .exceptions import InvalidParameterError
from .hashing import bitmap_length, draw_hash, draw_hashes, hash_bin, lsz_hash
from .randomness import RandomSource
from .slots import outcome_of_slot
from .types import BinaryId, NodePopulation, SlotOutcome, Symbol, TrafficClass, TrafficType


class LszHashTests(SimpleTestCase):
    def test_examples(self):
        """Test el hash del cero menos significativo"""
        self.assertEqual(lsz_hash(BinaryId.from_bits('01001001')), 1)
        self.assertEqual(lsz_hash(BinaryId.from_bits('00101111')), 4)
        self.assertEqual(lsz_hash(BinaryId.from_bits('11111111')), 8)
        self.assertEqual(lsz_hash(BinaryId.from_bits('0')), 0)

    def test_bits_round_trip(self):
        self.assertEqual(BinaryId.from_bits('00101111').bits, '00101111')

    def test_rejects_bad_ids(self):
        with self.assertRaises(InvalidParameterError):
            BinaryId(4, 2)
        with self.assertRaises(InvalidParameterError):
            BinaryId.from_bits('012')

    def test_uniform_ids_are_geometric(self):
        """P(h = i) = 2^-(i+1) over uniformly random IDs, within 3 sigma"""
        width, samples = 12, 200_000
        rng = RandomSource(7).generator()
        values = rng.integers(0, 1 << width, size=samples)
        hashes = np.array([lsz_hash(BinaryId(int(v), width)) for v in values])
        for i in range(6):
            p = 2.0 ** -(i + 1)
            sigma = np.sqrt(samples * p * (1 - p))
            self.assertLessEqual(abs((hashes == i).sum() - samples * p), 3 * sigma)


class DrawHashTests(SimpleTestCase):
    def test_single_bin(self):
        rng = RandomSource(1).generator()
        self.assertTrue(all(draw_hash(rng, 1) == 0 for _ in range(50)))

    def test_invalid_length(self):
        with self.assertRaises(InvalidParameterError):
            draw_hash(RandomSource(1).generator(), 0)

    def test_frequencies(self):
        """t = 4: P = (1/2, 1/4, 1/8, 1/8), within 3 sigma over 10^6 draws"""
        samples = 1_000_000
        draws = draw_hashes(RandomSource(3).generator(), 4, samples)
        for i, p in enumerate([0.5, 0.25, 0.125, 0.125]):
            sigma = np.sqrt(samples * p * (1 - p))
            self.assertLessEqual(abs((draws == i).sum() - samples * p), 3 * sigma)
        self.assertEqual(draws.max(), 3)

    def test_bitmap_length_and_bins(self):
        self.assertEqual(bitmap_length(100), 7)
        self.assertEqual(bitmap_length(128), 7)
        self.assertEqual(bitmap_length(1), 1)
        self.assertEqual(hash_bin(9, 7), 6)
        self.assertEqual(hash_bin(2, 7), 2)


class SlotOutcomeTests(SimpleTestCase):
    def test_outcomes(self):
        self.assertEqual(outcome_of_slot([]), SlotOutcome.EMPTY)
        self.assertEqual(outcome_of_slot([Symbol.ALPHA]), SlotOutcome.ALPHA)
        self.assertEqual(outcome_of_slot([Symbol.BETA]), SlotOutcome.BETA)
        self.assertEqual(outcome_of_slot([Symbol.ALPHA, Symbol.BETA]), SlotOutcome.COLLISION)
        self.assertEqual(outcome_of_slot([Symbol.BETA, Symbol.BETA]), SlotOutcome.COLLISION)

    def test_permutation_invariance(self):
        symbols = [Symbol.ALPHA, Symbol.BETA, Symbol.ALPHA]
        results = {outcome_of_slot(list(p)) for p in itertools.permutations(symbols)}
        self.assertEqual(results, {SlotOutcome.COLLISION})

    def test_parse(self):
        self.assertEqual(SlotOutcome.parse('0'), SlotOutcome.EMPTY)
        self.assertEqual(SlotOutcome.parse('β'), SlotOutcome.BETA)
        with self.assertRaises(InvalidParameterError):
            SlotOutcome.parse('x')


class RandomSourceTests(SimpleTestCase):
    def test_same_labels_replay(self):
        """Misma semilla y etiquetas, misma secuencia"""
        a = RandomSource(42).child('hash', 3, 17).generator().random(5)
        b = RandomSource(42).child('hash', 3, 17).generator().random(5)
        np.testing.assert_array_equal(a, b)

    def test_distinct_labels_differ(self):
        a = RandomSource(42).child('hash', 3, 17).generator().random(5)
        b = RandomSource(42).child('hash', 3, 18).generator().random(5)
        c = RandomSource(43).child('hash', 3, 17).generator().random(5)
        self.assertFalse(np.array_equal(a, b))
        self.assertFalse(np.array_equal(a, c))

    def test_rejects_negative_seed(self):
        with self.assertRaises(InvalidParameterError):
            RandomSource(-1)


class PopulationTests(SimpleTestCase):
    def test_bernoulli_population(self):
        pop = NodePopulation.bernoulli([100, 100, 100], [0.0, 1.0, 0.5], RandomSource(5))
        self.assertEqual(pop.T, 3)
        self.assertEqual(pop.id_bits, 15)
        self.assertEqual(pop.n_all, 100)
        counts = pop.active_counts()
        self.assertEqual(counts[0], 0)
        self.assertEqual(counts[1], 100)
        ids = {node.binary_id.value for nodes in pop.types for node in nodes}
        self.assertEqual(len(ids), 300)

    def test_from_counts(self):
        pop = NodePopulation.from_counts([3, 0, 2], RandomSource(5), sizes=[10, 10, 10])
        self.assertEqual(pop.active_counts(), (3, 0, 2))
        self.assertEqual(len(pop.restrict(1).types), 1)

    def test_traffic_labels(self):
        self.assertEqual(TrafficType.for_index(1, 3).label, TrafficClass.EMERGENCY)
        self.assertEqual(TrafficType.for_index(3, 3).name, 'normal')
        self.assertEqual(TrafficType.for_index(3, 4).name, 'type3')
