import numpy as np
import pytest
from django.test import SimpleTestCase

from analysis.contention import MacAnalysisParams, expected_M
from core.exceptions import InvalidParameterError
from core.randomness import RandomSource
from estimators.symbols import Protocol, symbol_matrix
from oracle.montecarlo import mc_frame_process

from .cdtw import CdtwPolicy, Contender, EnergyModel, run_cdtw_channel
from .channels import (
    ChannelModel, allocate_channels, broadcast_window_1, schedule_estimation_slots, sense_channels,
)
from .frame import (
    PERIODIC, ClassTally, FrameConfig, Mode, NodeState, SimulationState, _charge_estimation, _reassign,
    place_reservations, run_frame,
)
from .simulation import batch_means_ci, run_simulation


def exact_counts(state, contenders):
    return tuple(len(nodes) for nodes in contenders), 0


class ChannelSensingTests(SimpleTestCase):
    def test_extremes(self):
        rng = RandomSource(1).generator()
        self.assertEqual(sense_channels(ChannelModel((0.0, 0.0, 0.0)), rng), (0, 1, 2))
        self.assertEqual(sense_channels(ChannelModel.uniform(4, 1.0), rng), ())

    def test_free_list_is_sorted_by_z(self):
        model = ChannelModel((0.3, 0.0, 0.1))
        self.assertEqual(model.order, (1, 2, 0))
        rng = RandomSource(2).generator()
        for _ in range(50):
            free = sense_channels(model, rng)
            self.assertEqual(list(free), [i for i in model.order if i in free])

    def test_frequencies(self):
        """Channel i is free with probability 1 - z_i, within 3 sigma"""
        model, draws = ChannelModel((0.2, 0.7)), 20_000
        rng = RandomSource(3).generator()
        seen = np.zeros(2)
        for _ in range(draws):
            for i in sense_channels(model, rng):
                seen[i] += 1
        for i, z in enumerate(model.z):
            sigma = np.sqrt(draws * z * (1 - z))
            self.assertLessEqual(abs(seen[i] - draws * (1 - z)), 3 * sigma)

    def test_rejects_bad_probabilities(self):
        with self.assertRaises(InvalidParameterError):
            ChannelModel((0.5, 1.5))
        with self.assertRaises(InvalidParameterError):
            ChannelModel(())


class BroadcastWindowTests(SimpleTestCase):
    def test_scan_length(self):
        model = ChannelModel((0.5, 0.1, 0.9))
        self.assertEqual(broadcast_window_1(model, (1, 0)).listen_slots, 1)
        self.assertEqual(broadcast_window_1(model, (0, 2)).listen_slots, 2)
        self.assertEqual(broadcast_window_1(model, (2,)).listen_slots, 3)
        self.assertEqual(broadcast_window_1(model, ()).listen_slots, 0)


class EstimationScheduleTests(SimpleTestCase):
    def test_striping(self):
        schedule = schedule_estimation_slots(5, (7, 3))
        self.assertEqual(schedule, {1: (7, 1), 2: (3, 1), 3: (7, 2), 4: (3, 2), 5: (7, 3)})

    def test_single_channel(self):
        schedule = schedule_estimation_slots(4, (2,))
        self.assertEqual([slot for _, slot in schedule.values()], [1, 2, 3, 4])

    def test_empty_and_invalid(self):
        self.assertEqual(schedule_estimation_slots(0, (1,)), {})
        with self.assertRaises(InvalidParameterError):
            schedule_estimation_slots(3, ())
        with self.assertRaises(InvalidParameterError):
            schedule_estimation_slots(-1, (1,))


class ChannelAllocationTests(SimpleTestCase):
    def test_even_split(self):
        plan = allocate_channels((3, 3, 3), (1, 1, 1), tuple(range(9)))
        self.assertEqual(plan.sizes, (3, 3, 3))
        self.assertEqual(plan.probabilities, (1.0, 1.0, 1.0))

    def test_proportional_split(self):
        plan = allocate_channels((3, 2, 1), (1, 1, 1), tuple(range(6)))
        self.assertEqual(plan.sizes, (3, 2, 1))
        self.assertEqual(plan.channels[0], (0, 1, 2))

    def test_contention_probability(self):
        plan = allocate_channels((10, 0, 0), (1, 1, 1), (4, 5))
        self.assertEqual(plan.sizes, (2, 0, 0))
        self.assertAlmostEqual(plan.probabilities[0], 0.2)
        self.assertAlmostEqual(plan.per_channel_estimate(0), 5.0)

    def test_every_wanting_class_gets_a_channel(self):
        plan = allocate_channels((100, 1, 1), (1, 1, 1), (0, 1, 2))
        self.assertEqual(plan.sizes, (1, 1, 1))

    def test_emergency_takes_the_best_channels(self):
        free = (4, 0, 2, 1)
        plan = allocate_channels((2, 1, 1), (2, 1, 1), free)
        self.assertEqual(sum(plan.sizes), len(free))
        self.assertEqual(plan.channels[0], free[:plan.sizes[0]])

    def test_no_demand(self):
        plan = allocate_channels((0, 0, 0), (1, 1, 1), (0, 1))
        self.assertEqual(plan.sizes, (0, 0, 0))

    def test_reservation_holders_count_as_demand(self):
        plan = allocate_channels((0, 0, 0), (1, 1, 1), (0, 1, 2), reserved=(0, 2, 0))
        self.assertEqual(plan.sizes, (0, 3, 0))
        # holders do not contend
        self.assertEqual(plan.per_channel_estimate(1), 0.0)
        self.assertEqual(plan.probabilities[1], 1.0)

    def test_rejects_bad_reserved_counts(self):
        with self.assertRaises(InvalidParameterError):
            allocate_channels((1, 1, 1), (1, 1, 1), (0, 1), reserved=(0, -1, 0))
        with self.assertRaises(InvalidParameterError):
            allocate_channels((1, 1, 1), (1, 1, 1), (0, 1), reserved=(0, 1))


class CdtwChannelTests(SimpleTestCase):
    def test_no_contenders_releases(self):
        log = run_cdtw_channel([], 0.0, 20, RandomSource(1).generator())
        self.assertTrue(log.released)
        self.assertEqual(log.attempts, 3)
        self.assertEqual(log.leftover, 14)

    def test_single_contender(self):
        log = run_cdtw_channel([Contender('a', 3)], 1.0, 20, RandomSource(1).generator(), cap=5)
        self.assertEqual(log.grants[0].slots, 3)
        self.assertEqual(log.attempts, 4)
        self.assertTrue(log.released)
        self.assertEqual(log.leftover, 20 - 8 - 3)

    def test_periodic_grant_reserves_future_frames(self):
        log = run_cdtw_channel([Contender('p', 4)], 1.0, 20, RandomSource(1).generator(), cap=3, periodic=True)
        self.assertEqual(log.grants[0].slots, 1)
        self.assertEqual(log.grants[0].future_frames, 2)

    def test_grant_is_capped_by_room(self):
        log = run_cdtw_channel([Contender('a', 50)], 1.0, 6, RandomSource(1).generator(), cap=50,
                               pre_reserved=1)
        self.assertEqual(log.grants[0].slots, 3)
        self.assertFalse(log.released)

    def test_no_double_booking(self):
        rng = RandomSource(4).generator()
        for run in range(300):
            n = int(rng.integers(0, 12))
            window = int(rng.integers(0, 40))
            pre = int(rng.integers(0, window + 1)) if window else 0
            contenders = [Contender(i, int(rng.integers(1, 8))) for i in range(n)]
            log = run_cdtw_channel(contenders, max(n, 1), window, rng, cap=4, pre_reserved=pre)
            with self.subTest(run=run):
                self.assertLessEqual(2 * log.attempts + log.reserved, window)
                self.assertEqual(len({g.key for g in log.grants}), log.successes)
                self.assertGreaterEqual(log.leftover, 0)

    def test_energy_of_a_lone_transmitter(self):
        energy = EnergyModel(gamma_I=0.0, gamma_T=1.0, gamma_R=0.0)
        log = run_cdtw_channel([Contender('a', 2)], 1.0, 10, RandomSource(1).generator(), cap=5, energy=energy)
        # one UL transmission plus two data slots
        self.assertEqual(log.energy_T, 3.0)

    def test_rejects_overbooked_window(self):
        with self.assertRaises(InvalidParameterError):
            run_cdtw_channel([], 1.0, 3, RandomSource(1).generator(), pre_reserved=4)

    def test_analysis_policy_matches_closed_form(self):
        """E[M] of the constant-grant window against the chain and the frame-process oracle"""
        params = MacAnalysisParams(n=5, n_hat=5, W=30, d=2, gamma_I=0.05, gamma_T=1.0, gamma_R=0.5)
        runs = 4000
        source = RandomSource(11)
        wins = np.array([
            0 if log.overflow else log.successes
            for log in (run_cdtw_channel([Contender(i, 1) for i in range(params.n)], params.n_hat, params.W,
                                         source.child('cdtw', i).generator(), policy=CdtwPolicy.ANALYSIS,
                                         d=params.d)
                        for i in range(runs))
        ])
        sigma = wins.std() / np.sqrt(runs)
        self.assertLessEqual(abs(wins.mean() - expected_M(params)), 4 * sigma)
        oracle = mc_frame_process(params, runs, RandomSource(12))
        self.assertLessEqual(abs(wins.mean() - oracle['M'].mean()), 6 * sigma)


class FrameTests(SimpleTestCase):
    def config(self, **kwargs):
        return FrameConfig(channels=ChannelModel.uniform(5, 0.2), nodes_per_class=10, **kwargs)

    def test_no_traffic(self):
        record = run_simulation(self.config(arrival_rates=(0.0, 0.0, 0.0)), 20, seed=1)
        frames = record.per_frame
        for column in ('arrivals', 'deliveries', 'successes', 'energy_T', 'energy_R', 'energy_I', 'queued'):
            self.assertEqual(frames[column].sum(), 0, column)

    def test_no_free_channel_sleeps(self):
        config = FrameConfig(channels=ChannelModel.uniform(3, 1.0), nodes_per_class=10,
                             arrival_rates=(0.5, 0.5, 0.5))
        record = run_simulation(config, 10, seed=2)
        frames = record.per_frame
        self.assertEqual(frames['deliveries'].sum(), 0)
        self.assertEqual(frames['cdtw_slots'].sum(), 0)
        self.assertEqual(frames['energy_T'].sum(), 0)
        self.assertGreater(frames['energy_R'].sum(), 0)

    def test_packet_conservation(self):
        record = run_simulation(self.config(arrival_rates=(0.3, 0.2, 0.4)), 40, seed=3)
        for name, frames in record.per_frame.groupby('class'):
            with self.subTest(cls=name):
                self.assertEqual(frames['arrivals'].sum(),
                                 frames['deliveries'].sum() + frames['queued'].iloc[-1])

    def test_deterministic_replay(self):
        config = self.config(arrival_rates=(0.2, 0.2, 0.2))
        self.assertTrue(run_simulation(config, 15, seed=9).equals(run_simulation(config, 15, seed=9)))

    def test_ideal_mode_is_the_exact_estimator(self):
        config = self.config(arrival_rates=(0.2, 0.3, 0.2))
        ideal = run_simulation(config, 15, seed=4, mode=Mode.IDEAL)
        forced = run_simulation(config, 15, seed=4, estimator=exact_counts)
        self.assertTrue(ideal.per_frame.equals(forced.per_frame))
        self.assertEqual(ideal.per_frame['ew_slots'].sum(), 0)

    def test_estimation_window_takes_slots(self):
        record = run_simulation(self.config(arrival_rates=(0.2, 0.2, 0.2)), 10, seed=5)
        awake = record.per_frame[record.per_frame['bw1_slots'] > 0]
        self.assertTrue((awake['ew_slots'] > 0).all())
        total = awake['bw1_slots'] + awake['ew_slots'] + awake['cdtw_slots'] + 3
        self.assertTrue((total <= 50).all())

    def test_estimation_trace(self):
        record = run_simulation(self.config(arrival_rates=(0.3, 0.3, 0.3)), 8, seed=5, trace=True)
        trace = record.trace
        self.assertIn('time_slot', trace.columns)
        ew = record.per_frame.groupby('frame')['ew_slots'].first()
        for f, slots in trace.groupby('frame'):
            self.assertEqual(slots['time_slot'].max(), ew[f])
        self.assertIsNone(run_simulation(self.config(), 3, seed=5).trace)

    def test_frame_counter_advances(self):
        config = self.config()
        source = RandomSource(6)
        state = SimulationState.initial(config, source)
        rows = run_frame(state, Mode.PROPOSED, source)
        self.assertEqual(state.frame, 1)
        self.assertEqual([row['class'] for row in rows], ['emergency', 'periodic', 'normal'])

    def test_rejects_bad_configs(self):
        with self.assertRaises(InvalidParameterError):
            self.config(weights=(1.0, 2.0, 3.0))
        with self.assertRaises(InvalidParameterError):
            self.config(arrival_rates=(0.1, 0.1))
        with self.assertRaises(InvalidParameterError):
            self.config(slots_per_frame=8)
        with self.assertRaises(InvalidParameterError):
            run_simulation(self.config(), 10, seed=1, warmup=10)


class ReservationTests(SimpleTestCase):
    """Nodos periódicos con reserva: un slot por trama, sin contención"""

    def holder_state(self, holders=5, packets=3, M_T=5):
        config = FrameConfig(channels=ChannelModel.uniform(M_T, 0.0), nodes_per_class=20,
                             arrival_rates=(0.0, 0.0, 0.0))
        source = RandomSource(21)
        state = SimulationState.initial(config, source)
        for node in state.nodes[PERIODIC][:holders]:
            node.queue.extend([0] * packets)
            node.reservations_left = packets
        return state, source

    def test_holders_without_contenders_are_served(self):
        for mode in (Mode.IDEAL, Mode.PROPOSED):
            state, source = self.holder_state()
            with self.subTest(mode=mode):
                delivered = [run_frame(state, mode, source)[PERIODIC]['deliveries'] for _ in range(3)]
                self.assertEqual(delivered, [5, 5, 5])
                self.assertEqual(state.queued(PERIODIC), 0)
                self.assertEqual(state.holders(PERIODIC), [])

    def test_reserved_slot_is_collision_free(self):
        state, source = self.holder_state()
        rows = run_frame(state, Mode.PROPOSED, source)
        periodic = rows[PERIODIC]
        # one transmission per holder and no contention win
        self.assertEqual(periodic['energy_T'], 5 * EnergyModel().gamma_T)
        self.assertEqual(periodic['successes'], 0)
        self.assertEqual(periodic['mean_delay'], 0.0)

    def test_each_holder_is_served_once_per_frame(self):
        state, source = self.holder_state(holders=12, packets=3, M_T=3)
        holders = state.holders(PERIODIC)
        run_frame(state, Mode.IDEAL, source)
        self.assertEqual([len(node.queue) for node in holders], [2] * 12)
        self.assertEqual([node.reservations_left for node in holders], [2] * 12)

    def test_reservations_drain_with_the_queue(self):
        state, source = self.holder_state(holders=2, packets=4)
        state.nodes[PERIODIC][0].reservations_left = 2
        frames = 0
        while state.queued(PERIODIC) and frames < 20:
            run_frame(state, Mode.IDEAL, source)
            frames += 1
        self.assertEqual(state.queued(PERIODIC), 0)
        self.assertEqual(state.holders(PERIODIC), [])

    def test_placement_never_double_books(self):
        plan = allocate_channels((0, 0, 0), (1, 1, 1), (3, 0, 1, 2), reserved=(0, 9, 0))
        holders = [NodeState(PERIODIC, k) for k in range(9)]
        placed = place_reservations(holders, plan, window=2)
        self.assertTrue(all(len(nodes) <= 2 for nodes in placed.values()))
        keys = [node.key for nodes in placed.values() for node in nodes]
        self.assertEqual(len(keys), len(set(keys)))
        self.assertEqual(len(keys), 8)

    def test_no_periodic_channel_places_nobody(self):
        plan = allocate_channels((3, 0, 0), (1, 1, 1), (0, 1))
        placed = place_reservations([NodeState(PERIODIC, 0)], plan, window=10)
        self.assertEqual(sum(len(nodes) for nodes in placed.values()), 0)


class FrameAccountingTests(SimpleTestCase):
    def test_estimation_charge_is_phase_one_row_weight(self):
        config = FrameConfig(channels=ChannelModel.uniform(3, 0.0), nodes_per_class=5,
                             energy=EnergyModel(gamma_T=2.0))
        contenders = [[NodeState(0, 0), NodeState(0, 1)], [], [NodeState(2, 0)]]
        tallies = [ClassTally() for _ in range(3)]
        _charge_estimation(config, contenders, tallies)
        matrix = symbol_matrix(Protocol.METHOD1, 3)
        weight = matrix.alpha_mask.sum(axis=1) + matrix.beta_mask.sum(axis=1)
        self.assertEqual(tallies[0].energy_T, 2 * weight[0] * 2.0)
        self.assertEqual(tallies[1].energy_T, 0.0)
        self.assertEqual(tallies[2].energy_T, 1 * weight[2] * 2.0)

    def test_released_slots_go_to_winners_of_the_longest_backlog(self):
        config = FrameConfig(channels=ChannelModel.uniform(3, 0.0), nodes_per_class=5)
        state = SimulationState.initial(config, RandomSource(3))
        winner, idle, other = state.nodes[0][0], state.nodes[0][1], state.nodes[2][0]
        winner.queue.extend([0] * 5)
        idle.queue.extend([0] * 10)
        other.queue.extend([0] * 2)
        tallies = [ClassTally() for _ in range(3)]
        _reassign(state, [winner, other], 3, tallies, config)
        self.assertEqual(len(winner.queue), 2)
        self.assertEqual(len(idle.queue), 10)
        self.assertEqual(len(other.queue), 2)
        self.assertEqual(tallies[0].deliveries, 3)


class BatchMeansTests(SimpleTestCase):
    def test_constant_series(self):
        mean, half = batch_means_ci(np.full(100, 0.25), batches=10)
        self.assertEqual(mean, 0.25)
        self.assertEqual(half, 0.0)

    def test_interval_shrinks_with_more_data(self):
        rng = np.random.default_rng(5)
        _, short = batch_means_ci(rng.normal(1.0, 1.0, 4_000), batches=40)
        _, long = batch_means_ci(rng.normal(1.0, 1.0, 16_000), batches=40)
        self.assertGreater(long / short, 0.3)
        self.assertLess(long / short, 0.8)

    def test_too_few_values(self):
        mean, half = batch_means_ci([2.0], batches=10)
        self.assertEqual(mean, 2.0)
        self.assertTrue(np.isnan(half))


@pytest.mark.slow
class SaturationTests(SimpleTestCase):
    def test_weights_favour_emergency(self):
        config = FrameConfig(channels=ChannelModel.uniform(6, 0.1), nodes_per_class=30,
                             arrival_rates=(0.6, 0.6, 0.6), weights=(3.0, 2.0, 1.0))
        record = run_simulation(config, 200, seed=7, warmup=50)
        self.assertGreater(record.row('emergency')['throughput'], record.row('normal')['throughput'])

    def test_equal_weights_overlap(self):
        config = FrameConfig(channels=ChannelModel.uniform(5, 0.2), nodes_per_class=30,
                             arrival_rates=(0.05, 0.05, 0.05))
        record = run_simulation(config, 300, seed=8, warmup=50)
        emergency, normal = record.row('emergency'), record.row('normal')
        gap = abs(emergency['throughput'] - normal['throughput'])
        self.assertLessEqual(gap, emergency['throughput_ci'] + normal['throughput_ci'] + 0.01)
