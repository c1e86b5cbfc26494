"""One MAC frame: SW, BW1, EW, BW2 and the per-channel CDTWs.

Classes are indexed 0 (emergency), 1 (periodic) and 2 (normal). A node is
active while its queue is nonempty; a periodic node that still holds
reservations from earlier frames is served in its reserved slot and does
not contend or take part in the estimation.
"""
import enum
import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from core.exceptions import InvalidParameterError
from core.randomness import RandomSource
from core.types import HashingMode, NodePopulation, TrafficClass
from estimators.protocols import run_method1, run_method2
from estimators.symbols import Protocol, symbol_matrix

from .cdtw import CdtwPolicy, Contender, EnergyModel, run_cdtw_channel
from .channels import (
    ChannelModel, allocate_channels, broadcast_window_1, schedule_estimation_slots, sense_channels,
)

logger = logging.getLogger(__name__)

CLASSES = (TrafficClass.EMERGENCY, TrafficClass.PERIODIC, TrafficClass.NORMAL)
PERIODIC = 1


class Mode(enum.Enum):
    PROPOSED = 'proposed'
    IDEAL = 'ideal'


@dataclass(frozen=True)
class FrameConfig:
    channels: ChannelModel
    nodes_per_class: int = 50
    arrival_rates: tuple = (0.1, 0.1, 0.1)
    weights: tuple = (1.0, 1.0, 1.0)
    caps: tuple = (5, 5, 5)
    slots_per_frame: int = 50
    sw_slots: int = 1
    bw1_cap: int = 5
    bw2_slots: int = 2
    slot_bits: int = 5
    estimator: Protocol = Protocol.METHOD1
    hashing_mode: HashingMode = HashingMode.REDRAW
    energy: EnergyModel = field(default_factory=EnergyModel)

    def __post_init__(self):
        for name in ('arrival_rates', 'weights', 'caps'):
            value = tuple(getattr(self, name))
            if len(value) != len(CLASSES):
                raise InvalidParameterError(f"{name} needs one value per class, got {value}")
            object.__setattr__(self, name, value)
        if any(rate < 0 for rate in self.arrival_rates):
            raise InvalidParameterError(f"arrival rates must be >= 0, got {self.arrival_rates}")
        if any(w <= 0 for w in self.weights):
            raise InvalidParameterError(f"weights must be positive, got {self.weights}")
        if list(self.weights) != sorted(self.weights, reverse=True):
            raise InvalidParameterError(f"weights must satisfy w_e >= w_p >= w_n, got {self.weights}")
        if any(k < 1 for k in self.caps):
            raise InvalidParameterError(f"reservation caps must be >= 1, got {self.caps}")
        if self.nodes_per_class < 1:
            raise InvalidParameterError(f"nodes_per_class must be >= 1, got {self.nodes_per_class}")
        if self.slots_per_frame <= self.sw_slots + self.bw1_cap + self.bw2_slots:
            raise InvalidParameterError(f"a {self.slots_per_frame}-slot frame leaves no room for the CDTW")


@dataclass
class NodeState:
    cls: int
    index: int
    queue: deque = field(default_factory=deque)
    channel: Optional[int] = None
    contending: bool = False
    reservations_left: int = 0

    @property
    def active(self):
        return bool(self.queue)

    @property
    def key(self):
        return self.cls, self.index


@dataclass
class SimulationState:
    config: FrameConfig
    population: NodePopulation
    nodes: list
    frame: int = 0
    trace: Optional[list] = None

    @classmethod
    def initial(cls, config: FrameConfig, source: RandomSource):
        N = config.nodes_per_class
        population = NodePopulation.from_counts([0] * len(CLASSES), source, sizes=[N] * len(CLASSES))
        nodes = [[NodeState(c, k) for k in range(N)] for c in range(len(CLASSES))]
        return cls(config, population, nodes)

    def node(self, key):
        return self.nodes[key[0]][key[1]]

    def queued(self, c):
        return sum(len(node.queue) for node in self.nodes[c])

    def contenders(self, c):
        return [node for node in self.nodes[c] if node.active and node.reservations_left == 0]

    def holders(self, c):
        return [node for node in self.nodes[c] if node.reservations_left > 0]


@dataclass
class ClassTally:
    arrivals: int = 0
    deliveries: int = 0
    successes: int = 0
    delay_sum: int = 0
    energy_T: float = 0.0
    energy_R: float = 0.0
    energy_I: float = 0.0


def _deliver(state, node, count, tally):
    count = min(count, len(node.queue))
    for _ in range(count):
        tally.delay_sum += state.frame - node.queue.popleft()
    tally.deliveries += count
    node.reservations_left = min(node.reservations_left, len(node.queue))
    return count


def _estimate(state, config, contenders, source):
    """Run the EW estimator over the current contenders."""
    queues = [[0] * config.nodes_per_class for _ in CLASSES]
    for c, nodes in enumerate(contenders):
        for node in nodes:
            queues[c][node.index] = len(node.queue)
    population = state.population.with_queues(queues)
    run = run_method2 if config.estimator is Protocol.METHOD2 else run_method1
    report = run(population, len(CLASSES), config.slot_bits, source.child('ew'),
                 config.hashing_mode, state.frame)
    return report


def _charge_estimation(config, contenders, tallies):
    """Phase-1 transmissions of every contender (row weight of its symbol pattern).

    Only phase 1 is charged. The phase-2 and phase-3 probe slots of Method I
    and II are answered by whichever nodes hold the probed bit, which the
    report does not attribute to classes, so the per-node estimation energy
    is a lower bound.
    """
    matrix = symbol_matrix(config.estimator, len(CLASSES))
    for c, nodes in enumerate(contenders):
        sends = int(matrix.alpha_mask[c].sum() + matrix.beta_mask[c].sum())
        tallies[c].energy_T += len(nodes) * sends * config.energy.gamma_T


def run_frame(state: SimulationState, mode: Mode, source: RandomSource, estimator=None):
    """Advance ``state`` by one frame; returns one tally row per class.

    ``estimator(state, contenders)`` may replace the EW, returning
    (n_hat per class, R_s).
    """
    config = state.config
    f = state.frame
    frame_source = source.child('frame', f)
    tallies = [ClassTally() for _ in CLASSES]
    info = {'frame': f, 'free_channels': 0, 'bw1_slots': 0, 'ew_slots': 0, 'cdtw_slots': 0}

    rng = frame_source.child('arrivals').generator()
    for c, rate in enumerate(config.arrival_rates):
        counts = rng.poisson(rate, size=config.nodes_per_class)
        for node, count in zip(state.nodes[c], counts):
            node.queue.extend([f] * int(count))
        tallies[c].arrivals = int(counts.sum())

    free = sense_channels(config.channels, frame_source.child('sense').generator())
    bw1 = broadcast_window_1(config.channels, free)
    info['free_channels'] = len(free)
    listening = min(bw1.listen_slots, config.bw1_cap) if free else config.bw1_cap
    for c in range(len(CLASSES)):
        listeners = sum(node.active for node in state.nodes[c])
        tallies[c].energy_R += listeners * listening * config.energy.gamma_R
    if not free or bw1.listen_slots > config.bw1_cap:
        # nobody reaches the free list: the whole frame sleeps
        logger.debug(f"frame {f}: no usable free list (M_f={len(free)}, scan={bw1.listen_slots})")
        state.frame += 1
        return _rows(state, tallies, info)
    info['bw1_slots'] = bw1.listen_slots

    contenders = [state.contenders(c) for c in range(len(CLASSES))]
    report = None
    if estimator is not None:
        n_hat, R_s = estimator(state, contenders)
    elif mode is Mode.IDEAL:
        n_hat, R_s = tuple(len(nodes) for nodes in contenders), 0
    else:
        report = _estimate(state, config, contenders, frame_source)
        n_hat, R_s = report.n_hat, report.slots_total
        _charge_estimation(config, contenders, tallies)
    # the R_s estimation slots are striped over all free channels
    schedule = schedule_estimation_slots(R_s, free)
    ew = max((slot for _, slot in schedule.values()), default=0)
    if state.trace is not None and report is not None:
        state.trace.append(report.trace_frame(schedule).assign(frame=f))
    info['ew_slots'] = ew

    for c in range(len(CLASSES)):
        listeners = sum(node.active for node in state.nodes[c])
        tallies[c].energy_R += listeners * config.bw2_slots * config.energy.gamma_R
    window = config.slots_per_frame - config.sw_slots - bw1.listen_slots - ew - config.bw2_slots
    info['cdtw_slots'] = max(window, 0)
    holders = [len(state.holders(c)) for c in range(len(CLASSES))]
    plan = allocate_channels(n_hat, config.weights, free, reserved=holders)
    if window > 0:
        _run_cdtw(state, config, plan, contenders, window, frame_source, tallies)

    state.frame += 1
    return _rows(state, tallies, info)


def place_reservations(holders, plan, window):
    """Reserved slots of this frame: channel -> holders, round-robin over the periodic channels.

    Each holder gets one slot on one channel; holders beyond ``window`` per
    channel wait for the next frame with their reservation intact.
    """
    placed = {channel: [] for channel in plan.free}
    periodic_channels = plan.channels[PERIODIC]
    if not periodic_channels:
        return placed
    for k, node in enumerate(holders):
        slots = placed[periodic_channels[k % len(periodic_channels)]]
        if len(slots) < window:
            slots.append(node)
    return placed


def _run_cdtw(state, config, plan, contenders, window, source, tallies):
    rng = source.child('channel-choice').generator()
    reserved = place_reservations(state.holders(PERIODIC), plan, window)

    on_channel = {channel: [] for channel in plan.free}
    for c, nodes in enumerate(contenders):
        if not plan.channels[c]:
            continue
        picks = rng.integers(len(plan.channels[c]), size=len(nodes))
        for node, pick in zip(nodes, picks):
            node.channel = plan.channels[c][pick]
            node.contending = True
            on_channel[node.channel].append(node)

    released_slots, winners = 0, []
    for c, channels in enumerate(plan.channels):
        for channel in channels:
            holders_here = reserved[channel]
            log = run_cdtw_channel(
                [Contender(node.key, len(node.queue)) for node in on_channel[channel]],
                plan.per_channel_estimate(c), window, source.child('cdtw', channel).generator(),
                policy=CdtwPolicy.PROTOCOL, cap=config.caps[c], periodic=c == PERIODIC,
                pre_reserved=len(holders_here), energy=config.energy,
            )
            tally = tallies[c]
            tally.energy_T += log.energy_T
            tally.energy_R += log.energy_R
            tally.energy_I += log.energy_I
            for node in holders_here:
                node.reservations_left -= 1
                _deliver(state, node, 1, tallies[PERIODIC])
            for grant in log.grants:
                node = state.node(grant.key)
                tally.successes += 1
                _deliver(state, node, grant.slots, tally)
                node.reservations_left = min(grant.future_frames, len(node.queue))
                winners.append(node)
            released_slots += log.leftover
            for node in on_channel[channel]:
                node.contending = False

    if released_slots:
        _reassign(state, winners, released_slots, tallies, config)


def _reassign(state, winners, slots, tallies, config):
    """Give slots freed by released channels to this frame's winners of the most backlogged class.

    The class is the one with the longest total queue. Within it, only nodes
    that won a grant this frame take the slots, one packet per turn;
    backlogged nodes that did not win wait for the next frame's contention.
    """
    backlog = [state.queued(c) for c in range(len(CLASSES))]
    target = max(range(len(CLASSES)), key=lambda c: (backlog[c], -c))
    takers = deque(node for node in winners if node.cls == target and node.queue)
    while slots and takers:
        node = takers.popleft()
        slots -= _deliver(state, node, 1, tallies[target])
        tallies[target].energy_T += config.energy.gamma_T
        if node.queue:
            takers.append(node)


def _rows(state, tallies, info):
    rows = []
    for c, tally in enumerate(tallies):
        rows.append({
            **info,
            'class': CLASSES[c].name.lower(),
            'arrivals': tally.arrivals,
            'deliveries': tally.deliveries,
            'successes': tally.successes,
            'delay_sum': tally.delay_sum,
            'mean_delay': tally.delay_sum / tally.deliveries if tally.deliveries else np.nan,
            'energy_T': tally.energy_T,
            'energy_R': tally.energy_R,
            'energy_I': tally.energy_I,
            'queued': state.queued(c),
        })
    return rows
