"""Contention and data transmission window of one channel."""
import enum
import logging
from dataclasses import dataclass, field

from analysis.contention import contention_prob
from core.exceptions import InvalidParameterError

logger = logging.getLogger(__name__)

RELEASE_AFTER_EMPTY = 3


class CdtwPolicy(enum.Enum):
    # stop BP, three-empty release, grants capped by queue and class limit
    PROTOCOL = 'protocol'
    # constant d-slot grants, contention for W_m attempts, no release
    ANALYSIS = 'analysis'


@dataclass(frozen=True)
class EnergyModel:
    gamma_I: float = 0.05
    gamma_T: float = 1.0
    gamma_R: float = 0.5

    def __post_init__(self):
        if min(self.gamma_I, self.gamma_T, self.gamma_R) < 0:
            raise InvalidParameterError("energy per slot must be >= 0")


@dataclass(frozen=True)
class Contender:
    key: object
    queue: int


@dataclass(frozen=True)
class Grant:
    key: object
    slots: int
    future_frames: int = 0


@dataclass
class ChannelLog:
    window: int
    contenders: int
    pre_reserved: int = 0
    attempts: int = 0
    empty_attempts: int = 0
    collided_attempts: int = 0
    grants: list = field(default_factory=list)
    released: bool = False
    overflow: bool = False
    energy_T: float = 0.0
    energy_R: float = 0.0
    energy_I: float = 0.0

    @property
    def successes(self):
        return len(self.grants)

    @property
    def reserved(self):
        return self.pre_reserved + sum(g.slots for g in self.grants)

    @property
    def leftover(self):
        """Slots the BS may hand to other channels' nodes after a release."""
        if not self.released:
            return 0
        return self.window - 2 * self.attempts - self.reserved

    @property
    def energy(self):
        return self.energy_T + self.energy_R + self.energy_I


def run_cdtw_channel(contenders, estimate, window, rng, *, policy=CdtwPolicy.PROTOCOL, cap=1, d=1,
                     periodic=False, pre_reserved=0, energy=EnergyModel()):
    """Slotted ALOHA over UL/DL pairs from the left, grants from the rightmost free slots.

    ``estimate`` is the BS's contender estimate for this channel; after j
    successes the contention probability is min(1 / (estimate - j), 1).
    Periodic winners get one slot now and one in each of the next
    min(queue, cap) - 1 frames.
    """
    if window < 0:
        raise InvalidParameterError(f"window must be >= 0, got {window}")
    if pre_reserved > window:
        raise InvalidParameterError(f"{pre_reserved} reserved slots do not fit in a window of {window}")
    n = len(contenders)
    log = ChannelLog(window, n, pre_reserved)
    log.energy_T += pre_reserved * energy.gamma_T
    waiting = list(range(n))
    reserved = pre_reserved
    empties = 0

    while True:
        k = log.attempts + 1
        if policy is CdtwPolicy.ANALYSIS:
            if 2 * k > window - log.successes * d:
                break
        elif 2 * k + reserved + 1 > window:
            break
        log.attempts = k
        p = contention_prob(estimate, log.successes)
        sent = [waiting[i] for i in (rng.random(len(waiting)) < p).nonzero()[0]]
        log.energy_T += len(sent) * energy.gamma_T
        log.energy_I += (n - len(sent)) * energy.gamma_I
        log.energy_R += len(waiting) * energy.gamma_R
        log.energy_I += (n - len(waiting)) * energy.gamma_I

        if len(sent) != 1:
            if sent:
                log.collided_attempts += 1
                empties = 0
            else:
                log.empty_attempts += 1
                empties += 1
            if policy is CdtwPolicy.PROTOCOL and empties == RELEASE_AFTER_EMPTY:
                log.released = True
                break
            continue

        empties = 0
        winner = contenders[sent[0]]
        if policy is CdtwPolicy.ANALYSIS:
            if 2 * k + (log.successes + 1) * d > window:
                log.overflow = True
                break
            grant = Grant(winner.key, d)
        elif periodic:
            grant = Grant(winner.key, 1, max(min(winner.queue, cap) - 1, 0))
        else:
            room = window - 2 * k - reserved
            grant = Grant(winner.key, min(winner.queue, cap, room))
        log.grants.append(grant)
        reserved += grant.slots
        waiting.remove(sent[0])
        log.energy_T += grant.slots * energy.gamma_T
        log.energy_I += grant.slots * (n - 1) * energy.gamma_I

    logger.debug(f"cdtw W={window} n={n} estimate={estimate:.2f}: {log.attempts} attempts, "
                 f"{log.successes} grants, released={log.released}, overflow={log.overflow}")
    return log
