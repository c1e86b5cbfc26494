"""Spectrum side of a frame: sensing, the free-list broadcast, EW striping and channel split."""
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from analysis.contention import contention_prob
from core.exceptions import InvalidParameterError


@dataclass(frozen=True)
class ChannelModel:
    """PU presence probabilities z_i; ``order`` lists channel ids by ascending z (stable)."""

    z: Sequence[float]

    def __post_init__(self):
        z = tuple(float(x) for x in self.z)
        if not z:
            raise InvalidParameterError("at least one channel is required")
        if any(not 0.0 <= x <= 1.0 for x in z):
            raise InvalidParameterError(f"PU presence probabilities must lie in [0, 1], got {z}")
        object.__setattr__(self, 'z', z)

    @property
    def M_T(self):
        return len(self.z)

    @property
    def order(self):
        return tuple(int(i) for i in np.argsort(self.z, kind='stable'))

    @classmethod
    def uniform(cls, M_T, z):
        return cls((z,) * M_T)


@dataclass(frozen=True)
class Bw1Result:
    listen_slots: int
    free: tuple


@dataclass(frozen=True)
class ChannelPlan:
    free: tuple
    channels: tuple
    probabilities: tuple
    estimates: tuple

    @property
    def sizes(self):
        return tuple(len(c) for c in self.channels)

    @property
    def M_f(self):
        return len(self.free)

    def per_channel_estimate(self, cls):
        """Contenders expected on one channel of the class: n_hat_c / M_fc."""
        return self.estimates[cls] / len(self.channels[cls]) if self.channels[cls] else 0.0


def sense_channels(model: ChannelModel, rng):
    """Free channel ids this frame, in ascending z."""
    busy = rng.random(model.M_T) < np.asarray(model.z)
    return tuple(i for i in model.order if not busy[i])


def broadcast_window_1(model: ChannelModel, free):
    """Nodes scan channels by ascending z, one slot each, until the first free one."""
    if not free:
        return Bw1Result(0, ())
    return Bw1Result(model.order.index(free[0]) + 1, tuple(free))


def schedule_estimation_slots(R_s, free):
    """Logical EW slot t -> (channel a_((t-1) mod M_f + 1), time slot ceil(t / M_f))."""
    if R_s < 0:
        raise InvalidParameterError(f"R_s must be >= 0, got {R_s}")
    if not free:
        raise InvalidParameterError("the estimation window needs at least one free channel")
    M_f = len(free)
    return {t: (free[(t - 1) % M_f], -(-t // M_f)) for t in range(1, R_s + 1)}


def _largest_remainder(shares, total):
    floors = [math.floor(s) for s in shares]
    left = total - sum(floors)
    by_remainder = sorted(range(len(shares)), key=lambda c: (-(shares[c] - floors[c]), c))
    for c in by_remainder[:left]:
        floors[c] += 1
    return floors


def allocate_channels(estimates, weights, free, reserved=None):
    """Split the free channels among the classes in proportion to (n_hat_c + r_c) * w_c.

    ``reserved`` counts the nodes of each class holding a reservation this
    frame; they need a channel of their class but do not contend, so they
    enter the split and not the contention probability. Emergency takes the
    lowest-z channels, periodic the next ones, normal the rest.
    """
    if len(estimates) != len(weights):
        raise InvalidParameterError("one weight per class is required")
    reserved = tuple(reserved) if reserved is not None else (0,) * len(estimates)
    if len(reserved) != len(estimates) or any(r < 0 for r in reserved):
        raise InvalidParameterError(f"reserved needs one count >= 0 per class, got {reserved}")
    M_f = len(free)
    demand = [(max(float(e), 0.0) + r) * float(w) for e, r, w in zip(estimates, reserved, weights)]
    total = sum(demand)
    if M_f == 0 or total == 0:
        sizes = [0] * len(demand)
    else:
        sizes = _largest_remainder([d * M_f / total for d in demand], M_f)
        wanting = [c for c, d in enumerate(demand) if d > 0]
        if M_f >= len(wanting):
            for c in wanting:
                if sizes[c] == 0:
                    donor = max(range(len(sizes)), key=lambda k: (sizes[k], -k))
                    sizes[donor] -= 1
                    sizes[c] += 1
    channels, start = [], 0
    for size in sizes:
        channels.append(tuple(free[start:start + size]))
        start += size
    probabilities = tuple(
        contention_prob(e / size) if size and e > 0 else 1.0
        for e, size in zip(estimates, sizes)
    )
    return ChannelPlan(tuple(free), tuple(channels), probabilities, tuple(float(e) for e in estimates))
