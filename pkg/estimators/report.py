from collections import Counter
from dataclasses import dataclass

import pandas as pd

from core.exceptions import ProtocolViolationError

from .lof import LOF_CONSTANT, lof_estimate

# phase label in the trace -> EstimateReport counter
PHASE_COUNTERS = {
    'lof': 'slots_phase1',
    'phase1': 'slots_phase1',
    'bp': 'slots_bp',
    'phase2': 'slots_phase2',
    'phase3': 'slots_phase3',
}


@dataclass(frozen=True)
class SlotRecord:
    phase: str
    index: int
    outcome: object = None
    note: str = ''


class SlotLog:
    """Append-only slot trace; every slot the protocol spends goes through here."""

    def __init__(self):
        self.records = []

    def slot(self, phase, outcome, note=''):
        self.records.append(SlotRecord(phase, len(self.records) + 1, outcome, note))
        return outcome

    def broadcast(self, length, note=''):
        for _ in range(length):
            self.records.append(SlotRecord('bp', len(self.records) + 1, None, note))

    def counts(self):
        return Counter(PHASE_COUNTERS[r.phase] for r in self.records)


@dataclass(frozen=True)
class EstimateReport:
    protocol: str
    rho: tuple
    n_hat: tuple
    bitmaps: tuple
    slots_phase1: int
    slots_bp: int
    slots_phase2: int
    slots_phase3: int
    trace: tuple = ()

    def __post_init__(self):
        for rho, n_hat in zip(self.rho, self.n_hat):
            if n_hat != LOF_CONSTANT * 2 ** rho:
                raise ProtocolViolationError(f"estimate {n_hat} does not match rho={rho}")
        if self.trace and len(self.trace) != self.slots_total:
            raise ProtocolViolationError(
                f"{self.protocol}: trace holds {len(self.trace)} slots but {self.slots_total} were accounted")

    @property
    def slots_total(self):
        return self.slots_phase1 + self.slots_bp + self.slots_phase2 + self.slots_phase3

    @property
    def T(self):
        return len(self.rho)

    @classmethod
    def build(cls, protocol, bitmaps, log):
        estimates = [lof_estimate(bm) for bm in bitmaps]
        counts = log.counts()
        return cls(
            protocol=protocol,
            rho=tuple(rho for rho, _ in estimates),
            n_hat=tuple(n_hat for _, n_hat in estimates),
            bitmaps=tuple(bitmaps),
            slots_phase1=counts['slots_phase1'],
            slots_bp=counts['slots_bp'],
            slots_phase2=counts['slots_phase2'],
            slots_phase3=counts['slots_phase3'],
            trace=tuple(log.records),
        )

    @classmethod
    def concatenate(cls, protocol, reports):
        """Reports of consecutive passes (one per type) merged into one timeline."""
        log = SlotLog()
        bitmaps = []
        for report in reports:
            bitmaps.extend(report.bitmaps)
            for record in report.trace:
                log.slot(record.phase, record.outcome, record.note)
        return cls.build(protocol, bitmaps, log)

    def trace_frame(self, schedule=None):
        """Slot trace as a DataFrame; ``schedule`` maps logical slot -> (channel, time slot)."""
        rows = []
        for record in self.trace:
            channel, time_slot = (schedule or {}).get(record.index, (0, record.index))
            rows.append({
                'phase': record.phase,
                'slot': record.index,
                'channel': channel,
                'time_slot': time_slot,
                'outcome': 'BP' if record.outcome is None else record.outcome.value,
                'note': record.note,
            })
        return pd.DataFrame(rows, columns=['phase', 'slot', 'channel', 'time_slot', 'outcome', 'note'])


def write_trace(report, path, schedule=None):
    frame = report.trace_frame(schedule)
    if str(path).endswith('.gz'):
        frame.to_csv(path, index=False, compression={'method': 'gzip', 'mtime': 0})
    else:
        frame.to_csv(path, index=False)
    return path
