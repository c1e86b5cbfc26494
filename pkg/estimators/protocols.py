"""Slot-level execution of the estimation protocols.

All three protocols rebuild the per-type LoF bitmaps B(b, .) from what the
base station hears. The ``*_from_hashes`` functions take an explicit
HashAssignment so different protocols can be fed the same realization;
``run_*`` draw the assignment from a population first.
"""
import logging
from dataclasses import replace

import numpy as np

from core.exceptions import InvalidParameterError, ProtocolViolationError
from core.hashing import bitmap_length
from core.slots import outcome_from_counts
from core.types import HashingMode, SlotOutcome

from .assignment import HashAssignment, assign_hashes, assign_type_bins
from .decoder import ConstraintKind, bp_length, decode_block
from .lof import Bitmap
from .report import EstimateReport, SlotLog
from .symbols import Protocol, symbol_matrix

logger = logging.getLogger(__name__)


def _ceil_div(a, b):
    return -(-a // b)


def _check_slot_bits(slot_bits):
    if slot_bits < 1:
        raise InvalidParameterError(f"S_W must be >= 1, got {slot_bits}")


def _transmit_block(log, phase, matrix, block_counts, note):
    """Run the slots of one block; ``block_counts[k]`` active nodes of the k-th row transmit."""
    counts = np.asarray(block_counts, dtype=np.int64)
    n_alpha = counts @ matrix.alpha_mask
    n_beta = counts @ matrix.beta_mask
    return tuple(
        log.slot(phase, outcome_from_counts(int(a), int(b)), f'{note} slot {j + 1}')
        for j, (a, b) in enumerate(zip(n_alpha, n_beta))
    )


def _probe(log, count, note):
    """One slot where a single type's block nodes transmit: non-empty means active."""
    return int(log.slot('phase2', outcome_from_counts(int(count), 0), note) is not SlotOutcome.EMPTY)


def _probe_exactly_one(log, positions, block_counts, note):
    """Locate the single active type among ``positions``.

    Up to three candidates share one slot (alpha, beta, silence). Longer
    lists are walked two at a time, silence meaning "further down the list".
    """
    remaining = list(positions)
    while remaining:
        if len(remaining) <= 3:
            chunk, final = remaining, True
        else:
            chunk, final = remaining[:2], False
        n_alpha = int(block_counts[chunk[0]])
        n_beta = int(block_counts[chunk[1]]) if len(chunk) > 1 else 0
        outcome = log.slot('phase2', outcome_from_counts(n_alpha, n_beta), f'{note} one-of')
        if outcome is SlotOutcome.ALPHA:
            return chunk[0]
        if outcome is SlotOutcome.BETA:
            return chunk[1]
        if outcome is SlotOutcome.EMPTY and final and len(chunk) == 3:
            return chunk[2]
        if outcome is not SlotOutcome.EMPTY or final:
            raise ProtocolViolationError(f"{note}: probe outcome {outcome.value} breaks the one-of constraint")
        remaining = remaining[2:]
    raise ProtocolViolationError(f"{note}: no candidate left")


def _method1_single_block(log, block_counts, note):
    """Method I on one block (phase 1, Type-1 probe, per-type probes) with no broadcast packets."""
    k = len(block_counts)
    if k == 1:
        return [_probe(log, block_counts[0], note)]
    matrix = symbol_matrix(Protocol.METHOD1, k)
    outcome = _transmit_block(log, 'phase2', matrix, block_counts, note)
    decoded = decode_block(matrix, outcome)
    if decoded.resolved:
        return list(decoded.bits)
    first = log.slot('phase2', outcome_from_counts(int(block_counts[0]), 0), f'{note} lead')
    if first is SlotOutcome.EMPTY:
        return [0] + [1] * (k - 1)
    if first is not SlotOutcome.COLLISION:
        return [1] * k
    return [1] + [_probe(log, block_counts[p], f'{note} type {p + 1}') for p in range(1, k)]


def _split_scheme(log, block_counts, note):
    """All-collision block: split into the first ceil(k/2) types and the rest, solve each part."""
    k = len(block_counts)
    head = _ceil_div(k, 2)
    bits = []
    for start, stop in ((0, head), (head, k)):
        part = list(block_counts[start:stop])
        sub_note = f'{note} group {start + 1}-{stop}'
        if len(part) <= 3:
            bits.extend(_method1_single_block(log, part, sub_note))
        else:
            matrix = symbol_matrix(Protocol.METHOD2, len(part))
            outcome = _transmit_block(log, 'phase2', matrix, part, sub_note)
            bits.extend(_resolve_block(log, part, decode_block(matrix, outcome), sub_note))
    return bits


def _resolve_block(log, block_counts, decoded, note):
    """Phase-2 resolution of one decoded block; returns the activity bit of every type."""
    bits = list(decoded.bits)
    for constraint in decoded.constraints:
        positions = [b - 1 for b in constraint.types]
        if constraint.kind is ConstraintKind.INDEPENDENT:
            p = positions[0]
            bits[p] = _probe(log, block_counts[p], f'{note} type {p + 1}')
        elif constraint.kind is ConstraintKind.EXACTLY_ONE_OF:
            chosen = _probe_exactly_one(log, positions, block_counts, note)
            for p in positions:
                bits[p] = int(p == chosen)
        elif decoded.all_collision and len(positions) == len(bits):
            return _split_scheme(log, block_counts, note)
        else:
            for p in positions:
                bits[p] = _probe(log, block_counts[p], f'{note} type {p + 1}')
    return bits


def _finish(protocol, assignment, reconstructed, log):
    truth = assignment.counts() > 0
    if not np.array_equal(reconstructed.astype(bool), truth):
        raise ProtocolViolationError(f"{protocol}: reconstructed bitmaps differ from the transmitted ones")
    bitmaps = [Bitmap(tuple(int(x) for x in row)) for row in reconstructed]
    report = EstimateReport.build(protocol, bitmaps, log)
    logger.debug(f"{protocol}: rho={report.rho} slots={report.slots_total}")
    return report


def method1_from_hashes(assignment: HashAssignment, slot_bits=5):
    T, t = assignment.T, assignment.t
    if T < 2:
        raise InvalidParameterError(f"Method I needs T >= 2, got {T}")
    _check_slot_bits(slot_bits)
    counts = assignment.counts()
    matrix = symbol_matrix(Protocol.METHOD1, T)
    log = SlotLog()
    bits = np.zeros((T, t), dtype=np.int64)

    c_one = []
    for i in range(t):
        decoded = decode_block(matrix, _transmit_block(log, 'phase1', matrix, counts[:, i], f'block {i}'))
        if decoded.resolved:
            bits[:, i] = decoded.bits
        elif decoded.all_collision:
            c_one.append(i)
        else:
            raise ProtocolViolationError(f"Method I block {i} left ambiguous outside the all-collision case")
    log.broadcast(_ceil_div(t, slot_bits), 'C_I bitmap')

    c_two = []
    for i in c_one:
        outcome = log.slot('phase2', outcome_from_counts(int(counts[0, i]), 0), f'block {i} type 1')
        if outcome is SlotOutcome.EMPTY:
            bits[0, i], bits[1:, i] = 0, 1
        elif outcome is SlotOutcome.COLLISION:
            bits[0, i] = 1
            c_two.append(i)
        else:
            bits[:, i] = 1
    log.broadcast(_ceil_div(len(c_one), slot_bits), 'C_II bitmap')

    for i in c_two:
        for b in range(2, T + 1):
            outcome = log.slot('phase3', outcome_from_counts(int(counts[b - 1, i]), 0), f'block {i} type {b}')
            bits[b - 1, i] = int(outcome is not SlotOutcome.EMPTY)
    return _finish('method1', assignment, bits, log)


def method2_from_hashes(assignment: HashAssignment, slot_bits=5):
    T, t = assignment.T, assignment.t
    if T < 2:
        raise InvalidParameterError(f"Method II needs T >= 2, got {T}")
    _check_slot_bits(slot_bits)
    if T <= 3:
        return replace(method1_from_hashes(assignment, slot_bits), protocol='method2')

    counts = assignment.counts()
    matrix = symbol_matrix(Protocol.METHOD2, T)
    log = SlotLog()
    decoded_blocks = [
        decode_block(matrix, _transmit_block(log, 'phase1', matrix, counts[:, i], f'block {i}'))
        for i in range(t)
    ]
    log.broadcast(bp_length(Protocol.METHOD2, T, t, slot_bits), 'ambiguity sets')
    bits = np.zeros((T, t), dtype=np.int64)
    for i, decoded in enumerate(decoded_blocks):
        bits[:, i] = _resolve_block(log, counts[:, i], decoded, f'block {i}')
    return _finish('method2', assignment, bits, log)


def baseline_from_hashes(assignment: HashAssignment):
    """T sequential LoF passes, one per type."""
    counts = assignment.counts()
    log = SlotLog()
    for b in range(1, assignment.T + 1):
        for h in range(assignment.t):
            log.slot('lof', outcome_from_counts(int(counts[b - 1, h]), 0), f'type {b} slot {h}')
    bitmaps = [Bitmap.from_counts(row) for row in counts]
    return EstimateReport.build('baseline', bitmaps, log)


def run_lof(population, source, mode=HashingMode.REDRAW, frame=0, type_index=None):
    """One LoF pass over a single-type population; returns (report, slots used)."""
    if len(population.types) != 1:
        raise InvalidParameterError("run_lof expects a single-type population")
    t = bitmap_length(population.n_all)
    nodes = population.types[0]
    if type_index is None:
        type_index = nodes[0].type_index if nodes else 1
    assignment = HashAssignment(t, (assign_type_bins(nodes, type_index, t, mode, source, frame),))
    return replace(baseline_from_hashes(assignment), protocol='lof'), t


def _check_types(population, T):
    if population.T != T:
        raise InvalidParameterError(f"population has {population.T} types, protocol run for T={T}")


def run_method1(population, T, slot_bits, source, mode=HashingMode.REDRAW, frame=0):
    _check_types(population, T)
    return method1_from_hashes(assign_hashes(population, source, mode, frame), slot_bits)


def run_method2(population, T, slot_bits, source, mode=HashingMode.REDRAW, frame=0):
    _check_types(population, T)
    return method2_from_hashes(assign_hashes(population, source, mode, frame), slot_bits)


def run_t_lof_baseline(population, T, source, mode=HashingMode.REDRAW, frame=0):
    _check_types(population, T)
    reports = [run_lof(population.restrict(b), source, mode, frame, type_index=b)[0]
               for b in range(1, T + 1)]
    return EstimateReport.concatenate('baseline', reports)
