"""Estimators for the five link metrics. All are pure functions of a trace."""
from __future__ import annotations

from typing import Tuple

import numpy as np

from ..esp import OVERHEAD
from ..ofh_sim.trace import PacketTrace


class EmptyTrace(ValueError):
    pass


class InsufficientData(ValueError):
    pass


def _delays_ns(trace: PacketTrace) -> np.ndarray:
    d = trace.delivered
    order = np.argsort(trace.recv_ns[d], kind="stable")
    return (trace.recv_ns[d] - trace.send_ns[d])[order]


def compute_throughput(trace: PacketTrace) -> float:
    """Delivered application payload in Mbit/s over [first send, last receive]."""
    if len(trace) == 0:
        raise EmptyTrace("trace has no packets")
    d = trace.delivered
    if not d.any():
        return 0.0
    payload_bits = float((trace.wire_len[d] - OVERHEAD).sum()) * 8.0
    span_ns = int(trace.recv_ns[d].max()) - int(trace.send_ns.min())
    if span_ns <= 0:
        raise EmptyTrace("zero-length observation window")
    return payload_bits / (span_ns / 1e9) / 1e6


def compute_delay(trace: PacketTrace) -> float:
    """Mean one-way delay of delivered packets, in milliseconds."""
    d = trace.delivered
    if not d.any():
        raise EmptyTrace("no delivered packets")
    return float((trace.recv_ns[d] - trace.send_ns[d]).mean()) / 1e6


def rfc3550_jitter(transit: np.ndarray) -> float:
    j = 0.0
    prev = None
    for t in transit.tolist():
        if prev is not None:
            j += (abs(t - prev) - j) / 16.0
        prev = t
    return j


def compute_jitter(trace: PacketTrace) -> Tuple[float, float]:
    """(RFC 3550 interarrival jitter, sample stddev of one-way delay), both in microseconds.

    The RFC 3550 estimator walks packets in arrival order.
    """
    delays = _delays_ns(trace)
    if delays.size < 2:
        raise InsufficientData("jitter needs at least two delivered packets")
    us = delays / 1000.0
    return rfc3550_jitter(us), float(np.std(us, ddof=1))


def nearest_rank(values: np.ndarray, pct: int) -> float:
    ordered = np.sort(values)
    rank = max(1, -(-pct * ordered.size // 100))
    return float(ordered[rank - 1])


def measure_encryption_time(trace: PacketTrace) -> Tuple[float, float]:
    """(mean, nearest-rank p99) of per-packet encryption time in microseconds."""
    if len(trace) == 0:
        raise EmptyTrace("trace has no packets")
    enc = trace.enc_time_us
    return float(enc.mean()), nearest_rank(enc, 99)


def measure_memory(trace: PacketTrace) -> int:
    """Peak of the session's byte-accounting ledger."""
    if trace.ledger is not None:
        return trace.ledger.peak
    if trace.mem_bytes_peak is None:
        raise ValueError("trace carries no memory accounting")
    return trace.mem_bytes_peak
