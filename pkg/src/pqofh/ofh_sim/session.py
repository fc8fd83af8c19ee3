"""DU <-> RU fronthaul sessions over the hybrid-keyed ESP tunnel.

The in-process transport is a discrete-event simulation on a virtual
nanosecond clock. Every cryptographic operation really runs and its measured
duration advances the clock of the endpoint that performed it; the channel
adds its sampled delay. Packet order at the RU is decided by the scheduled
send time plus channel delay only, so delivery order and drops are
reproducible under a fixed seed even though timestamps are not.
"""
from __future__ import annotations

import gc
import hashlib
import heapq
import time
from dataclasses import dataclass
from typing import Optional, Sequence

from ..esp import ReplayDetected, SaPair, cpu_clock, sa_pair_from_schedule
from ..flatconf import ConfigError, reject_unknown
from ..ike_hybrid import HandshakeError, Initiator, Proposal, Responder, run_handshake
from ..kem import KemRegistry
from .channel import Channel, ChannelModel
from .trace import LOST, MemoryLedger, PacketTrace

TRANSPORTS = ("in-process", "udp")
CHECKPOINT_EVERY = 1000
MAX_PACKETS = 10**8


class HandshakeFailed(Exception):
    pass


class TransportUnavailable(Exception):
    pass


class PayloadMismatch(Exception):
    pass


@dataclass(frozen=True)
class TrafficProfile:
    packet_size: int = 1200
    rate: float = 10_000.0
    duration: float = 10.0
    pattern: str = "constant-rate"

    def __post_init__(self):
        if not 1 <= self.packet_size <= 65_000:
            raise ValueError("packet_size must lie in [1, 65000]")
        if self.rate <= 0:
            raise ValueError("rate must be positive")
        if self.duration < 0:
            raise ValueError("duration must be non-negative")
        if self.rate * self.duration > MAX_PACKETS:
            raise ValueError("rate * duration exceeds the 1e8-packet trace limit")
        if self.pattern != "constant-rate":
            raise ValueError(f"unsupported traffic pattern {self.pattern!r}")

    @property
    def packet_count(self) -> int:
        return int(round(self.rate * self.duration))

    @property
    def payload_rate_mbps(self) -> float:
        return self.packet_size * 8 * self.rate / 1e6

    @classmethod
    def from_flat(cls, values: dict, source: str = "profile") -> "TrafficProfile":
        reject_unknown(values, ("packet_size", "rate", "duration", "pattern"), source)
        try:
            kwargs = {}
            if "packet_size" in values:
                kwargs["packet_size"] = int(values["packet_size"])
            if "rate" in values:
                kwargs["rate"] = float(values["rate"])
            if "duration" in values:
                kwargs["duration"] = float(values["duration"])
            if "pattern" in values:
                kwargs["pattern"] = values["pattern"]
            return cls(**kwargs)
        except ValueError as exc:
            raise ConfigError(f"{source}: {exc}") from exc


def seed_bytes(seed: int, label: str) -> bytes:
    return hashlib.sha256(f"pqofh/{seed}/{label}".encode()).digest()


def seed_int(seed: int, label: str) -> int:
    return int.from_bytes(seed_bytes(seed, label)[:8], "big")


class PayloadSource:
    """Sequence-tagged payloads: an 8-byte big-endian index followed by fixed filler."""

    def __init__(self, size: int, seed: int = 0):
        self.size = size
        filler = hashlib.sha256(seed_bytes(seed, "filler")).digest()
        self._filler = (filler * (size // 32 + 1))[:size]

    def payload(self, index: int) -> bytes:
        if self.size >= 8:
            return index.to_bytes(8, "big") + self._filler[8:]
        return index.to_bytes(8, "big")[8 - self.size:]


@dataclass
class EstablishedTunnel:
    du: SaPair
    ru: SaPair
    handshake_ms: float
    handshake_bytes: int
    transcript: Sequence[str]


def establish(proposal: Proposal, seed: int, ledger: MemoryLedger, psk: bytes = b"pqofh-psk",
              responder_proposals: Optional[Sequence[Proposal]] = None,
              registry: Optional[KemRegistry] = None) -> EstablishedTunnel:
    """Run the handshake in-process and install the SAs, filling the ledger."""
    initiator = Initiator([proposal], psk, seed_bytes(seed, "du"), registry)
    responder = Responder(responder_proposals or [proposal], psk, seed_bytes(seed, "ru"), registry)
    t0 = time.perf_counter_ns()
    try:
        result = run_handshake(initiator, responder)
    except HandshakeError as exc:
        raise HandshakeFailed(f"{type(exc).__name__}: {exc}") from exc
    elapsed_ms = (time.perf_counter_ns() - t0) / 1e6
    return install(result.initiator, result.responder, seed, ledger, elapsed_ms,
                   result.total_bytes, result.dump())


def install(initiator: Initiator, responder: Responder, seed: int, ledger: MemoryLedger,
            handshake_ms: float, handshake_bytes: int, transcript: Sequence[str]) -> EstablishedTunnel:
    chosen = initiator.state.chosen
    schedule = initiator.state.schedule
    du = sa_pair_from_schedule(schedule, chosen.encr, chosen.integ, "initiator",
                               (seed_bytes(seed, "iv/du")[:8], None))
    ru = sa_pair_from_schedule(responder.state.schedule, chosen.encr, chosen.integ, "responder",
                               (seed_bytes(seed, "iv/ru")[:8], None))
    ledger.set("handshake/du", initiator.state.held_bytes)
    ledger.set("handshake/ru", responder.state.held_bytes)
    ledger.set("ike_sa/du", schedule.byte_len())
    ledger.set("ike_sa/ru", responder.state.schedule.byte_len())
    ledger.set("sa/du", du.outbound.state_bytes() + du.inbound.state_bytes())
    ledger.set("sa/ru", ru.outbound.state_bytes() + ru.inbound.state_bytes())
    ledger.checkpoint("post-handshake")
    # Exchange buffers and per-round KEM material are released once the tunnel is up.
    ledger.free("handshake/du")
    ledger.free("handshake/ru")
    return EstablishedTunnel(du, ru, handshake_ms, handshake_bytes, transcript)


def _rss() -> Optional[int]:
    try:
        import psutil
    except ImportError:
        return None
    return int(psutil.Process().memory_info().rss)


def run_session(profile: TrafficProfile, proposal: Proposal, channel: ChannelModel = ChannelModel(),
                transport: str = "in-process", seed: int = 0, psk: bytes = b"pqofh-psk",
                responder_proposals: Optional[Sequence[Proposal]] = None,
                registry: Optional[KemRegistry] = None) -> PacketTrace:
    if transport not in TRANSPORTS:
        raise ValueError(f"transport must be one of {TRANSPORTS}")
    if transport == "udp":
        from .udp import run_udp_session

        return run_udp_session(profile, proposal, channel, seed, psk, responder_proposals, registry)
    ledger = MemoryLedger()
    tunnel = establish(proposal, seed, ledger, psk, responder_proposals, registry)
    # Collector pauses belong to the interpreter, not to the link being measured.
    gc_was_enabled = gc.isenabled()
    gc.disable()
    try:
        trace = _simulate(profile, tunnel, Channel(channel, seed_int(seed, "channel")), ledger, seed)
    finally:
        if gc_was_enabled:
            gc.enable()
    return finish_trace(trace, proposal, tunnel, ledger)


def finish_trace(trace: PacketTrace, proposal: Proposal, tunnel: EstablishedTunnel,
                 ledger: MemoryLedger) -> PacketTrace:
    trace.kem = "+".join(proposal.addke) or "none"
    trace.encr = proposal.encr
    trace.integ = proposal.integ
    trace.handshake_ms = tunnel.handshake_ms
    trace.handshake_bytes = tunnel.handshake_bytes
    trace.ledger = ledger
    trace.mem_bytes_peak = ledger.peak
    trace.rss_bytes = _rss()
    return trace


def _simulate(profile: TrafficProfile, tunnel: EstablishedTunnel, channel: Channel,
              ledger: MemoryLedger, seed: int) -> PacketTrace:
    n = profile.packet_count
    source = PayloadSource(profile.packet_size, seed)
    dropped, delay_ns = channel.sample(n)
    dropped = dropped.tolist()
    delay_ns = delay_ns.tolist()
    interval = 1e9 / profile.rate

    send_ns = [0] * n
    recv_ns = [LOST] * n
    wire_len = [0] * n
    enc_us = [0.0] * n

    protect = tunnel.du.outbound.protect
    unprotect = tunnel.ru.inbound.unprotect
    clock = cpu_clock
    origin = time.monotonic_ns()
    du_free = origin
    ru_free = origin
    in_flight = []  # heap of (order key, index, arrival ns, wire)
    in_flight_bytes = 0

    def ru_receive(until: float) -> None:
        nonlocal ru_free, in_flight_bytes
        while in_flight and in_flight[0][0] <= until:
            _, i, arrival, wire = heapq.heappop(in_flight)
            in_flight_bytes -= len(wire)
            start = arrival if arrival > ru_free else ru_free
            t0 = clock()
            try:
                plaintext = unprotect(wire)
            except ReplayDetected:
                continue
            done = start + max(1, clock() - t0)
            ru_free = done
            if plaintext != source.payload(i):
                raise PayloadMismatch(f"packet {i} decrypted to different bytes")
            recv_ns[i] = done

    for i in range(n):
        scheduled = origin + int(i * interval)
        ru_receive(scheduled)
        start = scheduled if scheduled > du_free else du_free
        wire, elapsed_us = protect(source.payload(i))
        depart = start + max(1, int(elapsed_us * 1000))
        du_free = depart
        send_ns[i] = start
        wire_len[i] = len(wire)
        enc_us[i] = elapsed_us
        if not dropped[i]:
            heapq.heappush(in_flight, (scheduled + delay_ns[i], i, depart + delay_ns[i], wire))
            in_flight_bytes += len(wire)
        if (i + 1) % CHECKPOINT_EVERY == 0:
            ledger.set("channel", in_flight_bytes)
            ledger.set("packet", profile.packet_size + len(wire))
            ledger.checkpoint(f"packets:{i + 1}")
    ru_receive(float("inf"))
    ledger.free("channel")
    ledger.free("packet")
    return PacketTrace(list(range(1, n + 1)), send_ns, recv_ns, wire_len, enc_us)
