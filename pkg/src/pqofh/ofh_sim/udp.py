"""UDP loopback transport: DU and RU endpoints exchanging real datagrams.

Datagrams that start with four zero bytes are control messages (SPI 0 is
never assigned to an ESP SA); everything else is a raw ESP packet::

    0x00000000  kind:1  body

The handshake rides in IKE control messages with one retransmission per
second and at most three attempts. After the traffic phase the DU sends END
and the RU answers with its receive timestamps in TRAILER records.
"""
from __future__ import annotations

import heapq
import logging
import select
import socket
import struct
import threading
import time
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence, Tuple

from ..esp import EspError, sa_pair_from_schedule
from ..ike_hybrid import HandshakeError, Initiator, Proposal, Responder, StaleMessageId
from ..kem import KemRegistry
from .channel import Channel, ChannelModel
from .session import (
    EstablishedTunnel,
    HandshakeFailed,
    PayloadSource,
    TrafficProfile,
    TransportUnavailable,
    finish_trace,
    seed_bytes,
    seed_int,
)
from .trace import LOST, MemoryLedger, PacketTrace

log = logging.getLogger(__name__)

MARKER = b"\x00\x00\x00\x00"
CTRL_IKE, CTRL_ERROR, CTRL_END, CTRL_TRAILER, CTRL_DONE, CTRL_BYE = range(1, 7)
RETRANSMIT_S = 1.0
MAX_ATTEMPTS = 3
RECORD = struct.Struct(">QQ")
RECORDS_PER_DATAGRAM = 2048
MAX_DATAGRAM = 65535


def control(kind: int, body: bytes = b"") -> bytes:
    return MARKER + bytes([kind]) + body


def parse_addr(text: str) -> Tuple[str, int]:
    host, _, port = text.rpartition(":")
    if not host or not port.isdigit():
        raise ValueError(f"address must be host:port, got {text!r}")
    return host, int(port)


def open_socket(bind: Tuple[str, int] = ("127.0.0.1", 0)) -> socket.socket:
    try:
        sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        sock.setsockopt(socket.SOL_SOCKET, socket.SO_RCVBUF, 8 << 20)
        sock.bind(bind)
    except OSError as exc:
        raise TransportUnavailable(f"cannot bind UDP socket {bind}: {exc}") from exc
    return sock


def _recv(sock: socket.socket, timeout: float):
    ready, _, _ = select.select([sock], [], [], max(timeout, 0.0))
    if not ready:
        return None, None
    try:
        return sock.recvfrom(MAX_DATAGRAM)
    except OSError as exc:
        raise TransportUnavailable(str(exc)) from exc


def _send(sock: socket.socket, data: bytes, addr) -> None:
    try:
        sock.sendto(data, addr)
    except OSError as exc:
        raise TransportUnavailable(f"send to {addr} failed: {exc}") from exc


@dataclass
class DuResult:
    tunnel: EstablishedTunnel
    initiator: Initiator
    trace: PacketTrace
    wire_bytes: int = 0


def du_handshake(sock: socket.socket, peer, initiator: Initiator) -> int:
    """Run the initiator over UDP; returns total handshake bytes (first transmissions)."""
    total = 0
    request = initiator.start()
    while request is not None:
        raw = request.to_bytes()
        total += len(raw)
        response = None
        for attempt in range(MAX_ATTEMPTS):
            _send(sock, control(CTRL_IKE, raw), peer)
            deadline = time.monotonic() + RETRANSMIT_S
            while response is None:
                data, _ = _recv(sock, deadline - time.monotonic())
                if data is None:
                    break
                if not data.startswith(MARKER):
                    continue
                kind, body = data[4], data[5:]
                if kind == CTRL_ERROR:
                    raise HandshakeFailed(body.decode(errors="replace"))
                if kind != CTRL_IKE:
                    continue
                try:
                    next_request = initiator.handle(body)
                except StaleMessageId:
                    continue
                except HandshakeError as exc:
                    raise HandshakeFailed(f"{type(exc).__name__}: {exc}") from exc
                total += len(body)
                response = body
            if response is not None:
                break
            log.info("no response to message %d (attempt %d)", request.message_id, attempt + 1)
        if response is None:
            raise HandshakeFailed(f"handshake timeout after {MAX_ATTEMPTS} attempts")
        request = next_request
    return total


def du_run(sock: socket.socket, peer, proposal: Proposal, profile: TrafficProfile, seed: int,
           psk: bytes, registry: Optional[KemRegistry] = None) -> DuResult:
    ledger = MemoryLedger()
    initiator = Initiator([proposal], psk, seed_bytes(seed, "du"), registry)
    t0 = time.perf_counter_ns()
    hs_bytes = du_handshake(sock, peer, initiator)
    hs_ms = (time.perf_counter_ns() - t0) / 1e6
    state = initiator.state
    du = sa_pair_from_schedule(state.schedule, state.chosen.encr, state.chosen.integ, "initiator",
                               (seed_bytes(seed, "iv/du")[:8], None))
    ledger.set("handshake/du", state.held_bytes)
    ledger.set("ike_sa/du", state.schedule.byte_len())
    ledger.set("sa/du", du.outbound.state_bytes() + du.inbound.state_bytes())
    ledger.checkpoint("post-handshake")
    ledger.free("handshake/du")
    tunnel = EstablishedTunnel(du, None, hs_ms, hs_bytes, [m.dump_line(n) for m, n in state.log])

    n = profile.packet_count
    source = PayloadSource(profile.packet_size, seed)
    send_ns = [0] * n
    wire_len = [0] * n
    enc_us = [0.0] * n
    interval = 1e9 / profile.rate
    protect = du.outbound.protect
    origin = time.monotonic_ns()
    for i in range(n):
        target = origin + int(i * interval)
        now = time.monotonic_ns()
        while now < target:
            if target - now > 200_000:
                time.sleep((target - now - 100_000) / 1e9)
            now = time.monotonic_ns()
        send_ns[i] = now
        wire, elapsed = protect(source.payload(i))
        enc_us[i] = elapsed
        wire_len[i] = len(wire)
        _send(sock, wire, peer)
        if (i + 1) % 1000 == 0:
            ledger.set("packet", profile.packet_size + len(wire))
            ledger.checkpoint(f"packets:{i + 1}")
    ledger.free("packet")

    recv = _collect_trailer(sock, peer, n)
    _send(sock, control(CTRL_BYE), peer)
    recv_ns = [recv.get(i + 1, LOST) for i in range(n)]
    # Pacing is best effort: keep send timestamps strictly increasing.
    for i in range(1, n):
        if send_ns[i] <= send_ns[i - 1]:
            send_ns[i] = send_ns[i - 1] + 1
    trace = PacketTrace(list(range(1, n + 1)), send_ns, recv_ns, wire_len, enc_us)
    finish_trace(trace, proposal, tunnel, ledger)
    return DuResult(tunnel, initiator, trace)


def _collect_trailer(sock, peer, count: int) -> Dict[int, int]:
    body = count.to_bytes(8, "big")
    for _ in range(MAX_ATTEMPTS):
        _send(sock, control(CTRL_END, body), peer)
        records: Dict[int, int] = {}
        deadline = time.monotonic() + RETRANSMIT_S + 2.0
        while True:
            data, _ = _recv(sock, deadline - time.monotonic())
            if data is None:
                break
            if not data.startswith(MARKER):
                continue
            kind, payload = data[4], data[5:]
            if kind == CTRL_TRAILER:
                for off in range(0, len(payload), RECORD.size):
                    seq, ts = RECORD.unpack_from(payload, off)
                    records[seq] = ts
            elif kind == CTRL_DONE:
                if int.from_bytes(payload, "big") == len(records):
                    return records
                break
    raise TransportUnavailable("RU trailer incomplete after retransmissions")


@dataclass
class RuServer:
    """Responder endpoint. ``serve`` handles one session and returns."""

    sock: socket.socket
    proposals: Sequence[Proposal]
    seed: int
    psk: bytes
    channel: ChannelModel = ChannelModel()
    registry: Optional[KemRegistry] = None
    idle_timeout: float = 30.0
    responder: Optional[Responder] = field(default=None, init=False)
    error: Optional[BaseException] = field(default=None, init=False)

    def serve(self) -> Dict[int, int]:
        self.responder = Responder(self.proposals, self.psk, seed_bytes(self.seed, "ru"), self.registry)
        channel = Channel(self.channel, seed_int(self.seed, "channel"))
        last: Tuple[bytes, bytes] = (b"", b"")
        inbound = None
        pending = []  # heap of (deliver_at, order, wire)
        received: Dict[int, int] = {}
        order = 0
        trailer: Optional[list] = None
        sources: Dict[int, PayloadSource] = {}
        idle_deadline = time.monotonic() + self.idle_timeout

        def deliver_due(now_ns: int) -> None:
            while pending and pending[0][0] <= now_ns:
                _, _, wire = heapq.heappop(pending)
                try:
                    plaintext = inbound.unprotect(wire)
                except EspError:
                    continue
                seq = int.from_bytes(wire[4:8], "big")
                source = sources.setdefault(len(plaintext), PayloadSource(len(plaintext), self.seed))
                if plaintext == source.payload(seq - 1):
                    received[seq] = time.monotonic_ns()

        while True:
            timeout = idle_deadline - time.monotonic()
            if pending:
                timeout = min(timeout, (pending[0][0] - time.monotonic_ns()) / 1e9)
            if not pending and time.monotonic() >= idle_deadline:
                if trailer is not None:
                    return received
                raise TransportUnavailable("RU idle timeout")
            data, addr = _recv(self.sock, timeout)
            if inbound is not None:
                deliver_due(time.monotonic_ns())
            if data is None:
                continue
            idle_deadline = time.monotonic() + self.idle_timeout
            if not data.startswith(MARKER):
                if inbound is None:
                    continue
                arrival = time.monotonic_ns()
                dropped, delay = channel.sample(1)
                if not dropped[0]:
                    heapq.heappush(pending, (arrival + int(delay[0]), order, data))
                    order += 1
                    deliver_due(time.monotonic_ns())
                continue
            kind, body = data[4], data[5:]
            if kind == CTRL_IKE:
                if body == last[0]:
                    _send(self.sock, control(CTRL_IKE, last[1]), addr)
                    continue
                try:
                    response = self.responder.handle(body)
                except StaleMessageId:
                    continue
                except HandshakeError as exc:
                    _send(self.sock, control(CTRL_ERROR, type(exc).__name__.encode()), addr)
                    raise HandshakeFailed(f"{type(exc).__name__}: {exc}") from exc
                raw = response.to_bytes()
                last = (body, raw)
                _send(self.sock, control(CTRL_IKE, raw), addr)
                state = self.responder.state
                if state.established and inbound is None:
                    pair = sa_pair_from_schedule(state.schedule, state.chosen.encr, state.chosen.integ,
                                                 "responder", (seed_bytes(self.seed, "iv/ru")[:8], None))
                    inbound = pair.inbound
            elif kind == CTRL_END:
                while pending:
                    time.sleep(max(0.0, (pending[0][0] - time.monotonic_ns()) / 1e9))
                    deliver_due(time.monotonic_ns())
                if trailer is None:
                    trailer = sorted(received.items())
                for start in range(0, len(trailer), RECORDS_PER_DATAGRAM):
                    chunk = trailer[start:start + RECORDS_PER_DATAGRAM]
                    _send(self.sock, control(CTRL_TRAILER, b"".join(RECORD.pack(s, t) for s, t in chunk)), addr)
                _send(self.sock, control(CTRL_DONE, len(trailer).to_bytes(8, "big")), addr)
                # Linger for a retransmitted END or the closing BYE.
                idle_deadline = time.monotonic() + 3 * RETRANSMIT_S + 2.0
            elif kind == CTRL_BYE:
                return received


def run_udp_session(profile: TrafficProfile, proposal: Proposal, channel: ChannelModel, seed: int,
                    psk: bytes, responder_proposals: Optional[Sequence[Proposal]] = None,
                    registry: Optional[KemRegistry] = None) -> PacketTrace:
    """Both endpoints in one process, each on its own thread and loopback socket."""
    ru_sock = open_socket()
    du_sock = open_socket()
    server = RuServer(ru_sock, responder_proposals or [proposal], seed, psk, channel, registry)

    def ru_main():
        try:
            server.serve()
        except BaseException as exc:  # surfaced on the DU thread below
            server.error = exc

    thread = threading.Thread(target=ru_main, name="pqofh-ru", daemon=True)
    thread.start()
    try:
        result = du_run(du_sock, ru_sock.getsockname(), proposal, profile, seed, psk, registry)
    except HandshakeFailed:
        thread.join(timeout=1.0)
        raise
    finally:
        du_sock.close()
    thread.join(timeout=10.0)
    ru_sock.close()
    if server.error is not None and not isinstance(server.error, TransportUnavailable):
        raise server.error
    trace = result.trace
    state = server.responder.state
    # Fold the RU's share into the DU-side ledger so both transports account the same items.
    sa_bytes = 2 * (result.tunnel.du.outbound.state_bytes())
    steady = state.schedule.byte_len() + sa_bytes
    merged = MemoryLedger()
    for label, value in trace.ledger.checkpoints:
        extra = steady + state.held_bytes if label == "post-handshake" else steady
        merged.checkpoints.append((label, value + extra))
    trace.ledger = merged
    trace.mem_bytes_peak = merged.peak
    return trace
