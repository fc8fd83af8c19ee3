"""Desk-scale emulation of the DU <-> RU Open Fronthaul link."""
from .channel import Channel, ChannelModel, inject_channel
from .session import (
    TRANSPORTS,
    HandshakeFailed,
    PayloadMismatch,
    PayloadSource,
    TrafficProfile,
    TransportUnavailable,
    establish,
    run_session,
    seed_bytes,
)
from .trace import LOST, MemoryLedger, PacketTrace

__all__ = [
    "Channel", "ChannelModel", "inject_channel", "TRANSPORTS", "HandshakeFailed", "PayloadMismatch",
    "PayloadSource", "TrafficProfile", "TransportUnavailable", "establish", "run_session",
    "seed_bytes", "LOST", "MemoryLedger", "PacketTrace",
]
