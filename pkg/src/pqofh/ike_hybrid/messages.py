"""Handshake messages and their binary encoding.

Message layout (all integers big-endian)::

    exchange_type:1  flags:1  message_id:4  total_length:4  payload*

    payload := type:1  length:4  body[length]

This is a compact framing of IKEv2 semantics, not the RFC 7296 wire format.
"""
from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, field
from typing import List, Optional

from .errors import MalformedMessage

HEADER = struct.Struct(">BBII")
PAYLOAD_HEADER = struct.Struct(">BI")
HEADER_LEN = HEADER.size
PAYLOAD_HEADER_LEN = PAYLOAD_HEADER.size

FLAG_INITIATOR = 0x08
FLAG_RESPONSE = 0x20

INTERMEDIATE_EXCHANGE_SUPPORTED = 16438


class ExchangeType(enum.IntEnum):
    SA_INIT = 34
    AUTH = 35
    INTERMEDIATE = 43


class PayloadType(enum.IntEnum):
    SA = 33
    KE = 34
    AUTH = 39
    NONCE = 40
    NOTIFY = 41
    KEM_PK = 200
    KEM_CT = 201


PAYLOAD_ABBREV = {
    PayloadType.SA: "SA",
    PayloadType.KE: "KE",
    PayloadType.AUTH: "AUTH",
    PayloadType.NONCE: "Nonce",
    PayloadType.NOTIFY: "N",
    PayloadType.KEM_PK: "KEM-PK",
    PayloadType.KEM_CT: "KEM-CT",
}


@dataclass
class Payload:
    type: PayloadType
    body: bytes

    def __len__(self):
        return PAYLOAD_HEADER_LEN + len(self.body)


@dataclass
class Message:
    exchange_type: ExchangeType
    message_id: int
    is_initiator: bool
    is_response: bool
    payloads: List[Payload] = field(default_factory=list)

    @property
    def direction(self) -> str:
        return "I->R" if self.is_initiator else "R->I"

    def get(self, ptype: PayloadType) -> Optional[Payload]:
        for payload in self.payloads:
            if payload.type == ptype:
                return payload
        return None

    def get_all(self, ptype: PayloadType) -> List[Payload]:
        return [p for p in self.payloads if p.type == ptype]

    def require(self, ptype: PayloadType) -> Payload:
        payload = self.get(ptype)
        if payload is None:
            raise MalformedMessage(f"{self.exchange_type.name} message lacks {ptype.name} payload")
        return payload

    def to_bytes(self) -> bytes:
        flags = (FLAG_INITIATOR if self.is_initiator else 0) | (FLAG_RESPONSE if self.is_response else 0)
        body = b"".join(PAYLOAD_HEADER.pack(p.type, len(p.body)) + p.body for p in self.payloads)
        return HEADER.pack(self.exchange_type, flags, self.message_id, HEADER_LEN + len(body)) + body

    @classmethod
    def from_bytes(cls, data: bytes) -> "Message":
        if len(data) < HEADER_LEN:
            raise MalformedMessage("truncated header")
        etype, flags, msg_id, total = HEADER.unpack_from(data)
        if total != len(data):
            raise MalformedMessage(f"length field {total} != datagram length {len(data)}")
        try:
            etype = ExchangeType(etype)
        except ValueError:
            raise MalformedMessage(f"unknown exchange type {etype}") from None
        payloads = []
        offset = HEADER_LEN
        while offset < total:
            if offset + PAYLOAD_HEADER_LEN > total:
                raise MalformedMessage("truncated payload header")
            ptype, length = PAYLOAD_HEADER.unpack_from(data, offset)
            offset += PAYLOAD_HEADER_LEN
            if offset + length > total:
                raise MalformedMessage("payload overruns message")
            try:
                ptype = PayloadType(ptype)
            except ValueError:
                raise MalformedMessage(f"unknown payload type {ptype}") from None
            payloads.append(Payload(ptype, data[offset : offset + length]))
            offset += length
        return cls(etype, msg_id, bool(flags & FLAG_INITIATOR), bool(flags & FLAG_RESPONSE), payloads)

    def dump_line(self, total_bytes: Optional[int] = None) -> str:
        """``dir msg_id exchange_type payload_types total_bytes``"""
        if total_bytes is None:
            total_bytes = len(self.to_bytes())
        kinds = ",".join(PAYLOAD_ABBREV[p.type] for p in self.payloads) or "-"
        return f"{self.direction} {self.message_id} {self.exchange_type.name} {kinds} {total_bytes}"


def notify_body(notify_type: int) -> bytes:
    return notify_type.to_bytes(2, "big")


def has_notify(message: Message, notify_type: int) -> bool:
    return any(p.body[:2] == notify_body(notify_type) for p in message.get_all(PayloadType.NOTIFY))


def kem_body(round_index: int, data: bytes) -> bytes:
    return bytes([round_index]) + data


def split_kem_body(body: bytes):
    if not body:
        raise MalformedMessage("empty KEM payload")
    return body[0], body[1:]


def ke_body(group_id: int, public: bytes) -> bytes:
    return group_id.to_bytes(2, "big") + public


def split_ke_body(body: bytes):
    if len(body) < 2:
        raise MalformedMessage("truncated KE payload")
    return int.from_bytes(body[:2], "big"), body[2:]
