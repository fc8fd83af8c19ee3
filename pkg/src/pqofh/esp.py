"""ESP-style packet protection: AES-CTR then truncated HMAC, with anti-replay.

Wire layout (big-endian)::

    spi:4  seq:4  iv:16  ciphertext:len(payload)  icv:16

``icv`` is the first 16 bytes of HMAC(sk_a, spi | seq | iv | ciphertext).
The IV is ``prefix:8 | seq:4 | 0:4``; the AES-CTR counter block starts at the
IV and increments its last four bytes, so keystreams of different packets
never overlap.
"""
from __future__ import annotations

import hashlib
import hmac
import os
import struct
import time
from dataclasses import dataclass
from typing import Tuple

import numpy as np
from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes

from .ike_hybrid.proposals import ENCR, INTEG

HEADER = struct.Struct(">II")
IV_LEN = 16
ICV_LEN = 16
HEADER_LEN = HEADER.size + IV_LEN
OVERHEAD = HEADER_LEN + ICV_LEN
MAX_PAYLOAD = 65535
WINDOW_SIZE = 64

# Per-thread CPU time: a descheduled endpoint thread is not charged for the wait.
cpu_clock = time.thread_time_ns
SEQ_MAX = 0xFFFFFFFF

_BLOCK_SUFFIX = [i.to_bytes(4, "big") for i in range((MAX_PAYLOAD + 15) // 16 + 1)]


class EspError(Exception):
    pass


class SequenceExhausted(EspError):
    pass


class IcvMismatch(EspError):
    pass


class ReplayDetected(EspError):
    pass


class UnknownSpi(EspError):
    pass


@dataclass
class ReplayWindow:
    highest: int = 0
    bitmap: int = 0  # bit i set <=> (highest - i) already received
    size: int = WINDOW_SIZE

    def check(self, seq: int) -> bool:
        if seq == 0:
            return False
        if seq > self.highest:
            return True
        offset = self.highest - seq
        if offset >= self.size:
            return False
        return not (self.bitmap >> offset) & 1

    def update(self, seq: int) -> bool:
        if not self.check(seq):
            return False
        if seq > self.highest:
            shift = seq - self.highest
            self.bitmap = ((self.bitmap << shift) | 1) & ((1 << self.size) - 1)
            self.highest = seq
        else:
            self.bitmap |= 1 << (self.highest - seq)
        return True


def replay_update(window: ReplayWindow, seq: int) -> Tuple[bool, ReplayWindow]:
    """Pure form of ``ReplayWindow.update``: returns (accepted, new window)."""
    new = ReplayWindow(window.highest, window.bitmap, window.size)
    return new.update(seq), new


def make_iv(prefix: bytes, seq: int) -> bytes:
    return prefix + seq.to_bytes(4, "big") + b"\x00\x00\x00\x00"


class SecurityAssociation:
    """One direction of the tunnel."""

    def __init__(self, spi: int, encr: str, integ: str, enc_key: bytes, auth_key: bytes,
                 iv_prefix: bytes = None):
        if not 0 < spi <= SEQ_MAX:
            raise ValueError("SPI must be a nonzero 32-bit value")
        if len(enc_key) != ENCR[encr][1]:
            raise ValueError(f"{encr} needs a {ENCR[encr][1]}-byte key")
        if len(auth_key) != INTEG[integ][2]:
            raise ValueError(f"HMAC-{integ} needs a {INTEG[integ][2]}-byte key")
        self.spi = spi
        self.encr = encr
        self.integ = integ
        self.enc_key = bytes(enc_key)
        self.auth_key = bytes(auth_key)
        self.iv_prefix = bytes(iv_prefix) if iv_prefix is not None else os.urandom(8)
        if len(self.iv_prefix) != 8:
            raise ValueError("IV prefix must be 8 bytes")
        self.seq = 0
        self.window = ReplayWindow()
        self._spi_bytes = spi.to_bytes(4, "big")
        self._ecb = Cipher(algorithms.AES(self.enc_key), modes.ECB()).encryptor()
        self._mac = hmac.new(self.auth_key, digestmod=INTEG[integ][1])

    def state_bytes(self) -> int:
        """Bytes of live SA state: keys, SPI, counter, IV prefix and the replay window."""
        return len(self.enc_key) + len(self.auth_key) + 4 + 8 + 8 + (WINDOW_SIZE // 8 + 8)

    def _keystream_xor(self, iv: bytes, data: bytes) -> bytes:
        n = len(data)
        if n == 0:
            return b""
        head = iv[:12]
        nblocks = (n + 15) // 16
        blocks = head + head.join(_BLOCK_SUFFIX[:nblocks])
        ks = self._ecb.update(blocks)
        return np.bitwise_xor(np.frombuffer(ks, np.uint8, n), np.frombuffer(data, np.uint8)).tobytes()

    def _icv(self, header: bytes, ciphertext: bytes) -> bytes:
        mac = self._mac.copy()
        mac.update(header)
        mac.update(ciphertext)
        return mac.digest()[:ICV_LEN]

    def protect(self, plaintext: bytes) -> Tuple[bytes, float]:
        """Returns (wire packet, microseconds spent in cipher + MAC)."""
        if len(plaintext) > MAX_PAYLOAD:
            raise ValueError(f"payload larger than {MAX_PAYLOAD} bytes")
        if self.seq >= SEQ_MAX:
            raise SequenceExhausted("32-bit sequence space exhausted; SA must be replaced")
        self.seq += 1
        iv = make_iv(self.iv_prefix, self.seq)
        header = self._spi_bytes + self.seq.to_bytes(4, "big") + iv
        t0 = cpu_clock()
        ct = self._keystream_xor(iv, plaintext)
        icv = self._icv(header, ct)
        elapsed = cpu_clock() - t0
        return header + ct + icv, elapsed / 1000.0

    def unprotect(self, wire: bytes) -> bytes:
        if len(wire) < OVERHEAD:
            raise IcvMismatch("packet shorter than ESP overhead")
        spi, seq = HEADER.unpack_from(wire)
        if spi != self.spi:
            raise UnknownSpi(f"no SA for SPI {spi:#010x}")
        if not self.window.check(seq):
            raise ReplayDetected(f"sequence {seq} replayed or left of window")
        header = wire[:HEADER_LEN]
        ct = wire[HEADER_LEN:-ICV_LEN]
        if not hmac.compare_digest(self._icv(header, ct), wire[-ICV_LEN:]):
            raise IcvMismatch("integrity check failed")
        self.window.update(seq)
        return self._keystream_xor(wire[HEADER.size:HEADER_LEN], ct)


@dataclass
class SaPair:
    outbound: SecurityAssociation
    inbound: SecurityAssociation


def sa_pair_from_schedule(schedule, encr: str, integ: str, role: str,
                          iv_prefixes: Tuple[bytes, bytes] = None) -> SaPair:
    """Outbound/inbound SAs for one peer. Initiator->responder traffic uses sk_ei/sk_ai."""

    def spi_for(label: bytes) -> int:
        value = int.from_bytes(hashlib.sha256(schedule.sk_d + label).digest()[:4], "big")
        return value or 1

    i2r = (spi_for(b"spi/i2r"), schedule.sk_ei, schedule.sk_ai)
    r2i = (spi_for(b"spi/r2i"), schedule.sk_er, schedule.sk_ar)
    if iv_prefixes is None:
        iv_prefixes = (None, None)
    out_params, in_params = (i2r, r2i) if role == "initiator" else (r2i, i2r)
    outbound = SecurityAssociation(out_params[0], encr, integ, out_params[1], out_params[2], iv_prefixes[0])
    inbound = SecurityAssociation(in_params[0], encr, integ, in_params[1], in_params[2], iv_prefixes[1])
    return SaPair(outbound, inbound)
