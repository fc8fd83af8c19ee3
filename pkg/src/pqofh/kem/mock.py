"""Size- and cost-faithful stand-ins for KEMs that are not implemented here.

A mock reproduces what the protocol can observe about a real KEM: the
public-key and ciphertext lengths on the wire, the shared-secret length,
and an encapsulation delay. It offers no secrecy at all.
"""
from __future__ import annotations

import hmac
import time

from .base import KemParams, KemProvider, KeyPair, derive, hash_stream

SEED_LEN = 32


def busy_wait_us(micros: float) -> None:
    if micros <= 0:
        return
    deadline = time.perf_counter_ns() + int(micros * 1000)
    while time.perf_counter_ns() < deadline:
        pass


class MockKem(KemProvider):
    def __init__(self, name: str, params: KemParams):
        if params.ciphertext_len < SEED_LEN:
            raise ValueError(f"{name}: mock ciphertext must hold a {SEED_LEN}-byte seed")
        self.name = name
        self.params = params

    def _secret(self, public_key: bytes, seed: bytes) -> bytes:
        key = hmac.digest(self.name.encode(), public_key + seed, "sha256")
        return hash_stream(key, self.params.shared_secret_len)

    def _keygen(self, seed):
        pk = hash_stream(derive(seed, b"mock/pk/" + self.name.encode()), self.params.public_key_len)
        # The "secret" key is the public key: decapsulation only needs to recompute the keyed hash.
        return KeyPair(pk, pk)

    def _encapsulate(self, public_key, seed):
        busy_wait_us(self.params.encaps_cost_us)
        seed = derive(seed, b"mock/encaps")
        filler = hash_stream(seed + b"/filler", self.params.ciphertext_len - SEED_LEN)
        return seed + filler, self._secret(public_key, seed)

    def _decapsulate(self, secret_key, ciphertext):
        if len(secret_key) != self.params.public_key_len:
            raise ValueError(f"{self.name}: secret key has wrong length")
        return self._secret(secret_key, ciphertext[:SEED_LEN])
