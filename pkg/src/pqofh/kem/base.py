from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Tuple


class KemError(Exception):
    pass


class UnknownSuite(KemError):
    pass


class MalformedPublicKey(KemError):
    pass


class MalformedCiphertext(KemError):
    pass


class InvalidPublicValue(MalformedCiphertext):
    """Diffie-Hellman value outside (1, p-1)."""


@dataclass(frozen=True)
class KemParams:
    public_key_len: int
    ciphertext_len: int
    shared_secret_len: int
    encaps_cost_us: float = 0.0

    def __post_init__(self):
        for name in ("public_key_len", "ciphertext_len", "shared_secret_len"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.shared_secret_len < 16:
            raise ValueError("shared_secret_len must be at least 16")
        if self.encaps_cost_us < 0:
            raise ValueError("encaps_cost_us must be non-negative")


@dataclass(frozen=True)
class KeyPair:
    public_key: bytes
    secret_key: bytes


def hash_stream(seed: bytes, nbytes: int) -> bytes:
    """Counter-mode SHA-256 expansion: SHA-256(seed || ctr) with a 4-byte big-endian ctr from 0."""
    blocks = (nbytes + 31) // 32
    return b"".join(
        hashlib.sha256(seed + ctr.to_bytes(4, "big")).digest() for ctr in range(blocks)
    )[:nbytes]


def derive(seed: bytes, label: bytes) -> bytes:
    return hashlib.sha256(label + b"\x00" + seed).digest()


class KemProvider:
    """Common length checks around the three KEM primitives.

    Subclasses implement ``_keygen``, ``_encapsulate`` and ``_decapsulate``;
    all of them are pure functions of their arguments.
    """

    name: str
    params: KemParams

    def keygen(self, seed: bytes) -> KeyPair:
        return self._keygen(bytes(seed))

    def encapsulate(self, public_key: bytes, seed: bytes) -> Tuple[bytes, bytes]:
        if len(public_key) != self.params.public_key_len:
            raise MalformedPublicKey(
                f"{self.name}: public key is {len(public_key)} bytes, "
                f"expected {self.params.public_key_len}"
            )
        return self._encapsulate(bytes(public_key), bytes(seed))

    def decapsulate(self, secret_key: bytes, ciphertext: bytes) -> bytes:
        if len(ciphertext) != self.params.ciphertext_len:
            raise MalformedCiphertext(
                f"{self.name}: ciphertext is {len(ciphertext)} bytes, "
                f"expected {self.params.ciphertext_len}"
            )
        return self._decapsulate(bytes(secret_key), bytes(ciphertext))

    def _keygen(self, seed: bytes) -> KeyPair:
        raise NotImplementedError

    def _encapsulate(self, public_key: bytes, seed: bytes) -> Tuple[bytes, bytes]:
        raise NotImplementedError

    def _decapsulate(self, secret_key: bytes, ciphertext: bytes) -> bytes:
        raise NotImplementedError

    def __repr__(self):
        return f"<{type(self).__name__} {self.name}>"
