"""Finite-field Diffie-Hellman, both as the classical IKE exchange and as
the ``dh-baseline`` KEM."""
from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Dict, Tuple

from .base import InvalidPublicValue, KemParams, KemProvider, KeyPair, MalformedPublicKey, derive

_MODP_2048 = int(
    "FFFFFFFFFFFFFFFFC90FDAA22168C234C4C6628B80DC1CD1"
    "29024E088A67CC74020BBEA63B139B22514A08798E3404DD"
    "EF9519B3CD3A431B302B0A6DF25F14374FE1356D6D51C245"
    "E485B576625E7EC6F44C42E9A637ED6B0BFF5CB6F406B7ED"
    "EE386BFB5A899FA5AE9F24117C4B1FE649286651ECE45B3D"
    "C2007CB8A163BF0598DA48361C55D39A69163FA8FD24CF5F"
    "83655D23DCA3AD961C62F356208552BB9ED529077096966D"
    "670C354E4ABC9804F1746C08CA18217C32905E462E36CE3B"
    "E39E772C180E86039B2783A2EC07A28FB5C55DF06F4C52C9"
    "DE2BCBF6955817183995497CEA956AE515D2261898FA0510"
    "15728E5A8AACAA68FFFFFFFFFFFFFFFF",
    16,
)


@dataclass(frozen=True)
class DhGroup:
    group_id: int
    p: int
    g: int

    @property
    def byte_len(self) -> int:
        return (self.p.bit_length() + 7) // 8

    @property
    def q(self) -> int:
        return (self.p - 1) // 2


# Safe primes only. Group 0 is a toy group for hand-checkable tests.
GROUPS: Dict[int, DhGroup] = {
    14: DhGroup(14, _MODP_2048, 2),
    0: DhGroup(0, 23, 5),
}
DEFAULT_GROUP = 14


def get_group(group_id: int) -> DhGroup:
    try:
        return GROUPS[group_id]
    except KeyError:
        raise KeyError(f"unknown DH group {group_id}") from None


def dh_public(group: DhGroup, private: int) -> int:
    return pow(group.g, private, group.p)


def dh_keygen(group: DhGroup, seed: bytes) -> Tuple[int, int]:
    # Exponent in [1, q-1]; at most 256 bits for the real groups.
    x = 1 + int.from_bytes(derive(seed, b"dh-exponent"), "big") % (group.q - 1)
    return x, dh_public(group, x)


def check_public(group: DhGroup, value: int) -> None:
    if not 1 < value < group.p - 1:
        raise InvalidPublicValue(f"DH public value out of range for group {group.group_id}")


def dh_shared(group: DhGroup, private: int, peer_public: int) -> bytes:
    check_public(group, peer_public)
    z = pow(peer_public, private, group.p)
    return hashlib.sha256(z.to_bytes(group.byte_len, "big")).digest()


def encode_public(group: DhGroup, value: int) -> bytes:
    return value.to_bytes(group.byte_len, "big")


def decode_public(group: DhGroup, data: bytes) -> int:
    if len(data) != group.byte_len:
        raise InvalidPublicValue(f"DH value is {len(data)} bytes, expected {group.byte_len}")
    value = int.from_bytes(data, "big")
    check_public(group, value)
    return value


class DhKem(KemProvider):
    """Ephemeral-static DH wrapped as a KEM: the ciphertext is g^y."""

    def __init__(self, name: str = "dh-baseline", group_id: int = DEFAULT_GROUP):
        self.name = name
        self.group = get_group(group_id)
        n = self.group.byte_len
        self.params = KemParams(public_key_len=n, ciphertext_len=n, shared_secret_len=32)

    def _keygen(self, seed):
        x, pub = dh_keygen(self.group, seed)
        n = self.group.byte_len
        return KeyPair(encode_public(self.group, pub), x.to_bytes(n, "big"))

    def _encapsulate(self, public_key, seed):
        try:
            peer = decode_public(self.group, public_key)
        except InvalidPublicValue as exc:
            raise MalformedPublicKey(str(exc)) from exc
        y, ct = dh_keygen(self.group, seed)
        return encode_public(self.group, ct), dh_shared(self.group, y, peer)

    def _decapsulate(self, secret_key, ciphertext):
        x = int.from_bytes(secret_key, "big")
        return dh_shared(self.group, x, decode_public(self.group, ciphertext))
