"""Desk-scale LWE key encapsulation.

Plain (IND-CPA style) matrix LWE with one message bit per ciphertext symbol::

    keygen:  B  = A S + E                      pk = rho || pack(B)
    encaps:  C1 = S' A + E'
             C2 = S' B + E'' + encode(K)       ct = pack(C1) || pack(C2)
    decaps:  M  = C2 - C1 S = encode(K) + S'E + E'' - E'S

Secrets and errors are uniform on [-eta, eta], so every coefficient of the
noise term is bounded by ``2*n*eta**2 + eta``. Parameters are rejected
unless that bound is below q/4, which makes decoding exact: there are no
decapsulation failures at all, not just improbable ones.

Z_q elements travel as 2-byte little-endian words.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .base import KemParams, KemProvider, KeyPair, derive, hash_stream

ErrorSampler = Callable[[bytes, int, int], np.ndarray]

RHO_LEN = 16


@dataclass(frozen=True)
class ToyLweParams:
    n: int = 128
    q: int = 8192
    eta: int = 2
    u: int = 8
    w: int = 16

    def __post_init__(self):
        if self.q < 4 or self.q & (self.q - 1):
            raise ValueError("q must be a power of two")
        if self.q > 1 << 16:
            raise ValueError("q must fit a 2-byte word")
        if min(self.n, self.u, self.w, self.eta) < 1:
            raise ValueError("n, u, w, eta must be positive")
        if 4 * self.noise_bound >= self.q:
            raise ValueError(
                f"noise bound {self.noise_bound} is not below q/4 = {self.q // 4}"
            )

    @property
    def noise_bound(self) -> int:
        return 2 * self.n * self.eta**2 + self.eta

    @property
    def message_bits(self) -> int:
        return self.u * self.w

    @property
    def public_key_len(self) -> int:
        return RHO_LEN + 2 * self.n * self.w

    @property
    def ciphertext_len(self) -> int:
        return 2 * self.u * self.n + 2 * self.u * self.w

    @property
    def secret_key_len(self) -> int:
        return 2 * self.n * self.w + self.public_key_len


def expand_matrix(seed: bytes, n: int, q: int) -> np.ndarray:
    """n x n public matrix: 2-byte LE words of the SHA-256 counter stream, masked to log2(q) bits."""
    if q & (q - 1):
        raise ValueError("q must be a power of two")
    words = np.frombuffer(hash_stream(seed, 2 * n * n), dtype="<u2")
    return (words.astype(np.int64) & (q - 1)).reshape(n, n)


def sample_uniform_small(seed: bytes, count: int, eta: int) -> np.ndarray:
    """``count`` integers uniform on [-eta, eta], by byte-wise rejection from the hash stream."""
    span = 2 * eta + 1
    limit = 256 - 256 % span
    want = count + count // 8 + 16
    while True:
        raw = np.frombuffer(hash_stream(seed, want), dtype=np.uint8)
        accepted = raw[raw < limit]
        if accepted.size >= count:
            return accepted[:count].astype(np.int64) % span - eta
        want *= 2


def pack(matrix: np.ndarray, q: int) -> bytes:
    return np.asarray(np.mod(matrix, q), dtype="<u2").tobytes()


def unpack(data: bytes, rows: int, cols: int, q: int) -> np.ndarray:
    words = np.frombuffer(data, dtype="<u2", count=rows * cols)
    return (words.astype(np.int64) & (q - 1)).reshape(rows, cols)


def encode_bits(bits: np.ndarray, q: int) -> np.ndarray:
    return bits.astype(np.int64) * (q // 2)


def decode_symbols(symbols: np.ndarray, q: int) -> np.ndarray:
    m = np.mod(symbols, q)
    return ((m > q // 4) & (m <= 3 * q // 4)).astype(np.uint8)


def bits_from_bytes(data: bytes, nbits: int) -> np.ndarray:
    return np.unpackbits(np.frombuffer(data, dtype=np.uint8), bitorder="little")[:nbits]


def bytes_from_bits(bits: np.ndarray) -> bytes:
    return np.packbits(bits.astype(np.uint8), bitorder="little").tobytes()


def _center(matrix: np.ndarray, q: int) -> np.ndarray:
    m = np.mod(matrix, q)
    return np.where(m > q // 2, m - q, m)


class ToyLweKem(KemProvider):
    def __init__(
        self,
        params: ToyLweParams = ToyLweParams(),
        name: str = "toy-lwe",
        error_sampler: Optional[ErrorSampler] = None,
    ):
        self.name = name
        self.lwe = params
        # Noise hook for tests; secrets are always sampled normally.
        self._errors = error_sampler or sample_uniform_small
        self.params = KemParams(
            public_key_len=params.public_key_len,
            ciphertext_len=params.ciphertext_len,
            shared_secret_len=32,
        )

    # -- raw public-key encryption of a bit vector -----------------------

    def keypair_matrices(self, seed: bytes):
        p = self.lwe
        rho = derive(seed, b"toy-lwe/rho")[:RHO_LEN]
        a = expand_matrix(rho, p.n, p.q)
        s = sample_uniform_small(derive(seed, b"toy-lwe/S"), p.n * p.w, p.eta).reshape(p.n, p.w)
        e = self._errors(derive(seed, b"toy-lwe/E"), p.n * p.w, p.eta).reshape(p.n, p.w)
        b = np.mod(a @ s + e, p.q)
        return rho, a, s, e, b

    def encrypt(self, public_key: bytes, bits: np.ndarray, seed: bytes) -> bytes:
        p = self.lwe
        rho = public_key[:RHO_LEN]
        b = unpack(public_key[RHO_LEN:], p.n, p.w, p.q)
        a = expand_matrix(rho, p.n, p.q)
        s1 = sample_uniform_small(derive(seed, b"toy-lwe/S'"), p.u * p.n, p.eta).reshape(p.u, p.n)
        e1 = self._errors(derive(seed, b"toy-lwe/E'"), p.u * p.n, p.eta).reshape(p.u, p.n)
        e2 = self._errors(derive(seed, b"toy-lwe/E''"), p.u * p.w, p.eta).reshape(p.u, p.w)
        c1 = s1 @ a + e1
        c2 = s1 @ b + e2 + encode_bits(np.asarray(bits).reshape(p.u, p.w), p.q)
        return pack(c1, p.q) + pack(c2, p.q)

    def decrypt(self, secret_key: bytes, ciphertext: bytes) -> np.ndarray:
        p = self.lwe
        s = _center(unpack(secret_key, p.n, p.w, p.q), p.q)
        c1 = unpack(ciphertext, p.u, p.n, p.q)
        c2 = unpack(ciphertext[2 * p.u * p.n :], p.u, p.w, p.q)
        return decode_symbols(c2 - c1 @ s, p.q).reshape(-1)

    def message_bits(self, seed: bytes) -> np.ndarray:
        nbits = self.lwe.message_bits
        return bits_from_bytes(hash_stream(derive(seed, b"toy-lwe/K"), (nbits + 7) // 8), nbits)

    # -- KEM -------------------------------------------------------------

    def _keygen(self, seed):
        rho, _, s, _, b = self.keypair_matrices(seed)
        pk = rho + pack(b, self.lwe.q)
        return KeyPair(pk, pack(s, self.lwe.q) + pk)

    def _encapsulate(self, public_key, seed):
        bits = self.message_bits(seed)
        ct = self.encrypt(public_key, bits, seed)
        return ct, self._bind(bytes_from_bits(bits), public_key, ct)

    def _decapsulate(self, secret_key, ciphertext):
        pk = secret_key[2 * self.lwe.n * self.lwe.w :]
        bits = self.decrypt(secret_key, ciphertext)
        return self._bind(bytes_from_bits(bits), pk, ciphertext)

    @staticmethod
    def _bind(k: bytes, pk: bytes, ct: bytes) -> bytes:
        return hashlib.sha256(k + hashlib.sha256(pk).digest() + hashlib.sha256(ct).digest()).digest()

