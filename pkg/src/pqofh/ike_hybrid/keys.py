"""Key combining and key-schedule expansion."""
from __future__ import annotations

import hashlib
import hmac
from dataclasses import dataclass

from .proposals import ENCR, INTEG

SK_D_LEN = 32


def prf(hash_name: str, key: bytes, data: bytes) -> bytes:
    return hmac.digest(key, data, hash_name)


def initial_key(dh_secret: bytes, ni: bytes, nr: bytes, hash_name: str) -> bytes:
    """K_0 = PRF(Ni | Nr, g^ir)."""
    return prf(hash_name, ni + nr, dh_secret)


def combine_keys(chain_key: bytes, round_secret: bytes, ni: bytes, nr: bytes, hash_name: str) -> bytes:
    """K_i = PRF(K_{i-1}, s_i | Ni | Nr)."""
    return prf(hash_name, chain_key, round_secret + ni + nr)


@dataclass(frozen=True)
class KeySchedule:
    sk_d: bytes
    sk_ai: bytes
    sk_ar: bytes
    sk_ei: bytes
    sk_er: bytes

    def fingerprint(self) -> str:
        h = hashlib.sha256(self.sk_d + self.sk_ai + self.sk_ar + self.sk_ei + self.sk_er)
        return h.hexdigest()[:16]

    def byte_len(self) -> int:
        return sum(len(k) for k in (self.sk_d, self.sk_ai, self.sk_ar, self.sk_ei, self.sk_er))


def prf_plus(hash_name: str, key: bytes, seed: bytes, length: int) -> bytes:
    """T1 = PRF(K, S | 0x01), Tk = PRF(K, T(k-1) | S | k)."""
    out = b""
    t = b""
    counter = 1
    while len(out) < length:
        if counter > 255:
            raise ValueError("prf+ output limit exceeded")
        t = prf(hash_name, key, t + seed + bytes([counter]))
        out += t
        counter += 1
    return out[:length]


def derive_key_schedule(final_key: bytes, ni: bytes, nr: bytes, hash_name_or_integ: str, encr: str) -> KeySchedule:
    integ = _integ(hash_name_or_integ)
    hash_name, a_len = INTEG[integ][1], INTEG[integ][2]
    e_len = ENCR[encr][1]
    stream = prf_plus(hash_name, final_key, ni + nr, SK_D_LEN + 2 * a_len + 2 * e_len)
    cuts = [SK_D_LEN, a_len, a_len, e_len, e_len]
    parts = []
    offset = 0
    for n in cuts:
        parts.append(stream[offset : offset + n])
        offset += n
    return KeySchedule(*parts)


def _integ(name: str) -> str:
    for integ, (_, hname, _) in INTEG.items():
        if name in (integ, hname):
            return integ
    raise ValueError(f"unknown PRF {name!r}")
