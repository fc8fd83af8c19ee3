from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence, Tuple

from ..kem.dh import DEFAULT_GROUP
from .errors import MalformedMessage, NoProposalChosen

# name -> (wire id, key length in bytes)
ENCR = {"AES-128": (12, 16), "AES-192": (13, 24), "AES-256": (14, 32)}
# name -> (wire id, hashlib name, digest length)
INTEG = {"SHA-256": (5, "sha256", 32), "SHA-384": (6, "sha384", 48), "SHA-512": (7, "sha512", 64)}

MAX_ADDKE = 7


def normalize_encr(name: str) -> str:
    key = name.strip().upper()
    if key not in ENCR:
        raise ValueError(f"unknown encryption algorithm {name!r}; expected one of {', '.join(ENCR)}")
    return key


def normalize_integ(name: str) -> str:
    key = name.strip().upper()
    if key.startswith("HMAC-"):
        key = key[5:]
    if key not in INTEG:
        raise ValueError(f"unknown integrity/PRF {name!r}; expected one of {', '.join(INTEG)}")
    return key


@dataclass(frozen=True)
class Proposal:
    encr: str
    integ: str
    ke: int = DEFAULT_GROUP
    addke: Tuple[str, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "encr", normalize_encr(self.encr))
        object.__setattr__(self, "integ", normalize_integ(self.integ))
        object.__setattr__(self, "addke", tuple(self.addke))
        if len(self.addke) > MAX_ADDKE:
            raise ValueError(f"at most {MAX_ADDKE} additional key exchanges (ADDKE1..ADDKE7)")
        if len(set(self.addke)) != len(self.addke):
            raise ValueError("duplicate suite in addke list")
        for name in self.addke:
            if not name or len(name.encode()) > 255:
                raise ValueError(f"bad suite name {name!r}")

    @property
    def enc_key_len(self) -> int:
        return ENCR[self.encr][1]

    @property
    def hash_name(self) -> str:
        return INTEG[self.integ][1]

    @property
    def prf_len(self) -> int:
        return INTEG[self.integ][2]

    def encoded_len(self) -> int:
        return 5 + sum(1 + len(name.encode()) for name in self.addke)

    def to_bytes(self) -> bytes:
        out = bytearray()
        out.append(ENCR[self.encr][0])
        out.append(INTEG[self.integ][0])
        out += self.ke.to_bytes(2, "big")
        out.append(len(self.addke))
        for name in self.addke:
            raw = name.encode()
            out.append(len(raw))
            out += raw
        return bytes(out)


_ENCR_BY_ID = {v[0]: k for k, v in ENCR.items()}
_INTEG_BY_ID = {v[0]: k for k, v in INTEG.items()}


def encode_proposals(proposals: Sequence[Proposal]) -> bytes:
    return bytes([len(proposals)]) + b"".join(p.to_bytes() for p in proposals)


def decode_proposals(data: bytes) -> Tuple[Proposal, ...]:
    try:
        count = data[0]
        offset = 1
        out = []
        for _ in range(count):
            encr = _ENCR_BY_ID[data[offset]]
            integ = _INTEG_BY_ID[data[offset + 1]]
            ke = int.from_bytes(data[offset + 2 : offset + 4], "big")
            n = data[offset + 4]
            offset += 5
            addke = []
            for _ in range(n):
                length = data[offset]
                addke.append(data[offset + 1 : offset + 1 + length].decode())
                offset += 1 + length
            out.append(Proposal(encr, integ, ke, tuple(addke)))
    except (IndexError, KeyError, UnicodeDecodeError, ValueError) as exc:
        raise MalformedMessage(f"bad SA payload: {exc}") from exc
    if offset != len(data):
        raise MalformedMessage("trailing bytes in SA payload")
    return tuple(out)


def match_proposal(offered: Sequence[Proposal], local: Sequence[Proposal]) -> Proposal:
    """First local proposal that the initiator offered verbatim.

    The addke sequence must match exactly, so a responder that insists on
    additional key exchanges never settles for fewer.
    """
    offered = set(offered)
    for candidate in local:
        if candidate in offered:
            return candidate
    raise NoProposalChosen("no offered proposal matches local policy")
