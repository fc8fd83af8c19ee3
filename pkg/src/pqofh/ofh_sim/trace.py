"""Per-packet observations of one fronthaul session.

Text dump: ``#``-prefixed ``key=value`` metadata lines, then one record per
packet::

    seq send_ns recv_ns|LOST wire_len enc_time_us
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Union

import numpy as np

LOST = -1


class MemoryLedger:
    """Byte accounting of live handshake buffers, key material and tunnel state.

    Allocations are tagged; ``checkpoint`` records the current total and
    ``peak`` is the largest recorded checkpoint.
    """

    def __init__(self):
        self._live: Dict[str, int] = {}
        self.checkpoints: List[tuple] = []

    def set(self, tag: str, nbytes: int) -> None:
        if nbytes < 0:
            raise ValueError("negative allocation")
        self._live[tag] = nbytes

    def free(self, tag: str) -> None:
        self._live.pop(tag, None)

    @property
    def current(self) -> int:
        return sum(self._live.values())

    def checkpoint(self, label: str) -> int:
        value = self.current
        self.checkpoints.append((label, value))
        return value

    @property
    def peak(self) -> int:
        return max((v for _, v in self.checkpoints), default=0)

    def value_at(self, label: str) -> int:
        for name, value in self.checkpoints:
            if name == label:
                return value
        raise KeyError(label)


@dataclass
class PacketTrace:
    seq: np.ndarray
    send_ns: np.ndarray
    recv_ns: np.ndarray
    wire_len: np.ndarray
    enc_time_us: np.ndarray
    kem: str = "none"
    encr: str = ""
    integ: str = ""
    handshake_ms: float = 0.0
    handshake_bytes: int = 0
    mem_bytes_peak: Optional[int] = None
    rss_bytes: Optional[int] = None
    ledger: Optional[MemoryLedger] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.seq = np.asarray(self.seq, dtype=np.int64)
        self.send_ns = np.asarray(self.send_ns, dtype=np.int64)
        self.recv_ns = np.asarray(self.recv_ns, dtype=np.int64)
        self.wire_len = np.asarray(self.wire_len, dtype=np.int64)
        self.enc_time_us = np.asarray(self.enc_time_us, dtype=np.float64)
        n = len(self.seq)
        for name in ("send_ns", "recv_ns", "wire_len", "enc_time_us"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"{name} has {len(getattr(self, name))} entries, expected {n}")

    def __len__(self):
        return len(self.seq)

    @property
    def delivered(self) -> np.ndarray:
        return self.recv_ns != LOST

    @property
    def n_delivered(self) -> int:
        return int(self.delivered.sum())

    def check(self) -> None:
        if len(self) > 1 and not np.all(np.diff(self.send_ns) > 0):
            raise ValueError("send timestamps must be strictly increasing")
        d = self.delivered
        if np.any(self.recv_ns[d] < self.send_ns[d]):
            raise ValueError("packet received before it was sent")

    _META = ("kem", "encr", "integ", "handshake_ms", "handshake_bytes", "mem_bytes_peak", "rss_bytes")

    def dump(self, path: Union[str, os.PathLike]) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for key in self._META:
                value = getattr(self, key)
                text = "" if value is None else repr(value) if isinstance(value, float) else str(value)
                fh.write(f"# {key}={text}\n")
            for s, t0, t1, wl, enc in zip(self.seq.tolist(), self.send_ns.tolist(), self.recv_ns.tolist(),
                                          self.wire_len.tolist(), self.enc_time_us.tolist()):
                fh.write(f"{s} {t0} {'LOST' if t1 == LOST else t1} {wl} {enc!r}\n")

    @classmethod
    def load(cls, path: Union[str, os.PathLike]) -> "PacketTrace":
        meta: Dict[str, str] = {}
        cols: List[list] = [[], [], [], [], []]
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.strip()
                if not line:
                    continue
                if line.startswith("#"):
                    key, _, value = line[1:].strip().partition("=")
                    meta[key.strip()] = value.strip()
                    continue
                parts = line.split()
                if len(parts) != 5:
                    raise ValueError(f"{path}:{lineno}: expected 5 fields")
                cols[0].append(int(parts[0]))
                cols[1].append(int(parts[1]))
                cols[2].append(LOST if parts[2] == "LOST" else int(parts[2]))
                cols[3].append(int(parts[3]))
                cols[4].append(float(parts[4]))

        def opt(key, conv):
            value = meta.get(key, "")
            return conv(value) if value else None

        return cls(
            *cols,
            kem=meta.get("kem", "none"),
            encr=meta.get("encr", ""),
            integ=meta.get("integ", ""),
            handshake_ms=opt("handshake_ms", float) or 0.0,
            handshake_bytes=opt("handshake_bytes", int) or 0,
            mem_bytes_peak=opt("mem_bytes_peak", int),
            rss_bytes=opt("rss_bytes", int),
        )
