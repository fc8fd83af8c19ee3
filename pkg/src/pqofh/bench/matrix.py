"""The KEM x cipher x hash experiment matrix and its CSV output."""
from __future__ import annotations

import csv
import dataclasses
import hashlib
import os
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Union

from ..flatconf import ConfigError, load_flat, reject_unknown, split_list
from ..ike_hybrid import ENCR, INTEG, Proposal
from ..ike_hybrid.messages import HEADER_LEN, PAYLOAD_HEADER_LEN
from ..ike_hybrid.handshake import NONCE_LEN
from ..kem import KemRegistry, default_registry
from ..kem.dh import get_group
from ..ofh_sim import ChannelModel, PacketTrace, TrafficProfile, run_session
from ..ofh_sim.session import TRANSPORTS
from .metrics import compute_delay, compute_jitter, compute_throughput, measure_encryption_time, measure_memory

CSV_HEADER = (
    "kem,encr,integ,run,status,throughput_mbps,delay_ms_mean,jitter_rfc3550_us,jitter_stddev_us,"
    "enc_time_us_mean,enc_time_us_p99,handshake_ms,handshake_bytes,mem_bytes_peak,rss_bytes_optional"
)
NO_KEM = "none"


@dataclass
class MetricsRow:
    kem: str
    encr: str
    integ: str
    run: int
    status: str = "ok"
    throughput_mbps: Optional[float] = None
    delay_ms_mean: Optional[float] = None
    jitter_rfc3550_us: Optional[float] = None
    jitter_stddev_us: Optional[float] = None
    enc_time_us_mean: Optional[float] = None
    enc_time_us_p99: Optional[float] = None
    handshake_ms: Optional[float] = None
    handshake_bytes: Optional[int] = None
    mem_bytes_peak: Optional[int] = None
    rss_bytes_optional: Optional[int] = None

    @classmethod
    def fields(cls) -> List[str]:
        return [f.name for f in dataclasses.fields(cls)]


assert ",".join(MetricsRow.fields()) == CSV_HEADER

_INT_FIELDS = {"run", "handshake_bytes", "mem_bytes_peak", "rss_bytes_optional"}
_STR_FIELDS = {"kem", "encr", "integ", "status"}
METRIC_FIELDS = [f for f in MetricsRow.fields() if f not in _STR_FIELDS and f != "run"]


@dataclass
class ExperimentSpec:
    kems: Sequence[str]
    encrs: Sequence[str] = ("AES-128",)
    integs: Sequence[str] = ("SHA-256",)
    repetitions: int = 1
    profile: TrafficProfile = field(default_factory=TrafficProfile)
    channel: ChannelModel = field(default_factory=ChannelModel)
    out: Optional[str] = None
    transport: str = "in-process"
    seed: int = 0

    def __post_init__(self):
        if not self.kems or not self.encrs or not self.integs:
            raise ValueError("kem, encr and integ lists must be nonempty")
        if self.repetitions < 1:
            raise ValueError("repetitions must be at least 1")
        if self.transport not in TRANSPORTS:
            raise ValueError(f"transport must be one of {TRANSPORTS}")

    @property
    def cell_count(self) -> int:
        return len(self.kems) * len(self.encrs) * len(self.integs) * self.repetitions


MATRIX_KEYS = ("kems", "encr", "integ", "repetitions", "packet_size", "rate", "duration",
               "base_delay_us", "delay_jitter_us", "loss_rate", "transport", "seed", "out")


def load_matrix(path: Union[str, os.PathLike]) -> ExperimentSpec:
    values = load_flat(path)
    reject_unknown(values, MATRIX_KEYS, str(path))
    try:
        profile = TrafficProfile.from_flat(
            {k: values[k] for k in ("packet_size", "rate", "duration") if k in values}, str(path))
        channel = ChannelModel(
            base_delay_us=float(values.get("base_delay_us", 0)),
            delay_jitter_us=float(values.get("delay_jitter_us", 0)),
            loss_rate=float(values.get("loss_rate", 0)),
        )
        return ExperimentSpec(
            kems=split_list(values.get("kems", "")),
            encrs=split_list(values.get("encr", "AES-128")),
            integs=split_list(values.get("integ", "SHA-256")),
            repetitions=int(values.get("repetitions", 1)),
            profile=profile,
            channel=channel,
            out=values.get("out") or None,
            transport=values.get("transport", "in-process"),
            seed=int(values.get("seed", 0)),
        )
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def proposal_for(kem: str, encr: str, integ: str) -> Proposal:
    addke = () if kem == NO_KEM else tuple(kem.split("+"))
    return Proposal(encr, integ, addke=addke)


def cell_seed(seed: int, kem: str, encr: str, integ: str, run: int) -> int:
    digest = hashlib.sha256(f"{seed}|{kem}|{encr}|{integ}|{run}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


def analytic_handshake_bytes(offered: Sequence[Proposal], chosen: Proposal,
                             registry: Optional[KemRegistry] = None) -> int:
    """Bytes on the wire for one complete handshake, from framing constants and KEM sizes."""
    registry = registry or default_registry()
    group = get_group(chosen.ke)
    ke = PAYLOAD_HEADER_LEN + 2 + group.byte_len
    nonce = PAYLOAD_HEADER_LEN + NONCE_LEN
    notify = PAYLOAD_HEADER_LEN + 2
    sa_req = PAYLOAD_HEADER_LEN + 1 + sum(p.encoded_len() for p in offered)
    sa_resp = PAYLOAD_HEADER_LEN + 1 + chosen.encoded_len()
    total = HEADER_LEN + sa_req + ke + nonce + (notify if any(p.addke for p in offered) else 0)
    total += HEADER_LEN + sa_resp + ke + nonce + (notify if chosen.addke else 0)
    for name in chosen.addke:
        params = registry.get(name).params
        total += HEADER_LEN + PAYLOAD_HEADER_LEN + 1 + params.public_key_len
        total += HEADER_LEN + PAYLOAD_HEADER_LEN + 1 + params.ciphertext_len
    auth = HEADER_LEN + PAYLOAD_HEADER_LEN + chosen.prf_len
    return total + 2 * auth


def metrics_row(trace: PacketTrace, run: int = 0) -> MetricsRow:
    throughput = compute_throughput(trace)
    if trace.n_delivered:
        delay = compute_delay(trace)
    else:
        delay = None
    jitter = compute_jitter(trace) if trace.n_delivered >= 2 else (None, None)
    enc_mean, enc_p99 = measure_encryption_time(trace)
    return MetricsRow(
        kem=trace.kem, encr=trace.encr, integ=trace.integ, run=run, status="ok",
        throughput_mbps=throughput, delay_ms_mean=delay,
        jitter_rfc3550_us=jitter[0], jitter_stddev_us=jitter[1],
        enc_time_us_mean=enc_mean, enc_time_us_p99=enc_p99,
        handshake_ms=trace.handshake_ms, handshake_bytes=trace.handshake_bytes,
        mem_bytes_peak=measure_memory(trace), rss_bytes_optional=trace.rss_bytes,
    )


def _format(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _parse(name: str, text: str):
    if name in _STR_FIELDS:
        return text
    if text == "":
        return None
    if name in _INT_FIELDS:
        return int(text)
    return float(text)


class CsvWriter:
    def __init__(self, path: Union[str, os.PathLike]):
        self._fh = open(path, "w", newline="", encoding="utf-8")
        self._writer = csv.writer(self._fh)
        self._writer.writerow(MetricsRow.fields())
        self._fh.flush()

    def write(self, row: MetricsRow) -> None:
        self._writer.writerow([_format(getattr(row, f)) for f in MetricsRow.fields()])
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def write_csv(rows: Sequence[MetricsRow], path: Union[str, os.PathLike]) -> None:
    with CsvWriter(path) as writer:
        for row in rows:
            writer.write(row)


def read_csv(path: Union[str, os.PathLike]) -> List[MetricsRow]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return []
        if ",".join(header) != CSV_HEADER:
            raise ValueError(f"{path}: unexpected CSV header")
        return [MetricsRow(**{name: _parse(name, text) for name, text in zip(header, record)})
                for record in reader if record]


def run_matrix(spec: ExperimentSpec, registry: Optional[KemRegistry] = None,
               progress: Optional[Callable[[int, int, MetricsRow], None]] = None) -> List[MetricsRow]:
    """Run every cell sequentially; a failing cell becomes a row whose status names the error."""
    writer = CsvWriter(spec.out) if spec.out else None
    rows: List[MetricsRow] = []
    total = spec.cell_count
    try:
        for kem in spec.kems:
            for encr in spec.encrs:
                for integ in spec.integs:
                    for run in range(spec.repetitions):
                        row = _run_cell(spec, kem, encr, integ, run, registry)
                        rows.append(row)
                        if writer:
                            writer.write(row)
                        if progress:
                            progress(len(rows), total, row)
    finally:
        if writer:
            writer.close()
    return rows


def _run_cell(spec, kem, encr, integ, run, registry) -> MetricsRow:
    try:
        proposal = proposal_for(kem, encr, integ)
        trace = run_session(spec.profile, proposal, spec.channel, spec.transport,
                            seed=cell_seed(spec.seed, kem, encr, integ, run), registry=registry)
        row = metrics_row(trace, run)
        row.kem = kem
        return row
    except Exception as exc:  # recorded in the status column; the matrix continues
        return MetricsRow(kem=kem, encr=encr, integ=integ, run=run, status=type(exc).__name__)


def canonical_order(encr: str, integ: str):
    return (ENCR[encr][1] if encr in ENCR else 0, INTEG[integ][2] if integ in INTEG else 0, encr, integ)
