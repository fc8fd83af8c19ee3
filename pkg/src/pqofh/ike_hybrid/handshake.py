"""Initiator and responder state machines for the hybrid handshake.

Message ladder for ``addke = [k1, ..., kn]``::

    SA_INIT       (id 0)      SA, KE, Nonce[, N(INTERMEDIATE_EXCHANGE_SUPPORTED)]
    INTERMEDIATE  (id 1..n)   KEM-PK(k_i)  ->  KEM-CT(k_i)
    AUTH          (id n+1)    AUTH = PRF(psk, transcript_hash)

Each side folds the DH secret and then every KEM secret into a chained key
(see ``keys.combine_keys``) and expands the last link into the key schedule.
"""
from __future__ import annotations

import enum
import hashlib
import hmac
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple, Union

from .. import kem as kemmod
from ..kem import KemError, KemRegistry, KeyPair
from ..kem.base import derive
from ..kem.dh import decode_public, dh_keygen, dh_shared, encode_public, get_group
from .errors import (
    AuthFailure,
    HandshakeError,
    KemFailure,
    MalformedMessage,
    NoProposalChosen,
    StaleMessageId,
    UnexpectedExchange,
)
from .keys import KeySchedule, combine_keys, derive_key_schedule, initial_key, prf
from .messages import (
    INTERMEDIATE_EXCHANGE_SUPPORTED,
    ExchangeType,
    Message,
    Payload,
    PayloadType,
    has_notify,
    ke_body,
    kem_body,
    notify_body,
    split_ke_body,
    split_kem_body,
)
from .proposals import Proposal, decode_proposals, encode_proposals, match_proposal

NONCE_LEN = 32


class Phase(enum.Enum):
    INITIAL = "initial"
    SA_INIT_SENT = "sa_init_sent"
    INTERMEDIATE = "intermediate"
    AUTH_SENT = "auth_sent"
    ESTABLISHED = "established"
    FAILED = "failed"


@dataclass
class HandshakeState:
    role: str
    proposals: Tuple[Proposal, ...]
    phase: Phase = Phase.INITIAL
    chosen: Optional[Proposal] = None
    ni: Optional[bytes] = None
    nr: Optional[bytes] = None
    chain_key: Optional[bytes] = None
    round: int = 0
    transcript_hash: bytes = b""
    schedule: Optional[KeySchedule] = None
    next_message_id: int = 0
    dh_secret: Optional[bytes] = None
    round_secrets: List[bytes] = field(default_factory=list)
    log: List[Tuple[Message, int]] = field(default_factory=list)
    # bytes of handshake buffers and key material this peer holds
    held_bytes: int = 0

    @property
    def rounds_total(self) -> int:
        return len(self.chosen.addke) if self.chosen else 0

    @property
    def established(self) -> bool:
        return self.phase is Phase.ESTABLISHED


def final_key(dh_secret: bytes, round_secrets: Sequence[bytes], ni: bytes, nr: bytes, hash_name: str) -> bytes:
    key = initial_key(dh_secret, ni, nr, hash_name)
    for secret in round_secrets:
        key = combine_keys(key, secret, ni, nr, hash_name)
    return key


def auth_value(psk: bytes, transcript_hash: bytes, hash_name: str) -> bytes:
    return prf(hash_name, psk, transcript_hash)


def build_sa_init_request(proposals: Sequence[Proposal], seed: bytes) -> Message:
    """Stateless form of the initiator's first message (used for inspection and tests)."""
    return Initiator(proposals, psk=b"", seed=seed).start()


def select_proposal(request: Union[Message, bytes], local: Sequence[Proposal]) -> Proposal:
    if isinstance(request, (bytes, bytearray)):
        request = Message.from_bytes(bytes(request))
    if request.exchange_type is not ExchangeType.SA_INIT or request.is_response:
        raise UnexpectedExchange("proposal selection needs an SA_INIT request")
    offered = decode_proposals(request.require(PayloadType.SA).body)
    chosen = match_proposal(offered, local)
    if chosen.addke and not has_notify(request, INTERMEDIATE_EXCHANGE_SUPPORTED):
        raise NoProposalChosen("additional key exchanges need INTERMEDIATE_EXCHANGE_SUPPORTED")
    return chosen


class _Peer:
    role = ""

    def __init__(self, proposals: Sequence[Proposal], psk: bytes, seed: bytes,
                 registry: Optional[KemRegistry] = None):
        proposals = tuple(proposals)
        if not proposals:
            raise ValueError("at least one proposal is required")
        self.state = HandshakeState(role=self.role, proposals=proposals)
        self.psk = bytes(psk)
        self.seed = bytes(seed)
        self.registry = registry if registry is not None else kemmod._registry(None)
        self._transcript = hashlib.sha256()
        self._pending_schedule: Optional[KeySchedule] = None

    # -- helpers -----------------------------------------------------------

    def _kem(self, name: str):
        try:
            return self.registry.get(name)
        except kemmod.UnknownSuite as exc:
            raise KemFailure(f"unknown KEM suite {name}") from exc

    def _record(self, message: Message, raw: bytes) -> None:
        self._transcript.update(raw)
        self.state.transcript_hash = self._transcript.digest()
        self.state.log.append((message, len(raw)))
        self.state.held_bytes += len(raw)

    def _emit(self, message: Message) -> Message:
        self._record(message, message.to_bytes())
        return message

    def _parse(self, incoming: Union[Message, bytes]) -> Tuple[Message, bytes]:
        if isinstance(incoming, Message):
            return incoming, incoming.to_bytes()
        raw = bytes(incoming)
        return Message.from_bytes(raw), raw

    def _fail(self) -> None:
        self.state.phase = Phase.FAILED
        self.state.schedule = None

    def _finish_key_exchange(self) -> None:
        s = self.state
        key = s.chain_key
        self._pending_schedule = derive_key_schedule(key, s.ni, s.nr, s.chosen.integ, s.chosen.encr)

    def _combine(self, secret: bytes) -> None:
        s = self.state
        s.round_secrets.append(secret)
        s.chain_key = combine_keys(s.chain_key, secret, s.ni, s.nr, s.chosen.hash_name)
        s.round += 1

    def _auth_payload(self) -> Payload:
        s = self.state
        return Payload(PayloadType.AUTH, auth_value(self.psk, s.transcript_hash, s.chosen.hash_name))

    def _verify_auth(self, message: Message) -> None:
        s = self.state
        expected = auth_value(self.psk, s.transcript_hash, s.chosen.hash_name)
        got = message.require(PayloadType.AUTH).body
        if not hmac.compare_digest(expected, got):
            self._fail()
            raise AuthFailure("AUTH payload does not match pre-shared key and transcript")

    def handle(self, incoming: Union[Message, bytes]) -> Optional[Message]:
        if self.state.phase in (Phase.ESTABLISHED, Phase.FAILED):
            raise UnexpectedExchange(f"handshake already {self.state.phase.value}")
        message, raw = self._parse(incoming)
        try:
            return self._dispatch(message, raw)
        except (StaleMessageId, UnexpectedExchange):
            # Out-of-order or replayed packets are dropped, the exchange survives.
            raise
        except HandshakeError:
            self._fail()
            raise

    def _dispatch(self, message: Message, raw: bytes) -> Optional[Message]:
        raise NotImplementedError


class Initiator(_Peer):
    role = "initiator"

    def __init__(self, proposals, psk, seed, registry=None):
        super().__init__(proposals, psk, seed, registry)
        groups = {p.ke for p in self.state.proposals}
        if len(groups) != 1:
            raise ValueError("all proposals must use the same classical group")
        self.group = get_group(groups.pop())
        self._round_keys: Optional[KeyPair] = None
        self._awaiting: Optional[Tuple[ExchangeType, int]] = None

    def start(self) -> Message:
        s = self.state
        if s.phase is not Phase.INITIAL:
            raise UnexpectedExchange("SA_INIT already sent")
        s.ni = derive(self.seed, b"ike/nonce")
        self._dh_private, dh_pub = dh_keygen(self.group, derive(self.seed, b"ike/dh"))
        payloads = [
            Payload(PayloadType.SA, encode_proposals(s.proposals)),
            Payload(PayloadType.KE, ke_body(self.group.group_id, encode_public(self.group, dh_pub))),
            Payload(PayloadType.NONCE, s.ni),
        ]
        if any(p.addke for p in s.proposals):
            payloads.append(Payload(PayloadType.NOTIFY, notify_body(INTERMEDIATE_EXCHANGE_SUPPORTED)))
        s.held_bytes += NONCE_LEN + 2 * self.group.byte_len
        return self._request(ExchangeType.SA_INIT, payloads, Phase.SA_INIT_SENT)

    def _request(self, etype: ExchangeType, payloads, phase: Phase) -> Message:
        s = self.state
        msg = Message(etype, s.next_message_id, is_initiator=True, is_response=False, payloads=payloads)
        self._awaiting = (etype, s.next_message_id)
        s.next_message_id += 1
        s.phase = phase
        return self._emit(msg)

    def _dispatch(self, message, raw):
        s = self.state
        if self._awaiting is None:
            raise UnexpectedExchange("no request outstanding")
        etype, msg_id = self._awaiting
        if not message.is_response or message.is_initiator:
            raise UnexpectedExchange("initiator expects responses from the responder")
        if message.message_id < msg_id:
            raise StaleMessageId(f"response id {message.message_id} already processed (expecting {msg_id})")
        if message.message_id != msg_id or message.exchange_type is not etype:
            raise UnexpectedExchange(
                f"expected {etype.name} response id {msg_id}, "
                f"got {message.exchange_type.name} id {message.message_id}"
            )
        if etype is ExchangeType.SA_INIT:
            return self._on_sa_init(message, raw)
        if etype is ExchangeType.INTERMEDIATE:
            return self.run_intermediate_round(message, raw)
        return self.finalize_auth(message, raw)

    def _on_sa_init(self, message, raw):
        s = self.state
        chosen = decode_proposals(message.require(PayloadType.SA).body)
        if len(chosen) != 1 or chosen[0] not in s.proposals:
            raise NoProposalChosen("responder selected a proposal that was not offered")
        s.chosen = chosen[0]
        group_id, public = split_ke_body(message.require(PayloadType.KE).body)
        if group_id != self.group.group_id:
            raise MalformedMessage("responder KE uses another group")
        try:
            peer = decode_public(self.group, public)
        except KemError as exc:
            raise KemFailure(str(exc)) from exc
        s.nr = message.require(PayloadType.NONCE).body
        if len(s.nr) != NONCE_LEN:
            raise MalformedMessage("bad responder nonce length")
        self._record(message, raw)
        s.dh_secret = dh_shared(self.group, self._dh_private, peer)
        s.chain_key = initial_key(s.dh_secret, s.ni, s.nr, s.chosen.hash_name)
        s.held_bytes += NONCE_LEN
        return self._next_request()

    def _next_request(self) -> Message:
        s = self.state
        if s.round < s.rounds_total:
            return self.run_intermediate_round()
        self._finish_key_exchange()
        return self._request(ExchangeType.AUTH, [self._auth_payload()], Phase.AUTH_SENT)

    def run_intermediate_round(self, incoming: Optional[Message] = None, raw: Optional[bytes] = None):
        """Emit the KEM public key for the current round, or consume its ciphertext.

        Returns the next message to send (the following round's request or AUTH).
        """
        s = self.state
        suite = self._kem(s.chosen.addke[s.round])
        if incoming is None:
            self._round_keys = suite.keygen(derive(self.seed, b"ike/kem-keygen/%d" % s.round))
            s.held_bytes += len(self._round_keys.public_key) + len(self._round_keys.secret_key)
            body = kem_body(s.round, self._round_keys.public_key)
            return self._request(ExchangeType.INTERMEDIATE, [Payload(PayloadType.KEM_PK, body)], Phase.INTERMEDIATE)
        index, ct = split_kem_body(incoming.require(PayloadType.KEM_CT).body)
        if index != s.round:
            raise UnexpectedExchange(f"ciphertext for round {index}, expected {s.round}")
        try:
            secret = suite.decapsulate(self._round_keys.secret_key, ct)
        except (KemError, ValueError) as exc:
            raise KemFailure(f"{suite.name}: {exc}") from exc
        self._record(incoming, raw if raw is not None else incoming.to_bytes())
        s.held_bytes += len(ct) + len(secret)
        self._combine(secret)
        return self._next_request()

    def finalize_auth(self, message: Message, raw: bytes) -> None:
        self._verify_auth(message)
        self._record(message, raw)
        s = self.state
        s.schedule = self._pending_schedule
        s.phase = Phase.ESTABLISHED
        self._awaiting = None
        return None


class Responder(_Peer):
    role = "responder"

    def _dispatch(self, message, raw):
        s = self.state
        if message.is_response or not message.is_initiator:
            raise UnexpectedExchange("responder expects requests from the initiator")
        if message.message_id < s.next_message_id:
            raise StaleMessageId(f"request id {message.message_id} already processed")
        if message.message_id > s.next_message_id:
            raise UnexpectedExchange(f"request id {message.message_id}, expected {s.next_message_id}")
        expected = self._expected_exchange()
        if message.exchange_type is not expected:
            raise UnexpectedExchange(f"expected {expected.name}, got {message.exchange_type.name}")
        if expected is ExchangeType.SA_INIT:
            return self._on_sa_init(message, raw)
        if expected is ExchangeType.INTERMEDIATE:
            return self.run_intermediate_round(message, raw)
        return self.finalize_auth(message, raw)

    def _expected_exchange(self) -> ExchangeType:
        s = self.state
        if s.phase is Phase.INITIAL:
            return ExchangeType.SA_INIT
        if s.round < s.rounds_total:
            return ExchangeType.INTERMEDIATE
        return ExchangeType.AUTH

    def _respond(self, request: Message, payloads, phase: Phase) -> Message:
        s = self.state
        msg = Message(request.exchange_type, request.message_id, is_initiator=False, is_response=True,
                      payloads=payloads)
        s.next_message_id = request.message_id + 1
        s.phase = phase
        return self._emit(msg)

    def _on_sa_init(self, message, raw):
        s = self.state
        s.chosen = select_proposal(message, s.proposals)
        group = get_group(s.chosen.ke)
        group_id, public = split_ke_body(message.require(PayloadType.KE).body)
        if group_id != group.group_id:
            raise NoProposalChosen("initiator KE group differs from the selected proposal")
        try:
            peer = decode_public(group, public)
        except KemError as exc:
            raise KemFailure(str(exc)) from exc
        s.ni = message.require(PayloadType.NONCE).body
        if len(s.ni) != NONCE_LEN:
            raise MalformedMessage("bad initiator nonce length")
        self._record(message, raw)
        s.nr = derive(self.seed, b"ike/nonce")
        private, public_r = dh_keygen(group, derive(self.seed, b"ike/dh"))
        s.dh_secret = dh_shared(group, private, peer)
        s.chain_key = initial_key(s.dh_secret, s.ni, s.nr, s.chosen.hash_name)
        s.held_bytes += 2 * NONCE_LEN + 2 * group.byte_len
        payloads = [
            Payload(PayloadType.SA, encode_proposals([s.chosen])),
            Payload(PayloadType.KE, ke_body(group.group_id, encode_public(group, public_r))),
            Payload(PayloadType.NONCE, s.nr),
        ]
        if s.chosen.addke:
            payloads.append(Payload(PayloadType.NOTIFY, notify_body(INTERMEDIATE_EXCHANGE_SUPPORTED)))
        phase = Phase.INTERMEDIATE if s.chosen.addke else Phase.AUTH_SENT
        response = self._respond(message, payloads, phase)
        if not s.chosen.addke:
            self._finish_key_exchange()
        return response

    def run_intermediate_round(self, message: Message, raw: Optional[bytes] = None) -> Message:
        """Encapsulate to the initiator's round public key and answer with the ciphertext."""
        s = self.state
        suite = self._kem(s.chosen.addke[s.round])
        index, pk = split_kem_body(message.require(PayloadType.KEM_PK).body)
        if index != s.round:
            raise UnexpectedExchange(f"public key for round {index}, expected {s.round}")
        try:
            ct, secret = suite.encapsulate(pk, derive(self.seed, b"ike/kem-encaps/%d" % s.round))
        except (KemError, ValueError) as exc:
            raise KemFailure(f"{suite.name}: {exc}") from exc
        self._record(message, raw if raw is not None else message.to_bytes())
        s.held_bytes += len(pk) + len(ct) + len(secret)
        response = self._respond(message, [Payload(PayloadType.KEM_CT, kem_body(index, ct))], Phase.INTERMEDIATE)
        self._combine(secret)
        if s.round == s.rounds_total:
            self._finish_key_exchange()
        return response

    def finalize_auth(self, message: Message, raw: bytes) -> Message:
        self._verify_auth(message)
        self._record(message, raw)
        response = self._respond(message, [self._auth_payload()], Phase.ESTABLISHED)
        self.state.schedule = self._pending_schedule
        return response


@dataclass
class HandshakeResult:
    initiator: Initiator
    responder: Responder
    wire: List[bytes]

    @property
    def total_bytes(self) -> int:
        return sum(len(w) for w in self.wire)

    def dump(self) -> List[str]:
        return [msg.dump_line(n) for msg, n in self.initiator.state.log]


def run_handshake(initiator: Initiator, responder: Responder) -> HandshakeResult:
    """Drive both state machines in one process, passing serialized bytes between them."""
    wire = []
    request = initiator.start()
    while request is not None:
        raw = request.to_bytes()
        wire.append(raw)
        response = responder.handle(raw)
        raw = response.to_bytes()
        wire.append(raw)
        request = initiator.handle(raw)
    return HandshakeResult(initiator, responder, wire)
