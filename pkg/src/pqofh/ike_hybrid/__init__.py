"""Hybrid IKEv2-style key establishment with additional key exchanges."""
from .errors import (
    AuthFailure,
    HandshakeError,
    KemFailure,
    MalformedMessage,
    NoProposalChosen,
    StaleMessageId,
    UnexpectedExchange,
)
from .handshake import (
    HandshakeResult,
    HandshakeState,
    Initiator,
    Phase,
    Responder,
    auth_value,
    build_sa_init_request,
    final_key,
    run_handshake,
    select_proposal,
)
from .keys import KeySchedule, combine_keys, derive_key_schedule, initial_key, prf, prf_plus
from .messages import ExchangeType, Message, Payload, PayloadType
from .proposals import ENCR, INTEG, Proposal, match_proposal

__all__ = [
    "AuthFailure", "HandshakeError", "KemFailure", "MalformedMessage", "NoProposalChosen",
    "StaleMessageId", "UnexpectedExchange", "HandshakeResult", "HandshakeState", "Initiator",
    "Phase", "Responder", "auth_value", "build_sa_init_request", "final_key", "run_handshake",
    "select_proposal", "KeySchedule", "combine_keys", "derive_key_schedule", "initial_key",
    "prf", "prf_plus", "ExchangeType", "Message", "Payload", "PayloadType", "ENCR", "INTEG",
    "Proposal", "match_proposal",
]
