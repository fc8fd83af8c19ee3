import hashlib
import hmac
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pqofh.ike_hybrid import (
    AuthFailure,
    ExchangeType,
    Initiator,
    Message,
    NoProposalChosen,
    Phase,
    PayloadType,
    Proposal,
    Responder,
    StaleMessageId,
    build_sa_init_request,
    combine_keys,
    derive_key_schedule,
    final_key,
    initial_key,
    prf_plus,
    run_handshake,
    select_proposal,
)
from pqofh.ike_hybrid.messages import INTERMEDIATE_EXCHANGE_SUPPORTED, has_notify
from pqofh.ike_hybrid.proposals import MalformedMessage, decode_proposals

PSK = b"test-psk"


def handshake(offer, policy=None, psk_i=PSK, psk_r=PSK, seed=b"0"):
    ini = Initiator(offer if isinstance(offer, list) else [offer], psk_i, b"i" + seed)
    res = Responder(policy or (offer if isinstance(offer, list) else [offer]), psk_r, b"r" + seed)
    return ini, res


# --- SA_INIT and proposal selection ----------------------------------------

def test_notify_present_only_with_addke():
    with_kem = build_sa_init_request([Proposal("AES-128", "SHA-256", addke=("toy-lwe",))], b"s")
    without = build_sa_init_request([Proposal("AES-128", "SHA-256")], b"s")
    assert has_notify(with_kem, INTERMEDIATE_EXCHANGE_SUPPORTED)
    assert not has_notify(without, INTERMEDIATE_EXCHANGE_SUPPORTED)
    assert without.get(PayloadType.NOTIFY) is None


def test_proposal_order_preserved():
    p1 = Proposal("AES-256", "SHA-512", addke=("mock-bike",))
    p2 = Proposal("AES-128", "SHA-256", addke=("toy-lwe",))
    msg = Message.from_bytes(build_sa_init_request([p1, p2], b"s").to_bytes())
    assert decode_proposals(msg.require(PayloadType.SA).body) == (p1, p2)


def test_select_exact_match():
    p = Proposal("AES-128", "SHA-256", addke=("toy-lwe",))
    assert select_proposal(build_sa_init_request([p], b"s"), [p]) == p


def test_select_rejects_downgrade():
    offer = Proposal("AES-128", "SHA-256")
    need = Proposal("AES-128", "SHA-256", addke=("toy-lwe",))
    with pytest.raises(NoProposalChosen):
        select_proposal(build_sa_init_request([offer], b"s"), [need])


def test_select_second_offer():
    p1 = Proposal("AES-128", "SHA-256", addke=("mock-bike",))
    p2 = Proposal("AES-128", "SHA-256", addke=("toy-lwe",))
    assert select_proposal(build_sa_init_request([p1, p2], b"s"), [p2]) == p2


def test_select_requires_notify_for_addke():
    p = Proposal("AES-128", "SHA-256", addke=("toy-lwe",))
    msg = build_sa_init_request([p], b"s")
    msg.payloads = [pl for pl in msg.payloads if pl.type is not PayloadType.NOTIFY]
    with pytest.raises(NoProposalChosen):
        select_proposal(msg.to_bytes(), [p])


def test_addke_order_matters():
    a = Proposal("AES-128", "SHA-256", addke=("toy-lwe", "mock-bike"))
    b = Proposal("AES-128", "SHA-256", addke=("mock-bike", "toy-lwe"))
    with pytest.raises(NoProposalChosen):
        select_proposal(build_sa_init_request([a], b"s"), [b])


def test_proposal_validation():
    with pytest.raises(ValueError):
        Proposal("AES-512", "SHA-256")
    with pytest.raises(ValueError):
        Proposal("AES-128", "SHA-256", addke=("toy-lwe", "toy-lwe"))
    with pytest.raises(ValueError):
        Proposal("AES-128", "SHA-256", addke=tuple(f"k{i}" for i in range(8)))
    assert Proposal("AES-128", "HMAC-SHA-384").integ == "SHA-384"


def test_truncated_message_is_malformed():
    raw = build_sa_init_request([Proposal("AES-128", "SHA-256")], b"s").to_bytes()
    with pytest.raises(MalformedMessage):
        Message.from_bytes(raw[:-3])


# --- full exchanges ---------------------------------------------------------

@pytest.mark.parametrize("addke", [(), ("toy-lwe",), ("toy-lwe", "mock-bike"), ("mock-frodo", "mock-hqc", "dh-baseline")])
def test_ladder_and_message_ids(addke):
    ini, res = handshake(Proposal("AES-192", "SHA-384", addke=addke))
    result = run_handshake(ini, res)
    log = ini.state.log
    kinds = [m.exchange_type for m, _ in log]
    assert kinds.count(ExchangeType.INTERMEDIATE) == 2 * len(addke)
    assert kinds[:2] == [ExchangeType.SA_INIT] * 2 and kinds[-2:] == [ExchangeType.AUTH] * 2
    ids = [m.message_id for m, _ in log]
    assert ids[0::2] == ids[1::2] == list(range(len(addke) + 2))
    assert [m.direction for m, _ in log] == ["I->R", "R->I"] * (len(addke) + 2)
    assert ini.state.established and res.state.established
    assert ini.state.schedule == res.state.schedule
    assert ini.state.chain_key == res.state.chain_key
    assert len(result.dump()) == 2 * (len(addke) + 2)


def test_schedule_lengths_aes128_sha256():
    ini, res = handshake(Proposal("AES-128", "SHA-256"))
    run_handshake(ini, res)
    s = ini.state.schedule
    assert len(s.sk_ei) == len(s.sk_er) == 16
    assert len(s.sk_ai) == len(s.sk_ar) == 32
    assert len(s.sk_d) == 32


def test_psk_mismatch_fails_without_schedule():
    ini, res = handshake(Proposal("AES-128", "SHA-256", addke=("toy-lwe",)), psk_r=b"other")
    with pytest.raises(AuthFailure):
        run_handshake(ini, res)
    assert res.state.phase is Phase.FAILED
    assert res.state.schedule is None and ini.state.schedule is None


def test_tampered_sa_init_detected_by_auth():
    p = Proposal("AES-128", "SHA-256", addke=("toy-lwe",))
    ini, res = handshake(p)
    req = ini.start().to_bytes()
    resp = bytearray(res.handle(req).to_bytes())
    # Flip a byte inside the responder nonce: both sides parse it, transcripts diverge.
    nr = res.state.nr
    pos = bytes(resp).index(nr) + 5
    resp[pos] ^= 0x01
    request = ini.handle(bytes(resp))
    with pytest.raises(AuthFailure):
        while request is not None:
            request = ini.handle(res.handle(request.to_bytes()).to_bytes())
    assert not ini.state.established and not res.state.established


def test_replayed_round_one_response_is_stale():
    p = Proposal("AES-128", "SHA-256", addke=("toy-lwe", "mock-bike"))
    ini, res = handshake(p)
    r0 = res.handle(ini.start().to_bytes()).to_bytes()
    req1 = ini.handle(r0)
    resp1 = res.handle(req1.to_bytes()).to_bytes()
    req2 = ini.handle(resp1)
    assert req2.message_id == 2
    with pytest.raises(StaleMessageId):
        ini.handle(resp1)
    with pytest.raises(StaleMessageId):
        res.handle(req1.to_bytes())
    # The exchange survives the stale packet.
    request = req2
    while request is not None:
        request = ini.handle(res.handle(request.to_bytes()).to_bytes())
    assert ini.state.schedule == res.state.schedule


def test_responder_never_selects_unoffered_addke():
    offer = [Proposal("AES-128", "SHA-256", addke=("mock-bike",))]
    policy = [Proposal("AES-128", "SHA-256", addke=("toy-lwe",)), offer[0]]
    ini, res = handshake(offer, policy)
    run_handshake(ini, res)
    assert res.state.chosen == offer[0]


# --- key derivation oracles -------------------------------------------------

def test_empty_chain_is_initial_key():
    ni, nr, dh = b"\x01" * 32, b"\x02" * 32, b"\x03" * 32
    assert final_key(dh, [], ni, nr, "sha256") == initial_key(dh, ni, nr, "sha256")
    assert initial_key(dh, ni, nr, "sha256") == hmac.new(ni + nr, dh, "sha256").digest()


def test_combine_zero_inputs_oracle():
    zero = bytes(32)
    expect = hmac.new(zero, zero + zero + zero, hashlib.sha256).digest()
    assert combine_keys(zero, zero, zero, zero, "sha256") == expect


def test_combine_avalanche():
    rng = random.Random(11)
    key, secret, ni, nr = (bytes(rng.randrange(256) for _ in range(32)) for _ in range(4))
    base = combine_keys(key, secret, ni, nr, "sha256")
    for _ in range(1000):
        s = bytearray(secret)
        s[rng.randrange(32)] ^= rng.randrange(1, 256)
        assert combine_keys(key, bytes(s), ni, nr, "sha256") != base


def oracle_prf_plus(key, seed, n):
    out, t, i = b"", b"", 1
    while len(out) < n:
        t = hmac.new(key, t + seed + bytes([i]), hashlib.sha256).digest()
        out += t
        i += 1
    return out[:n]


def test_key_schedule_vector():
    fk, ni, nr = bytes(32), b"\x01" * 32, b"\x01" * 32
    stream = oracle_prf_plus(fk, ni + nr, 32 + 32 + 32 + 16 + 16)
    s = derive_key_schedule(fk, ni, nr, "SHA-256", "AES-128")
    assert s.sk_d == stream[:32]
    assert s.sk_ai == stream[32:64] and s.sk_ar == stream[64:96]
    assert s.sk_ei == stream[96:112] and s.sk_er == stream[112:128]
    assert prf_plus("sha256", fk, ni + nr, 128) == stream


@settings(max_examples=40)
@given(st.lists(st.binary(min_size=16, max_size=64), min_size=0, max_size=4), st.data())
def test_final_key_depends_on_every_secret(secrets, data):
    dh = b"\x05" * 32
    ni, nr = b"\x06" * 32, b"\x07" * 32
    base = final_key(dh, secrets, ni, nr, "sha384")
    index = data.draw(st.integers(-1, len(secrets) - 1))
    replacement = data.draw(st.binary(min_size=16, max_size=64))
    if index < 0:
        if replacement == dh:
            return
        assert final_key(replacement, secrets, ni, nr, "sha384") != base
    else:
        if replacement == secrets[index]:
            return
        swapped = list(secrets)
        swapped[index] = replacement
        assert final_key(dh, swapped, ni, nr, "sha384") != base
