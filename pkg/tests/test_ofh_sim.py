import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pqofh.bench import analytic_handshake_bytes
from pqofh.flatconf import ConfigError
from pqofh.ike_hybrid import Proposal
from pqofh.ofh_sim import (
    LOST,
    Channel,
    ChannelModel,
    HandshakeFailed,
    PacketTrace,
    PayloadSource,
    TrafficProfile,
    inject_channel,
    run_session,
)

SHORT = TrafficProfile(packet_size=1200, rate=10_000, duration=0.1)
BASE = Proposal("AES-128", "SHA-256")


def test_profile_defaults_and_validation():
    p = TrafficProfile()
    assert (p.packet_size, p.rate, p.duration, p.packet_count) == (1200, 10_000, 10, 100_000)
    for bad in ({"rate": 0}, {"rate": -1}, {"packet_size": 0}, {"duration": -1}, {"pattern": "bursty"}):
        with pytest.raises(ValueError):
            TrafficProfile(**bad)
    with pytest.raises(ConfigError):
        TrafficProfile.from_flat({"rate": "0"})
    with pytest.raises(ConfigError, match="unknown"):
        TrafficProfile.from_flat({"burst": "3"})


def test_channel_validation():
    with pytest.raises(ValueError):
        ChannelModel(loss_rate=1.5)
    with pytest.raises(ValueError):
        ChannelModel(base_delay_us=-1)


def test_loss_one_drops_everything():
    ch = Channel(ChannelModel(loss_rate=1.0), seed=3)
    assert all(inject_channel(i, ch) is None for i in range(1000))


def test_loss_half_binomial_interval():
    dropped, _ = Channel(ChannelModel(loss_rate=0.5), seed=9).sample(10_000)
    assert 4_700 <= int((~dropped).sum()) <= 5_300


def test_zero_jitter_is_exact_base():
    _, delay = Channel(ChannelModel(base_delay_us=450), seed=1).sample(5000)
    assert np.all(delay == 450_000)


@settings(max_examples=30)
@given(seed=st.integers(0, 2**63), loss=st.floats(0, 1), jitter=st.floats(0, 500))
def test_channel_deterministic(seed, loss, jitter):
    model = ChannelModel(100, jitter, loss)
    a = Channel(model, seed).sample(200)
    b = Channel(model, seed).sample(200)
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])
    assert np.all(a[1] >= 0)


def test_payload_source_tags_sequence():
    src = PayloadSource(1200, seed=4)
    assert len(src.payload(7)) == 1200
    assert src.payload(7)[:8] == (7).to_bytes(8, "big")
    assert src.payload(7)[8:] == src.payload(8)[8:]
    assert len(PayloadSource(3).payload(5)) == 3


def test_lossless_delivers_all():
    trace = run_session(SHORT, BASE, ChannelModel(), seed=1)
    assert len(trace) == 1000 and trace.n_delivered == 1000
    trace.check()
    assert np.all(trace.wire_len == 1240)


def test_injected_delay_is_lower_bound():
    trace = run_session(SHORT, BASE, ChannelModel(base_delay_us=500), seed=2)
    delay_us = (trace.recv_ns - trace.send_ns) / 1000
    assert delay_us.min() >= 500
    assert np.median(delay_us) < 500 + 200


def test_zero_delay_under_sanity_ceiling():
    trace = run_session(TrafficProfile(duration=0.2), BASE, ChannelModel(), seed=3)
    delay_ms = (trace.recv_ns - trace.send_ns) / 1e6
    assert delay_ms.max() < 5.0


def test_loss_recorded_as_lost():
    trace = run_session(SHORT, BASE, ChannelModel(loss_rate=0.3), seed=4)
    assert trace.n_delivered < len(trace)
    assert np.all(trace.recv_ns[~trace.delivered] == LOST)


def test_delivery_pattern_reproducible():
    model = ChannelModel(base_delay_us=300, delay_jitter_us=250, loss_rate=0.1)
    a = run_session(SHORT, BASE, model, seed=5)
    b = run_session(SHORT, BASE, model, seed=5)
    assert np.array_equal(a.delivered, b.delivered)
    assert np.array_equal(np.argsort(a.recv_ns[a.delivered], kind="stable"),
                          np.argsort(b.recv_ns[b.delivered], kind="stable"))
    assert a.handshake_bytes == b.handshake_bytes and a.mem_bytes_peak == b.mem_bytes_peak


def test_handshake_bytes_difference_is_kem_sizes(registry):
    hybrid = Proposal("AES-128", "SHA-256", addke=("toy-lwe", "mock-frodo"))
    empty = TrafficProfile(duration=0)
    a = run_session(empty, hybrid, seed=6)
    b = run_session(empty, BASE, seed=6)
    kem_bytes = sum(registry.get(k).params.public_key_len + registry.get(k).params.ciphertext_len
                    for k in hybrid.addke)
    # per round: two headers (10) + two payload headers (5) + two round-index bytes;
    # one notify each way; each SA payload also names the ADDKE suites (length byte + name)
    names = sum(1 + len(k) for k in hybrid.addke)
    framing = 2 * (2 * 10 + 2 * 5 + 2) + 2 * 7 + 2 * names
    assert a.handshake_bytes - b.handshake_bytes == kem_bytes + framing
    assert a.handshake_bytes == analytic_handshake_bytes([hybrid], hybrid, registry)


def test_zero_packets_peak_is_post_handshake():
    trace = run_session(TrafficProfile(duration=0), Proposal("AES-128", "SHA-256", addke=("toy-lwe",)))
    assert len(trace) == 0
    assert trace.ledger.peak == trace.ledger.value_at("post-handshake") == trace.mem_bytes_peak


def test_ledger_larger_with_toy_lwe():
    a = run_session(SHORT, BASE, seed=7)
    b = run_session(SHORT, Proposal("AES-128", "SHA-256", addke=("toy-lwe",)), seed=7)
    assert b.mem_bytes_peak - a.mem_bytes_peak >= 4112 + 2304


def test_mismatched_policy_raises():
    with pytest.raises(HandshakeFailed, match="NoProposalChosen"):
        run_session(SHORT, BASE, responder_proposals=[Proposal("AES-128", "SHA-256", addke=("toy-lwe",))])


def test_trace_dump_round_trip(tmp_path):
    trace = run_session(SHORT, BASE, ChannelModel(loss_rate=0.2), seed=8)
    path = tmp_path / "t.trace"
    trace.dump(path)
    back = PacketTrace.load(path)
    for name in ("seq", "send_ns", "recv_ns", "wire_len", "enc_time_us"):
        assert np.array_equal(getattr(back, name), getattr(trace, name))
    for name in ("kem", "encr", "integ", "handshake_ms", "handshake_bytes", "mem_bytes_peak", "rss_bytes"):
        assert getattr(back, name) == getattr(trace, name)
    assert "LOST" in path.read_text()


def test_trace_check_rejects_time_travel():
    t = PacketTrace([1, 2], [10, 20], [5, 30], [40, 40], [1.0, 1.0])
    with pytest.raises(ValueError):
        t.check()
    with pytest.raises(ValueError):
        PacketTrace([1, 2], [10], [5, 30], [40, 40], [1.0, 1.0])


def test_udp_loopback_same_schema():
    profile = TrafficProfile(duration=0.2, rate=5000)
    proposal = Proposal("AES-128", "SHA-256", addke=("toy-lwe",))
    udp = run_session(profile, proposal, transport="udp", seed=9)
    local = run_session(profile, proposal, seed=9)
    assert udp.n_delivered == len(udp) == 1000
    assert udp.handshake_bytes == local.handshake_bytes
    assert (udp.kem, udp.encr, udp.integ) == (local.kem, local.encr, local.integ)
    udp.check()


def test_udp_policy_mismatch():
    with pytest.raises(HandshakeFailed):
        run_session(SHORT, BASE, transport="udp",
                    responder_proposals=[Proposal("AES-128", "SHA-256", addke=("toy-lwe",))])
