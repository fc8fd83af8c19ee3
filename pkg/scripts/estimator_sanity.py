"""Inject a known channel and compare the estimators with their analytic values."""
import argparse
import math

from pqofh.bench import compute_delay, compute_jitter, compute_throughput
from pqofh.ike_hybrid import Proposal
from pqofh.ofh_sim import ChannelModel, TrafficProfile, run_session


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--base-delay-us", type=float, default=450.0)
    ap.add_argument("--jitter-us", type=float, default=170.0)
    ap.add_argument("--packets", type=int, default=10_000)
    ap.add_argument("--kem", default="none")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    profile = TrafficProfile(packet_size=1200, rate=10_000, duration=args.packets / 10_000)
    addke = () if args.kem == "none" else (args.kem,)
    proposal = Proposal("AES-128", "SHA-256", addke=addke)

    floor = run_session(profile, proposal, ChannelModel(), seed=args.seed)
    floor_ms = compute_delay(floor)
    trace = run_session(profile, proposal, ChannelModel(args.base_delay_us, args.jitter_us), seed=args.seed)

    delay = compute_delay(trace)
    rfc, sd = compute_jitter(trace)
    expect_delay = args.base_delay_us / 1000 + floor_ms
    expect_sd = args.jitter_us / math.sqrt(3)
    print(f"delay      {delay:.4f} ms  expected {expect_delay:.4f} ms ({100 * (delay / expect_delay - 1):+.2f}%)")
    print(f"stddev     {sd:.2f} us   expected {expect_sd:.2f} us ({100 * (sd / expect_sd - 1):+.2f}%)")
    print(f"rfc3550 J  {rfc:.2f} us")
    tp = compute_throughput(trace)
    print(f"throughput {tp:.3f} Mbps expected {profile.payload_rate_mbps:.3f} Mbps")


if __name__ == "__main__":
    main()
