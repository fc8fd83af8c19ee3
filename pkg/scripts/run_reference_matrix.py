"""Run the baseline + 4 KEM matrix and write one plot-data file per metric.

    python scripts/run_reference_matrix.py [--matrix configs/reference_matrix.conf] [--out results/]
"""
import argparse
import os
import sys
import time

from pqofh.bench import METRIC_FIELDS, load_matrix, read_csv, render, run_matrix

PLOTTED = ("throughput_mbps", "jitter_rfc3550_us", "jitter_stddev_us", "delay_ms_mean",
           "enc_time_us_mean", "handshake_bytes", "mem_bytes_peak")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--matrix", default="configs/reference_matrix.conf")
    ap.add_argument("--out", default="results")
    args = ap.parse_args()

    os.makedirs(args.out, exist_ok=True)
    spec = load_matrix(args.matrix)
    spec.out = os.path.join(args.out, "matrix.csv")
    t0 = time.time()

    def progress(done, total, row):
        print(f"[{done:3d}/{total}] {time.time() - t0:6.1f}s {row.kem:<11} {row.encr} {row.integ} "
              f"run={row.run} {row.status}", flush=True)

    rows = run_matrix(spec, progress=progress)
    assert read_csv(spec.out) == rows, "CSV did not round-trip"
    for metric in PLOTTED:
        assert metric in METRIC_FIELDS
        with open(os.path.join(args.out, f"{metric}.dat"), "w") as fh:
            fh.write(render(rows, metric))
    failed = sum(r.status != "ok" for r in rows)
    print(f"{len(rows)} rows, {failed} failed, {time.time() - t0:.1f}s -> {spec.out}")
    return 1 if failed == len(rows) else 0


if __name__ == "__main__":
    sys.exit(main())
