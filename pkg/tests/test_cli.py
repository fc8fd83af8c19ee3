import csv
import io
import socket
import threading
import time
from pathlib import Path

import pytest

from pqofh.bench import read_csv
from pqofh.cli import build_parser, main

CONFIGS = Path(__file__).parent.parent / "configs"


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def free_port():
    with socket.socket(socket.AF_INET, socket.SOCK_DGRAM) as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


def test_suites_list(capsys):
    code, out, _ = run(capsys, "suites", "list")
    assert code == 0
    lines = out.strip().splitlines()
    assert len(lines) == 7
    assert [l.split()[0] for l in lines[1:]] == ["dh-baseline", "toy-lwe", "mock-kyber", "mock-bike", "mock-hqc", "mock-frodo"]


def test_suites_list_csv(capsys):
    code, out, _ = run(capsys, "suites", "list", "--format", "csv")
    rows = list(csv.reader(io.StringIO(out)))
    assert code == 0 and len(rows) == 7
    assert rows[2][:4] == ["toy-lwe", "ToyLweKem", "4112", "2304"]
    assert out.splitlines()[1].startswith('"dh-baseline"')


def test_suites_bad_mock_config(capsys, tmp_path):
    bad = tmp_path / "m.conf"
    bad.write_text("mock-x.public_key_len = 10\nmock-x.ciphertext_len = 40\nmock-x.encaps_cost_us = 1\n")
    code, _, err = run(capsys, "suites", "list", "--mock-config", str(bad))
    assert code == 2 and "mock-x.shared_secret_len" in err


def test_handshake_one_round(capsys):
    code, out, _ = run(capsys, "handshake", "--kems", "toy-lwe")
    assert code == 0
    ladder = [l for l in out.splitlines() if "INTERMEDIATE" in l]
    assert ladder == ["I->R 1 INTERMEDIATE KEM-PK 4128", "R->I 1 INTERMEDIATE KEM-CT 2320"]
    fp = dict(l.split() for l in out.splitlines() if l.startswith(("initiator", "responder")))
    assert fp["initiator"] == fp["responder"]


def test_handshake_two_rounds_verbose(capsys):
    code, out, _ = run(capsys, "handshake", "--kems", "toy-lwe,mock-bike", "--encr", "AES-256",
                       "--integ", "SHA-512", "--verbose")
    assert code == 0
    assert sum("INTERMEDIATE" in l for l in out.splitlines()) == 4
    assert out.count(" match") == 5


def test_handshake_policy_mismatch(capsys):
    code, _, err = run(capsys, "handshake", "--kems", "none", "--peer-kems", "toy-lwe")
    assert code == 3 and "NoProposalChosen" in err


def test_handshake_psk_mismatch(capsys):
    code, _, err = run(capsys, "handshake", "--kems", "mock-kyber", "--peer-psk", "wrong")
    assert code == 3 and "AuthFailure" in err


def test_handshake_unknown_suite(capsys):
    code, _, err = run(capsys, "handshake", "--kems", "kyber1024")
    assert code == 2 and "kyber1024" in err


def test_handshake_seed_determinism(capsys, monkeypatch):
    monkeypatch.setenv("PQOFH_SEED", "42")
    _, a, _ = run(capsys, "handshake", "--kems", "toy-lwe")
    _, b, _ = run(capsys, "handshake", "--kems", "toy-lwe", "--seed", "42")
    _, c, _ = run(capsys, "handshake", "--kems", "toy-lwe", "--seed", "43")
    assert a == b != c


def test_config_file_and_override(capsys, tmp_path):
    conf = tmp_path / "c.conf"
    conf.write_text("kems = mock-kyber\nencr = AES-192\nverbose = true\n")
    code, out, _ = run(capsys, "handshake", "--config", str(conf), "--kems", "none")
    assert code == 0
    assert "INTERMEDIATE" not in out  # flag wins over the file
    assert "sk_ei 24B" in out  # file value applied


def test_config_unknown_key(capsys, tmp_path):
    conf = tmp_path / "c.conf"
    conf.write_text("kem = toy-lwe\n")
    code, _, err = run(capsys, "handshake", "--config", str(conf))
    assert code == 2 and "kem" in err


def test_config_keys_mirror_flags():
    parser = build_parser()
    sub = parser._subparsers._group_actions[0].choices
    for name, p in sub.items():
        help_text = p.format_help()
        for action in p._actions:
            for opt in action.option_strings:
                assert opt in help_text


def test_bench_writes_csv_and_progress(capsys, tmp_path):
    out_csv = tmp_path / "r.csv"
    code, out, _ = run(capsys, "bench", "--matrix", str(CONFIGS / "smoke_matrix.conf"), "--out", str(out_csv))
    assert code == 0
    assert out.splitlines() == ["[1/2] none AES-128 SHA-256 run=0 ok", "[2/2] toy-lwe AES-128 SHA-256 run=0 ok"]
    rows = read_csv(out_csv)
    assert [r.kem for r in rows] == ["none", "toy-lwe"]


def test_bench_udp_same_schema(capsys, tmp_path):
    matrix = tmp_path / "m.conf"
    matrix.write_text("kems = none\nrate = 2000\nduration = 0.1\n")
    out_csv = tmp_path / "u.csv"
    code, _, _ = run(capsys, "bench", "--matrix", str(matrix), "--out", str(out_csv), "--transport", "udp")
    assert code == 0
    header = out_csv.read_text().splitlines()[0]
    assert header.startswith("kem,encr,integ,run,status,throughput_mbps")
    assert read_csv(out_csv)[0].status == "ok"


def test_bench_missing_output_dir(capsys, tmp_path):
    code, out, err = run(capsys, "bench", "--matrix", str(CONFIGS / "smoke_matrix.conf"),
                         "--out", str(tmp_path / "nope" / "r.csv"))
    assert code == 2 and "does not exist" in err and out == ""


def test_bench_all_cells_fail(capsys, tmp_path):
    matrix = tmp_path / "m.conf"
    matrix.write_text("kems = nothing-here\nduration = 0.01\n")
    code, _, _ = run(capsys, "bench", "--matrix", str(matrix), "--out", str(tmp_path / "r.csv"))
    assert code == 5


def test_bench_partial_failure_exits_zero(capsys, tmp_path):
    matrix = tmp_path / "m.conf"
    matrix.write_text("kems = none, nothing-here\nduration = 0.01\n")
    code, _, err = run(capsys, "bench", "--matrix", str(matrix), "--out", str(tmp_path / "r.csv"))
    assert code == 0 and "1 of 2 cells failed" in err


def test_plotdata(capsys, tmp_path):
    out_csv = tmp_path / "r.csv"
    run(capsys, "bench", "--matrix", str(CONFIGS / "smoke_matrix.conf"), "--out", str(out_csv))
    code, out, _ = run(capsys, "plotdata", "--in", str(out_csv), "--metric", "handshake_bytes")
    assert code == 0
    assert out.splitlines()[2:] == ["none 736.0 736.0 736.0 1", "toy-lwe 7214.0 7214.0 7214.0 1"]
    code, _, err = run(capsys, "plotdata", "--in", str(out_csv), "--metric", "nonsense")
    assert code == 2 and "UnknownMetric" in err


def test_plotdata_empty_csv(capsys, tmp_path):
    empty = tmp_path / "e.csv"
    empty.write_text("")
    assert run(capsys, "plotdata", "--in", str(empty), "--metric", "throughput_mbps") == (0, "", "")


def test_tunnel_profile_rate_zero(capsys, tmp_path):
    prof = tmp_path / "p.conf"
    prof.write_text("rate = 0\n")
    code, _, err = run(capsys, "tunnel", "--role", "du", "--peer", "127.0.0.1:9", "--profile", str(prof))
    assert code == 2 and "rate" in err


def test_tunnel_ru_absent_times_out(capsys):
    t0 = time.monotonic()
    code, _, err = run(capsys, "tunnel", "--role", "du", "--peer", f"127.0.0.1:{free_port()}")
    elapsed = time.monotonic() - t0
    assert code == 3 and "timeout after 3 attempts" in err
    assert 2.5 < elapsed < 6


def test_tunnel_du_ru_loopback(capsys, tmp_path):
    port = free_port()
    prof = tmp_path / "p.conf"
    prof.write_text("rate = 2000\nduration = 0.5\n")
    codes = {}
    ru = threading.Thread(target=lambda: codes.setdefault("ru", main(
        ["tunnel", "--role", "ru", "--bind", f"127.0.0.1:{port}", "--kems", "mock-kyber", "--idle-timeout", "10"])))
    ru.start()
    time.sleep(0.3)
    trace_path = tmp_path / "du.trace"
    codes["du"] = main(["tunnel", "--role", "du", "--peer", f"127.0.0.1:{port}", "--kems", "mock-kyber",
                        "--profile", str(prof), "--out", str(trace_path)])
    ru.join(timeout=20)
    out, _ = capsys.readouterr()
    assert codes == {"du": 0, "ru": 0}
    assert "du sent 1000 delivered 1000" in out
    assert "ru delivered 1000" in out
    assert "LOST" not in trace_path.read_text()


def test_usage_error_exit_code(capsys):
    assert main(["tunnel"]) == 2
    assert main(["frobnicate"]) == 2
