"""``pqofh`` command-line entry point.

Every subcommand accepts ``--config FILE``: a flat ``key = value`` file whose
keys are the subcommand's long flag names without the leading dashes. Flags
given on the command line win over the file.
"""
from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
from typing import Dict, Optional, Sequence

from .bench import NO_KEM, load_matrix, read_csv, render, run_matrix
from .bench.plotdata import UnknownMetric
from .flatconf import ConfigError, load_flat, split_list
from .ike_hybrid import HandshakeError, Initiator, Proposal, Responder, run_handshake
from .kem import default_registry
from .kem.base import KemError
from .ofh_sim import ChannelModel, HandshakeFailed, TrafficProfile, TransportUnavailable
from .ofh_sim.session import TRANSPORTS

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_HANDSHAKE = 3
EXIT_TRANSPORT = 4
EXIT_MATRIX = 5

DEFAULT_PSK = "pqofh-psk"
DEFAULT_RU_BIND = "127.0.0.1:4500"

log = logging.getLogger("pqofh")


class UsageError(Exception):
    pass


def _default_seed() -> int:
    value = os.environ.get("PQOFH_SEED", "0")
    try:
        return int(value)
    except ValueError:
        raise UsageError(f"PQOFH_SEED must be an integer, got {value!r}") from None


def _kem_list(text: str) -> tuple:
    names = split_list(text)
    if names in ([], [NO_KEM]):
        return ()
    if NO_KEM in names:
        raise UsageError("'none' cannot be combined with other KEMs")
    return tuple(names)


def _registry(args):
    try:
        return default_registry(args.mock_config)
    except OSError as exc:
        raise UsageError(f"cannot read mock config: {exc}") from exc


# ---------------------------------------------------------------- subcommands

def cmd_suites(args) -> int:
    registry = _registry(args)
    header = ["suite", "kind", "public_key_len", "ciphertext_len", "shared_secret_len", "encaps_cost_us"]
    rows = []
    for name in registry.names():
        provider = registry.get(name)
        p = provider.params
        kind = type(provider).__name__
        rows.append([name, kind, p.public_key_len, p.ciphertext_len, p.shared_secret_len, p.encaps_cost_us])
    if args.format == "csv":
        writer = csv.writer(sys.stdout, quoting=csv.QUOTE_ALL, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
    else:
        widths = [max(len(str(r[i])) for r in rows + [header]) for i in range(len(header))]
        for r in [header] + rows:
            print("  ".join(str(v).ljust(w) for v, w in zip(r, widths)).rstrip())
    return EXIT_OK


def cmd_handshake(args) -> int:
    registry = _registry(args)
    try:
        local = Proposal(args.encr, args.integ, addke=_kem_list(args.kems))
        peer = Proposal(args.peer_encr or args.encr, args.peer_integ or args.integ,
                        addke=_kem_list(args.peer_kems if args.peer_kems is not None else args.kems))
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    for name in local.addke + peer.addke:
        if name not in registry:
            raise UsageError(f"unknown suite {name!r}")
    seed = str(args.seed).encode()
    initiator = Initiator([local], args.psk.encode(), b"du/" + seed, registry)
    responder = Responder([peer], (args.peer_psk or args.psk).encode(), b"ru/" + seed, registry)
    try:
        result = run_handshake(initiator, responder)
    except HandshakeError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_HANDSHAKE
    for line in result.dump():
        print(line)
    si, sr = result.initiator.state.schedule, result.responder.state.schedule
    if args.verbose:
        for name in ("sk_d", "sk_ai", "sk_ar", "sk_ei", "sk_er"):
            a, b = getattr(si, name), getattr(sr, name)
            print(f"{name} {len(a)}B {a.hex()[:16]} {'match' if a == b else 'MISMATCH'}")
    print(f"initiator {si.fingerprint()}")
    print(f"responder {sr.fingerprint()}")
    print(f"total_bytes {result.total_bytes}")
    if si != sr:
        print("KeyMismatch: peers derived different key schedules", file=sys.stderr)
        return EXIT_HANDSHAKE
    return EXIT_OK


def _check_out_dir(path: str) -> None:
    parent = os.path.dirname(os.path.abspath(path))
    if not os.path.isdir(parent):
        raise UsageError(f"output directory {parent} does not exist")


def cmd_bench(args) -> int:
    registry = _registry(args)
    try:
        spec = load_matrix(args.matrix)
    except OSError as exc:
        raise UsageError(f"cannot read matrix file: {exc}") from exc
    spec.out = args.out or spec.out
    if not spec.out:
        raise UsageError("no output path: give --out or set out in the matrix file")
    _check_out_dir(spec.out)
    if args.transport:
        spec.transport = args.transport
    if args.seed_given or "seed" not in load_flat(args.matrix):
        spec.seed = args.seed

    def progress(done, total, row):
        print(f"[{done}/{total}] {row.kem} {row.encr} {row.integ} run={row.run} {row.status}", flush=True)

    try:
        rows = run_matrix(spec, registry, progress)
    except OSError as exc:
        raise UsageError(f"cannot write {spec.out}: {exc}") from exc
    failed = sum(row.status != "ok" for row in rows)
    if failed:
        print(f"{failed} of {len(rows)} cells failed", file=sys.stderr)
    return EXIT_MATRIX if failed == len(rows) else EXIT_OK


def _load_profile(path: Optional[str]) -> TrafficProfile:
    if path is None:
        return TrafficProfile()
    try:
        return TrafficProfile.from_flat(load_flat(path), path)
    except OSError as exc:
        raise UsageError(f"cannot read profile: {exc}") from exc


def cmd_tunnel(args) -> int:
    from .ofh_sim import udp

    registry = _registry(args)
    profile = _load_profile(args.profile)
    try:
        proposal = Proposal(args.encr, args.integ, addke=_kem_list(args.kems))
        channel = ChannelModel(args.base_delay_us, args.delay_jitter_us, args.loss_rate)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    psk = args.psk.encode()
    if args.role == "ru":
        sock = udp.open_socket(udp.parse_addr(args.bind or DEFAULT_RU_BIND))
        try:
            log.info("RU listening on %s:%d", *sock.getsockname())
            server = udp.RuServer(sock, [proposal], args.seed, psk, channel, registry, args.idle_timeout)
            received = server.serve()
        finally:
            sock.close()
        print(f"ru delivered {len(received)}")
        return EXIT_OK
    if not args.peer:
        raise UsageError("--peer is required for the du role")
    if args.out:
        _check_out_dir(args.out)
    sock = udp.open_socket(udp.parse_addr(args.bind or "127.0.0.1:0"))
    try:
        result = udp.du_run(sock, udp.parse_addr(args.peer), proposal, profile, args.seed, psk, registry)
    finally:
        sock.close()
    trace = result.trace
    if args.out:
        trace.dump(args.out)
    print(f"du sent {len(trace)} delivered {trace.n_delivered} handshake_bytes {trace.handshake_bytes}")
    return EXIT_OK


def cmd_plotdata(args) -> int:
    try:
        rows = read_csv(args.input)
    except OSError as exc:
        raise UsageError(f"cannot read {args.input}: {exc}") from exc
    try:
        text = render(rows, args.metric)
    except UnknownMetric as exc:
        print(f"UnknownMetric: {exc}", file=sys.stderr)
        return EXIT_USAGE
    sys.stdout.write(text)
    return EXIT_OK


# ---------------------------------------------------------------- parsing

def _common(parser: argparse.ArgumentParser, seed: bool = True, mock: bool = True) -> None:
    parser.add_argument("--config", metavar="FILE", help="flat key=value file of flag defaults")
    if seed:
        parser.add_argument("--seed", type=int, help="experiment seed (default: $PQOFH_SEED or 0)")
    if mock:
        parser.add_argument("--mock-config", metavar="FILE", help="mock KEM profile file")
    parser.add_argument("--log-level", default="WARNING", choices=["DEBUG", "INFO", "WARNING", "ERROR"])


def _suite_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--kems", default=NO_KEM, help="comma-separated ADDKE suites, or 'none'")
    parser.add_argument("--encr", default="AES-128", help="AES-128, AES-192 or AES-256")
    parser.add_argument("--integ", default="SHA-256", help="SHA-256, SHA-384 or SHA-512")
    parser.add_argument("--psk", default=DEFAULT_PSK, help="pre-shared authentication key")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pqofh", description="Hybrid post-quantum IPsec tunnel for the fronthaul link")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("suites", help="list registered KEM suites")
    p.add_argument("action", choices=["list"])
    p.add_argument("--format", choices=["text", "csv"], default="text")
    _common(p, seed=False)
    p.set_defaults(func=cmd_suites)

    p = sub.add_parser("handshake", help="run one in-process handshake and print the ladder")
    _suite_flags(p)
    p.add_argument("--verbose", action="store_true", help="print every derived key fingerprint")
    p.add_argument("--peer-kems", help="responder ADDKE policy (default: same as --kems)")
    p.add_argument("--peer-encr", help="responder cipher (default: same as --encr)")
    p.add_argument("--peer-integ", help="responder hash (default: same as --integ)")
    p.add_argument("--peer-psk", help="responder pre-shared key (default: same as --psk)")
    _common(p)
    p.set_defaults(func=cmd_handshake)

    p = sub.add_parser("bench", help="run the experiment matrix and write a CSV")
    p.add_argument("--matrix", required=True, metavar="FILE")
    p.add_argument("--out", metavar="CSV")
    p.add_argument("--transport", choices=TRANSPORTS)
    _common(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("tunnel", help="run one tunnel endpoint over UDP")
    p.add_argument("--role", required=True, choices=["du", "ru"])
    p.add_argument("--peer", metavar="HOST:PORT", help="RU address (du role)")
    p.add_argument("--bind", metavar="HOST:PORT", help=f"local address (ru default {DEFAULT_RU_BIND})")
    p.add_argument("--profile", metavar="FILE", help="traffic profile file")
    p.add_argument("--out", metavar="FILE", help="trace dump path (du role)")
    p.add_argument("--base-delay-us", type=float, default=0.0, help="injected channel delay (ru role)")
    p.add_argument("--delay-jitter-us", type=float, default=0.0, help="uniform jitter half-width (ru role)")
    p.add_argument("--loss-rate", type=float, default=0.0, help="drop probability (ru role)")
    p.add_argument("--idle-timeout", type=float, default=30.0, help="seconds the RU waits for traffic")
    _suite_flags(p)
    _common(p)
    p.set_defaults(func=cmd_tunnel)

    p = sub.add_parser("plotdata", help="emit gnuplot-ready columns from a results CSV")
    p.add_argument("--in", dest="input", required=True, metavar="CSV")
    p.add_argument("--metric", required=True)
    _common(p, seed=False, mock=False)
    p.set_defaults(func=cmd_plotdata)
    return parser


def _subparser(parser: argparse.ArgumentParser, name: str) -> argparse.ArgumentParser:
    for action in parser._subparsers._group_actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices[name]
    raise KeyError(name)


def _flag_table(sub: argparse.ArgumentParser) -> Dict[str, argparse.Action]:
    table = {}
    for action in sub._actions:
        for opt in action.option_strings:
            if opt.startswith("--") and opt not in ("--help", "--config"):
                table[opt[2:]] = action
    return table


def _apply_config(sub: argparse.ArgumentParser, path: str) -> None:
    values = load_flat(path)
    table = _flag_table(sub)
    unknown = sorted(set(values) - set(table))
    if unknown:
        raise ConfigError(f"{path}: unknown key(s): {', '.join(unknown)}")
    defaults = {}
    for key, text in values.items():
        action = table[key]
        if isinstance(action, argparse._StoreTrueAction):
            if text.lower() not in ("true", "false", "1", "0", "yes", "no"):
                raise ConfigError(f"{path}: {key} must be a boolean")
            defaults[action.dest] = text.lower() in ("true", "1", "yes")
            continue
        value = action.type(text) if action.type else text
        if action.choices is not None and value not in action.choices:
            raise ConfigError(f"{path}: {key} must be one of {', '.join(map(str, action.choices))}")
        defaults[action.dest] = value
        action.required = False
    sub.set_defaults(**defaults)


def parse_args(argv: Optional[Sequence[str]] = None) -> argparse.Namespace:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("command", nargs="?")
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if known.config and known.command:
        try:
            sub = _subparser(parser, known.command)
        except KeyError:
            sub = None  # argparse reports the bad subcommand below
        if sub is not None:
            try:
                _apply_config(sub, known.config)
            except OSError as exc:
                raise ConfigError(f"cannot read config {known.config}: {exc}") from exc
            except ValueError as exc:
                raise ConfigError(str(exc)) from exc
    args = parser.parse_args(argv)
    args.seed_given = getattr(args, "seed", None) is not None
    if hasattr(args, "seed") and args.seed is None:
        args.seed = _default_seed()
    return args


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = parse_args(argv)
    except (ConfigError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # argparse usage errors
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    logging.basicConfig(level=args.log_level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, UsageError, KemError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except HandshakeFailed as exc:
        print(f"HandshakeFailed: {exc}", file=sys.stderr)
        return EXIT_HANDSHAKE
    except TransportUnavailable as exc:
        print(f"TransportUnavailable: {exc}", file=sys.stderr)
        return EXIT_TRANSPORT


if __name__ == "__main__":
    sys.exit(main())
