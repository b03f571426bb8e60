"""``espcks`` command line.

Exit codes: 0 on success, 1 for user errors (bad arguments, unreadable or
malformed files, ledger violations), 2 for protocol or transport failures and
for audits that find violations.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import re
import sys
from pathlib import Path

from ..core import LedgerError, SecretKeyBundle
from ..service import wire
from ..service.client import (
    OwnerClient,
    OwnerState,
    SearchClient,
    ServerError,
    SocketTransport,
    TransportError,
)
from ..service.config import ServerConfig, parse_address
from ..service.server import serve
from ..transcript import SearchTranscript
from . import bench
from .audit import audit_transcript, format_report
from .ingest import IngestError, ingest

SERVER_ENV = "ESPCKS_SERVER"
DEFAULT_SERVER = "127.0.0.1:7878"

EXIT_OK, EXIT_USER, EXIT_PROTOCOL = 0, 1, 2
QUERY_SPLIT = re.compile(r"(?:^|\s+)AND(?:\s+|$)")


class UsageError(Exception):
    pass


def parse_query(text: str) -> list[str]:
    """Split ``"w1 AND w2 AND w3"``; ``AND`` (uppercase) is the only connective."""
    terms = [t.strip() for t in QUERY_SPLIT.split(text.strip())]
    if any(not t or t.split()[0] == "AND" or t.split()[-1] == "AND" for t in terms):
        raise UsageError(f"malformed query {text!r}; use 'w1 AND w2 AND ...'")
    return terms


def _load_key(path: str) -> SecretKeyBundle:
    try:
        return SecretKeyBundle.from_json(Path(path).read_text())
    except FileNotFoundError:
        raise UsageError(f"key file {path} not found (run 'espcks keygen' first)") from None
    except (ValueError, KeyError) as exc:
        raise UsageError(f"key file {path} is malformed: {exc}") from None


def _load_state(path: str, sk: SecretKeyBundle) -> OwnerState:
    try:
        return OwnerState.load(path, sk)
    except FileNotFoundError:
        raise UsageError(f"state file {path} not found (run 'espcks init' first)") from None


def _transcript(args) -> SearchTranscript | None:
    return SearchTranscript() if args.transcript else None


def _flush_transcript(args, tr: SearchTranscript | None) -> None:
    if tr is not None:
        tr.save(args.transcript, append=True)


# -- commands ---------------------------------------------------------------------

def cmd_keygen(args) -> int:
    out = Path(args.out or args.key)
    if out.exists() and not args.force:
        raise UsageError(f"{out} exists; pass --force to overwrite")
    out.write_text(SecretKeyBundle.generate().to_json())
    os.chmod(out, 0o600)
    print(f"wrote key bundle to {out}")
    return EXIT_OK


def cmd_serve(args) -> int:
    cfg = ServerConfig.load(args.config, snapshot_path=args.snapshot, session_timeout=args.session_timeout,
                            frame_cap=args.frame_cap)
    if args.listen:
        cfg.host, cfg.port = parse_address(args.listen)
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(levelname)s %(message)s")
    serve(cfg)
    return EXIT_OK


def cmd_init(args) -> int:
    if args.capacity < 1:
        raise UsageError("--capacity must be positive")
    if not 0 < args.fp < 1:
        raise UsageError("--fp must lie in (0, 1)")
    sk = _load_key(args.key)
    state = OwnerState.fresh(sk, args.capacity, args.fp)
    tr = _transcript(args)
    owner = OwnerClient(SocketTransport(args.server), sk, state, tr)
    try:
        owner.init()
    finally:
        owner.close()
        _flush_transcript(args, tr)
    state.save(args.state)
    print(f"initialised: m={state.client.m} k={state.client.k} capacity={args.capacity}")
    return EXIT_OK


def cmd_update(args) -> int:
    sk = _load_key(args.key)
    state = _load_state(args.state, sk)
    records = ingest(args.dataset, state.ledger)
    tr = _transcript(args)
    owner = OwnerClient(SocketTransport(args.server), sk, state, tr)
    try:
        triples = owner.update_documents(r.as_update() for r in records)
    finally:
        owner.close()
        _flush_transcript(args, tr)
    state.save(args.state)
    print(f"applied {len(records)} records ({len(triples)} keyword updates)")
    return EXIT_OK


def cmd_search(args) -> int:
    terms = parse_query(args.query)
    sk = _load_key(args.key)
    tr = _transcript(args)
    client = SearchClient(SocketTransport(args.server), sk, tr)
    try:
        res = client.search(terms)
    except ServerError as exc:
        if exc.code != wire.E_NOT_INITIALIZED:
            raise
        print("note: server holds no database yet", file=sys.stderr)
        return EXIT_OK
    finally:
        client.close()
        _flush_transcript(args, tr)
    for w in res.absent:
        print(f"note: keyword not indexed: {w.decode(errors='replace')}", file=sys.stderr)
    for doc_id in sorted(res.ids):
        print(doc_id.decode(errors="replace"))
    return EXIT_OK


def cmd_stats(args) -> int:
    client = SearchClient(SocketTransport(args.server), SecretKeyBundle.generate())
    try:
        st = client.stats()
    finally:
        client.close()
    print(json.dumps({
        "version": st.version, "tset_entries": st.tset_entries, "freq_entries": st.freq_entries,
        "m": st.m, "k": st.k, "est_fill_ratio": st.est_fill_ratio, "open_sessions": st.open_sessions,
    }, indent=2))
    return EXIT_OK


def cmd_snapshot(args) -> int:
    client = SearchClient(SocketTransport(args.server), SecretKeyBundle.generate())
    try:
        path = client.snapshot()
    finally:
        client.close()
    print(f"snapshot written to {path}")
    return EXIT_OK


def cmd_bench(args) -> int:
    if not args.profile:
        raise UsageError(f"--profile is required; choose one of {', '.join(bench.PROFILES)}")
    if args.profile not in bench.PROFILES:
        raise UsageError(f"unknown profile {args.profile!r}; choose one of {', '.join(bench.PROFILES)}")
    if args.runs < 10:
        raise UsageError("--runs must be at least 10")
    remote = args.server if args.remote else None
    res = bench.run_profile(args.profile, args.runs, progress=lambda s: print(s, file=sys.stderr), server=remote)
    text = res.to_csv()
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    for name, ok in res.verdicts.items():
        print(f"verdict {name}: {'PASS' if ok else 'FAIL'}", file=sys.stderr)
    for note in res.notes:
        print(note, file=sys.stderr)
    return EXIT_OK


def cmd_audit(args) -> int:
    try:
        tr = SearchTranscript.load(args.transcript_path)
    except FileNotFoundError:
        raise UsageError(f"transcript {args.transcript_path} not found") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"transcript is not JSON lines: {exc}") from None
    rep = audit_transcript(tr)
    print(json.dumps(rep.to_dict(), indent=2) if args.json else format_report(rep))
    return EXIT_OK if rep.ok else EXIT_PROTOCOL


# -- parser -----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="espcks", description="Encrypted conjunctive keyword search.")
    p.add_argument("--server", default=os.environ.get(SERVER_ENV, DEFAULT_SERVER),
                   help=f"host:port of the server (default ${SERVER_ENV} or {DEFAULT_SERVER})")
    p.add_argument("--key", default="espcks.key", help="secret key bundle (JSON)")
    p.add_argument("--state", default="espcks.state.json", help="owner state file")
    p.add_argument("--transcript", help="append protocol messages to this JSON-lines file")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("keygen", help="generate a secret key bundle")
    s.add_argument("out", nargs="?", help="output path (default: --key)")
    s.add_argument("--force", action="store_true")
    s.set_defaults(func=cmd_keygen)

    s = sub.add_parser("serve", help="run the server")
    s.add_argument("--config", help="JSON config file")
    s.add_argument("--listen", help="host:port to bind")
    s.add_argument("--snapshot", help="snapshot path (overridden by $ESPCKS_SNAPSHOT)")
    s.add_argument("--session-timeout", type=float)
    s.add_argument("--frame-cap", type=int)
    s.set_defaults(func=cmd_serve)

    s = sub.add_parser("init", help="create an empty encrypted database on the server")
    s.add_argument("--capacity", type=int, default=10_000, help="expected number of keyword updates")
    s.add_argument("--fp", type=float, default=1e-6, help="target Bloom false-positive rate")
    s.set_defaults(func=cmd_init)

    s = sub.add_parser("update", help="apply a JSON-lines dataset")
    s.add_argument("dataset")
    s.set_defaults(func=cmd_update)

    s = sub.add_parser("search", help="run a conjunctive query, e.g. 'w1 AND w2'")
    s.add_argument("query")
    s.set_defaults(func=cmd_search)

    s = sub.add_parser("stats", help="print server statistics")
    s.set_defaults(func=cmd_stats)

    s = sub.add_parser("snapshot", help="ask the server to persist its database")
    s.set_defaults(func=cmd_snapshot)

    s = sub.add_parser("bench", help="run a latency benchmark profile and print CSV")
    s.add_argument("--profile", default="", help=f"one of {', '.join(bench.PROFILES)}")
    s.add_argument("--runs", type=int, default=10)
    s.add_argument("--out", help="write CSV here instead of stdout")
    s.add_argument("--remote", action="store_true",
                   help="benchmark against --server (replaces its database) instead of in-process")
    s.set_defaults(func=cmd_bench)

    s = sub.add_parser("audit", help="check a transcript for leakage beyond the allowed profile")
    s.add_argument("transcript_path")
    s.add_argument("--json", action="store_true")
    s.set_defaults(func=cmd_audit)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USER
    try:
        return args.func(args)
    except (UsageError, IngestError, LedgerError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USER
    except (TransportError, ServerError, wire.WireError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PROTOCOL


if __name__ == "__main__":
    raise SystemExit(main())
