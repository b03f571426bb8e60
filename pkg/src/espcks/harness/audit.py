"""Structural leakage audit over a recorded transcript.

The auditor re-decodes every message with the strict wire codecs and checks:

(a) the Round-2 request carries exactly one address per s-term update;
(b) no response enumerates per-x-term outcomes: Round-2 responses are
    per-candidate position sets bounded by ``(n-1)*k`` and Round-3 responses
    are per-candidate (j, sval) pairs, nothing more;
(c) the Round-3 response size equals the candidate count (when the
    transcript carries oracle annotations);
(d) update messages carry no keyword, identifier or operation in the clear.

Anything that fails strict decoding is itself a violation: an extra field
cannot hide behind a valid prefix.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import asdict, dataclass, field

from ..core import Op, pack_id_op
from ..service import wire
from ..transcript import SearchTranscript

MIN_SCAN_LEN = 6
ENTROPY_MIN_BYTES = 2048
ENTROPY_FLOOR = 7.0


@dataclass
class LeakageReport:
    index: int
    query_size: int | None = None
    field_sizes: dict[str, int] = field(default_factory=dict)
    upd_count: int | None = None
    result_size: int | None = None
    violations: list[str] = field(default_factory=list)


@dataclass
class UpdateReport:
    index: int
    entries: int = 0
    payload_bytes: int = 0
    violations: list[str] = field(default_factory=list)


@dataclass
class AuditReport:
    queries: list[LeakageReport] = field(default_factory=list)
    updates: list[UpdateReport] = field(default_factory=list)
    violations: list[str] = field(default_factory=list)

    @property
    def all_violations(self) -> list[str]:
        out = list(self.violations)
        for q in self.queries:
            out += [f"query {q.index}: {v}" for v in q.violations]
        for u in self.updates:
            out += [f"update {u.index}: {v}" for v in u.violations]
        return out

    @property
    def ok(self) -> bool:
        return not self.all_violations

    def to_dict(self) -> dict:
        d = asdict(self)
        d["violation_count"] = len(self.all_violations)
        return d


def byte_entropy(data: bytes) -> float:
    n = len(data)
    if not n:
        return 0.0
    return -sum(c / n * math.log2(c / n) for c in Counter(data).values())


class _QueryState:
    def __init__(self, index: int):
        self.report = LeakageReport(index)
        self.note: dict | None = None
        self.oracle: dict | None = None
        self.r2_req = None
        self.r2_resp = None
        self.r3_req = None
        self.r3_resp = None


def audit_transcript(tr: SearchTranscript) -> AuditReport:
    report = AuditReport()
    k_hint: int | None = None
    current: _QueryState | None = None
    pending_update: dict | None = None
    queries: list[_QueryState] = []

    for e in tr.entries:
        if e["kind"] == "note":
            label, data = e["label"], e["data"]
            if label == "update":
                pending_update = data
            elif label == "search" and current is not None:
                current.note = data
                if data.get("k"):
                    k_hint = data["k"]
            elif label == "oracle" and current is not None:
                current.oracle = data
            continue

        t, payload = e["type"], bytes.fromhex(e["payload"])
        base = t & ~wire.RESPONSE if t != wire.ERR else None
        if t == wire.SEARCH_R1:
            current = _QueryState(len(queries))
            queries.append(current)
        try:
            decoded = wire.decode_payload(t, payload)
        except (wire.WireError, ValueError) as exc:
            msg = f"{wire.NAMES.get(t, hex(t))} payload does not match its schema ({exc})"
            if base in (wire.SEARCH_R1, wire.SEARCH_R2, wire.SEARCH_R3) and current is not None:
                current.report.violations.append(msg)
                current.report.field_sizes[wire.NAMES.get(t, hex(t))] = len(payload)
            elif base == wire.UPDATE:
                report.updates.append(UpdateReport(len(report.updates), 0, len(payload), [msg]))
            else:
                report.violations.append(msg)
            continue

        name = wire.NAMES[t]
        if t == wire.HELLO | wire.RESPONSE and decoded.initialized:
            k_hint = decoded.k
        elif t == wire.UPDATE:
            report.updates.append(_audit_update(len(report.updates), payload, decoded, pending_update))
            pending_update = None
        elif base in (wire.SEARCH_R1, wire.SEARCH_R2, wire.SEARCH_R3) and current is not None:
            current.report.field_sizes[name] = len(payload)
            if t == wire.SEARCH_R1:
                current.report.query_size = len(decoded[1])
            elif t == wire.SEARCH_R2:
                current.r2_req = decoded
            elif t == wire.SEARCH_R2 | wire.RESPONSE:
                current.r2_resp = decoded
            elif t == wire.SEARCH_R3:
                current.r3_req = decoded
            elif t == wire.SEARCH_R3 | wire.RESPONSE:
                current.r3_resp = decoded

    for q in queries:
        _check_query(q, k_hint)
        report.queries.append(q.report)
    return report


def _check_query(q: _QueryState, k: int | None) -> None:
    rep = q.report
    v = rep.violations
    note = q.note or {}
    if q.r2_req is None:
        # short-circuit (unindexed keyword) or aborted search
        if note and note.get("s_count", 0) != 0:
            v.append("search stopped after round 1 although the s-term has updates")
        rep.upd_count = 0
        rep.result_size = 0
        return

    _, saddrs, xtokens = q.r2_req
    c = len(saddrs)
    width = len(xtokens[0]) if xtokens else 0
    rep.upd_count = c

    # (a)
    expected_upd = (q.oracle or {}).get("upd_count", note.get("s_count"))
    if expected_upd is not None and c != expected_upd:
        v.append(f"round-2 request has {c} addresses but the s-term has {expected_upd} updates")
    if "x_terms" in note and width != note["x_terms"]:
        v.append(f"round-2 xtoken width {width} differs from the {note['x_terms']} x-terms")
    if rep.query_size is not None and width != rep.query_size - 1:
        v.append("xtoken width does not equal query size minus one")
    expected_len = wire.SESSION_ID_BYTES + 6 + 32 * c * (1 + width)
    if rep.field_sizes.get("SEARCH_R2") != expected_len:
        v.append("round-2 request size is not a function of (s-term count, x-term count) alone")

    # (b)
    srlist = None
    if q.r2_resp is not None:
        mode, body = q.r2_resp
        if mode == wire.R2_FINAL:
            if width:
                v.append("server answered round 2 with final results for a conjunctive query")
            srlist = body
        else:
            if len(body) != c:
                v.append(f"round-2 response has {len(body)} position sets for {c} candidates")
            if k is not None:
                bound = width * k
                for j, pos in enumerate(body, start=1):
                    if len(pos) > bound:
                        v.append(f"candidate {j}: {len(pos)} positions exceed the (n-1)*k bound {bound}")
                        break
            if q.r3_req is not None:
                keys = q.r3_req[1]
                if len(keys) != c:
                    v.append(f"round-3 request has {len(keys)} keys for {c} candidates")
                for j, (key, pos) in enumerate(zip(keys, body), start=1):
                    if list(key.S) != list(pos):
                        v.append(f"candidate {j}: SHVE key positions differ from the round-2 set")
                        break
            srlist = q.r3_resp

    # (c)
    if srlist is not None:
        rep.result_size = len(srlist)
        if any(not 1 <= j <= c for j, _ in srlist):
            v.append("result list references a candidate index outside the request")
        if q.oracle is not None and "candidates" in q.oracle:
            expected = q.oracle["candidates"]
            if len(srlist) != len(expected):
                v.append(f"round-3 response has {len(srlist)} entries; {len(expected)} candidates match")
    elif q.r2_resp is not None:
        v.append("conjunctive search ended without a round-3 response")


def _audit_update(index: int, payload: bytes, msg, note: dict | None) -> UpdateReport:
    rep = UpdateReport(index, len(msg.entries), len(payload))
    v = rep.violations
    tset_bytes = b"".join(a + b for a, b, _ in msg.entries)
    freq_bytes = b"".join(msg.freq_set.entries.values())
    scanned = tset_bytes + freq_bytes
    if note:
        ids = [bytes.fromhex(h) for h in note.get("ids", [])]
        kws = [bytes.fromhex(h) for h in note.get("keywords", [])]
        fields = {a for a, _, _ in msg.entries} | {b for _, b, _ in msg.entries}
        fields |= {e[:32] for e in msg.freq_set.entries.values()} | {e[32:] for e in msg.freq_set.entries.values()}
        for label, items in (("keyword", kws), ("identifier", ids)):
            for item in items:
                # substring search only where a chance match is negligible
                if (len(item) >= MIN_SCAN_LEN and item in scanned) or item.ljust(32, b"\x00") in fields:
                    v.append(f"{label} {item!r} appears in the clear")
        blocks = {pack_id_op(d, op) for d in ids for op in Op}
        if fields & blocks:
            v.append("a TSet value equals an unmasked (id, op) block")
    if len(scanned) >= ENTROPY_MIN_BYTES:
        h = byte_entropy(scanned)
        if h < ENTROPY_FLOOR:
            v.append(f"TSet/frequency fields have low byte entropy ({h:.2f} bits/byte)")
    if len(set(msg.xtag_bf)) != len(msg.xtag_bf):
        v.append("encrypted Bloom filter has repeated components (plaintext structure visible)")
    return rep


def format_report(rep: AuditReport) -> str:
    lines = []
    for q in rep.queries:
        sizes = " ".join(f"{k}={v}" for k, v in sorted(q.field_sizes.items()))
        lines.append(f"query {q.index}: n={q.query_size} upd={q.upd_count} results={q.result_size} "
                     f"violations={len(q.violations)} [{sizes}]")
    for u in rep.updates:
        lines.append(f"update {u.index}: entries={u.entries} bytes={u.payload_bytes} violations={len(u.violations)}")
    vs = rep.all_violations
    lines.append(f"total violations: {len(vs)}")
    lines += [f"  - {x}" for x in vs]
    return "\n".join(lines)
