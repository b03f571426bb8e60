"""Plaintext mirror of every update, used to check encrypted search results."""

from __future__ import annotations

from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field

from .core import Op, UpdateTriple


@dataclass
class PlaintextOracle:
    # (t, op, id, w) for updates; searches are logged separately
    log: list[tuple[int, Op, bytes, bytes]] = field(default_factory=list)
    searches: list[tuple[int, tuple[bytes, ...]]] = field(default_factory=list)
    clock: int = 0

    def _tick(self) -> int:
        self.clock += 1
        return self.clock

    def record(self, triples: Iterable[UpdateTriple]) -> None:
        for t in triples:
            self.log.append((self._tick(), Op(t.op), t.id, t.w))

    def record_search(self, q: Sequence[bytes]) -> None:
        self.searches.append((self._tick(), tuple(q)))

    def count(self, w: bytes) -> int:
        return sum(1 for _, _, _, x in self.log if x == w)

    def db(self, w: bytes) -> set[bytes]:
        latest: dict[bytes, Op] = {}
        for _, op, doc_id, x in self.log:
            if x == w:
                latest[doc_id] = op
        return {d for d, op in latest.items() if op is Op.ADD}

    def s_term(self, q: Sequence[bytes]) -> bytes:
        q = list(dict.fromkeys(q))
        return min(q, key=lambda w: (self.count(w), q.index(w)))


def oracle_search(oracle: PlaintextOracle, q: Sequence[bytes]) -> set[bytes]:
    q = list(dict.fromkeys(q))
    out = oracle.db(q[0])
    for w in q[1:]:
        out &= oracle.db(w)
    return out


def oracle_timedb(oracle: PlaintextOracle, q: Sequence[bytes]) -> dict[bytes, tuple[int, ...]]:
    """Live matching ids with the add timestamp for each query keyword."""
    q = list(dict.fromkeys(q))
    adds: dict[tuple[bytes, bytes], int] = {}
    deleted: set[tuple[bytes, bytes]] = set()
    for t, op, doc_id, w in oracle.log:
        if op is Op.ADD:
            adds.setdefault((doc_id, w), t)
        else:
            deleted.add((doc_id, w))
    out = {}
    for doc_id in {d for d, w in adds if w == q[0]}:
        keys = [(doc_id, w) for w in q]
        if all(k in adds and k not in deleted for k in keys):
            out[doc_id] = tuple(adds[k] for k in keys)
    return out


def oracle_upd(oracle: PlaintextOracle, q: Sequence[bytes]) -> list[int]:
    """Timestamps of every update on the query's s-term."""
    w1 = oracle.s_term(q)
    return [t for t, _, _, w in oracle.log if w == w1]


def oracle_candidates(oracle: PlaintextOracle, q: Sequence[bytes]) -> list[int]:
    """Indices j (1-based) of s-term updates whose (op, id) also holds for every x-term.

    These are exactly the candidates that should survive the encrypted
    membership test when no Bloom false positive occurs.
    """
    q = list(dict.fromkeys(q))
    w1 = oracle.s_term(q)
    xs = [w for w in q if w != w1]
    seen = {(op, doc_id, w) for _, op, doc_id, w in oracle.log}
    out = []
    j = 0
    for _, op, doc_id, w in oracle.log:
        if w != w1:
            continue
        j += 1
        if all((op, doc_id, x) in seen for x in xs):
            out.append(j)
    return out
