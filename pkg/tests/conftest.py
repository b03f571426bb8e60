import random

import pytest

from espcks import core
from espcks.core import DocumentLedger, Op, UpdateTriple
from espcks.oracle import PlaintextOracle

# five documents, keywords per document
TABLE = [
    (b"id1", [b"w1", b"w2", b"w3", b"w4", b"w6"]),
    (b"id2", [b"w2", b"w3", b"w4", b"w5"]),
    (b"id3", [b"w1", b"w2", b"w4", b"w5", b"w6"]),
    (b"id4", [b"w2", b"w3", b"w6"]),
    (b"id5", [b"w1", b"w3", b"w4"]),
]


class LocalSystem:
    """Client state, server database and plaintext oracle kept in lockstep."""

    def __init__(self, capacity: int = 2000, target_fp: float = 1e-6):
        self.sk, self.st, self.edb = core.setup(capacity, target_fp)
        self.oracle = PlaintextOracle()
        self.ledger = DocumentLedger()
        self.sent_saddrs: set[bytes] = set()

    def apply(self, triples):
        self.st, msg = core.client_update(self.sk, self.st, triples)
        self.edb = core.server_apply_update(self.edb, msg)
        self.oracle.record(triples)
        return msg

    def add_doc(self, doc_id: bytes, kws):
        return self.apply(self.ledger.expand(Op.ADD, doc_id, kws))

    def del_doc(self, doc_id: bytes):
        return self.apply(self.ledger.expand(Op.DEL, doc_id))

    def search(self, q):
        self.oracle.record_search(q)
        return core.search_local(self.sk, self.st.r, self.edb, q)

    def round2(self, q):
        from espcks import lfka
        Q = core.normalize_query(q)
        delta = lfka.freq_find(core.client_search_round1(self.sk, self.st.r, Q), self.edb.freq_set)
        req = core.client_search_round2(self.sk, self.st.r, delta, Q)
        self.sent_saddrs.update(req.saddrs)
        return req


def table_triples():
    return [UpdateTriple(Op.ADD, d, w) for d, kws in TABLE for w in kws]


@pytest.fixture
def table_system():
    s = LocalSystem(capacity=100)
    for d, kws in TABLE:
        s.add_doc(d, kws)
    return s


@pytest.fixture
def rng():
    return random.Random(1234)


# acceptance criterion -> (passed, detail); printed after the run
ACCEPTANCE: dict[str, tuple[bool, str]] = {}


def record_criterion(name: str, ok: bool, detail: str) -> None:
    ACCEPTANCE[name] = (ok, detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(ACCEPTANCE, key=lambda s: int(s.split()[1])):
        ok, detail = ACCEPTANCE[name]
        terminalreporter.write_line(f"{name}: {'PASS' if ok else 'FAIL'}  {detail}")
