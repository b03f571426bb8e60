import pytest
from conftest import TABLE
from leaky_double import BooleanLeakEngine, PerTermPositionsEngine, unmasked_update

from espcks.core import Op, SecretKeyBundle, UpdateTriple
from espcks.harness.audit import audit_transcript, byte_entropy, format_report
from espcks.oracle import PlaintextOracle, oracle_candidates, oracle_upd
from espcks.service import wire
from espcks.service.client import LocalTransport, OwnerClient, OwnerState
from espcks.service.server import ServerEngine
from espcks.transcript import SearchTranscript

QUERIES = [[b"w1", b"w2", b"w3"], [b"w2", b"w5"], [b"w4"], [b"w1", b"absent"], [b"w6", b"w3", b"w2", b"w4"]]


def run_session(engine, tr, oracle_notes=True):
    sk = SecretKeyBundle.generate()
    owner = OwnerClient(LocalTransport(engine), sk, OwnerState.fresh(sk, 100, 1e-6), tr)
    owner.init()
    owner.update_documents((Op.ADD, d, kws) for d, kws in TABLE)
    oracle = PlaintextOracle()
    oracle.record(UpdateTriple(Op.ADD, d, w) for d, kws in TABLE for w in kws)
    for q in QUERIES:
        try:
            owner.search(q)
        except (wire.WireError, ValueError):
            pass
        if oracle_notes:
            tr.annotate("oracle", upd_count=len(oracle_upd(oracle, q)), candidates=oracle_candidates(oracle, q))
    return owner


def test_conforming_run_has_no_violations():
    tr = SearchTranscript()
    run_session(ServerEngine(), tr)
    rep = audit_transcript(tr)
    assert rep.ok, format_report(rep)
    assert len(rep.queries) == len(QUERIES)
    assert [q.upd_count for q in rep.queries] == [3, 2, 4, 0, 3]
    assert rep.queries[0].result_size == 1


def test_transcript_file_round_trip(tmp_path):
    tr = SearchTranscript()
    run_session(ServerEngine(), tr)
    tr.save(tmp_path / "t.jsonl")
    tr.save(tmp_path / "t.jsonl", append=True)
    back = SearchTranscript.load(tmp_path / "t.jsonl")
    assert len(back) == 2 * len(tr)
    assert audit_transcript(back).ok


def test_boolean_leak_is_flagged():
    tr = SearchTranscript()
    engine = BooleanLeakEngine(bloom=None)
    sk = SecretKeyBundle.generate()
    state = OwnerState.fresh(sk, 100, 1e-6)
    client = OwnerClient(LocalTransport(engine), sk, state, tr)
    client.init()
    client.update_documents((Op.ADD, d, kws) for d, kws in TABLE)
    # the double is handed the owner's plaintext filter after loading
    engine.bloom = client.state.client.bloom
    with pytest.raises(wire.WireError):
        client.search([b"w1", b"w2", b"w3"])
    rep = audit_transcript(tr)
    assert not rep.ok
    assert any("schema" in v for v in rep.all_violations)


def test_per_term_positions_are_flagged():
    tr = SearchTranscript()
    run_session(PerTermPositionsEngine(), tr)
    rep = audit_transcript(tr)
    assert any("position sets" in v for v in rep.all_violations)


def test_unmasked_update_is_flagged():
    tr = SearchTranscript()
    engine = ServerEngine()
    sk = SecretKeyBundle.generate()
    owner = OwnerClient(LocalTransport(engine), sk, OwnerState.fresh(sk, 100, 1e-6), tr)
    owner.init()
    triples = [UpdateTriple(Op.ADD, b"patient-00017", w) for w in (b"diabetes", b"cardiology")]
    new, msg = unmasked_update(sk, owner.state.client, triples)
    tr.annotate("update", ids=[b"patient-00017".hex()], keywords=[t.w.hex() for t in triples], triples=2)
    owner.request(wire.UPDATE, wire.encode_update(msg))
    rep = audit_transcript(tr)
    assert not rep.ok
    assert any("identifier" in v or "unmasked" in v for v in rep.all_violations)


def test_missing_round2_address_is_flagged():
    tr = SearchTranscript()
    run_session(ServerEngine(), tr, oracle_notes=False)
    # claim the s-term had one more update than the request covered
    for e in tr.entries:
        if e["kind"] == "note" and e["label"] == "search":
            e["data"]["s_count"] += 1
            break
    assert any("addresses" in v for v in audit_transcript(tr).all_violations)


def test_empty_transcript():
    rep = audit_transcript(SearchTranscript())
    assert rep.ok and rep.queries == [] and rep.updates == []


def test_byte_entropy():
    assert byte_entropy(b"") == 0.0
    assert byte_entropy(b"aaaa") == 0.0
    assert byte_entropy(bytes(range(256))) == 8.0
