import json

import pytest

from espcks.core import DocumentLedger, Op
from espcks.harness.ingest import IngestError, ingest


def write(tmp_path, lines, name="d.jsonl"):
    p = tmp_path / name
    p.write_text("\n".join(l if isinstance(l, str) else json.dumps(l) for l in lines) + "\n")
    return p


def test_well_formed_file(tmp_path):
    p = write(tmp_path, [
        {"op": "add", "id": "a", "keywords": ["x", "y", "x"]},
        "",
        {"op": "add", "id": "b", "keywords": ["y"]},
        {"op": "del", "id": "a"},
    ])
    recs = ingest(p)
    assert [(r.op, r.id, r.keywords) for r in recs] == [
        (Op.ADD, "a", ["x", "y"]), (Op.ADD, "b", ["y"]), (Op.DEL, "a", ["x", "y"]),
    ]


@pytest.mark.parametrize("line, lineno, fragment", [
    ("{not json", 2, "invalid JSON"),
    ({"op": "upsert", "id": "a", "keywords": ["x"]}, 2, "op must"),
    ({"op": "add", "id": "", "keywords": ["x"]}, 2, "id must"),
    ({"op": "add", "id": "x" * 31, "keywords": ["x"]}, 2, "longer than 30"),
    ({"op": "add", "id": "c", "keywords": []}, 2, "at least one keyword"),
    ({"op": "add", "id": "c", "keywords": ["x", 3]}, 2, "keywords must"),
    ({"op": "add", "id": "c", "keywords": ["x"], "extra": 1}, 2, "unexpected fields"),
    ([1, 2], 2, "JSON object"),
])
def test_malformed_line_reports_line_number(tmp_path, line, lineno, fragment):
    p = write(tmp_path, [{"op": "add", "id": "a", "keywords": ["x"]}, line])
    with pytest.raises(IngestError) as exc:
        ingest(p)
    assert exc.value.lineno == lineno
    assert fragment in str(exc.value)


def test_delete_of_unknown_id_rejected(tmp_path):
    p = write(tmp_path, [{"op": "del", "id": "ghost"}])
    with pytest.raises(IngestError, match="line 1"):
        ingest(p)


def test_id_reuse_rejected(tmp_path):
    p = write(tmp_path, [
        {"op": "add", "id": "a", "keywords": ["x"]},
        {"op": "del", "id": "a"},
        {"op": "add", "id": "a", "keywords": ["x"]},
    ])
    with pytest.raises(IngestError, match="line 3"):
        ingest(p)


def test_partial_delete_rejected(tmp_path):
    p = write(tmp_path, [
        {"op": "add", "id": "a", "keywords": ["x", "y"]},
        {"op": "del", "id": "a", "keywords": ["x"]},
    ])
    with pytest.raises(IngestError, match="exactly the keywords"):
        ingest(p)


def test_existing_ledger_is_consulted_but_not_modified(tmp_path):
    led = DocumentLedger()
    led.expand(Op.ADD, b"old", [b"k1", b"k2"])
    p = write(tmp_path, [{"op": "del", "id": "old"}])
    recs = ingest(p, led)
    assert recs[0].keywords == ["k1", "k2"]
    assert b"old" in led.live
