"""JSON-lines dataset reader.

One record per line: ``{"op": "add", "id": "doc-1", "keywords": ["w1", "w2"]}``.
Delete records may omit ``keywords``; they are filled in from the add-ledger
so that a deletion always covers the whole document.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path

from ..core import ID_BYTES, DocumentLedger, LedgerError, Op


class IngestError(ValueError):
    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


@dataclass
class DatasetRecord:
    op: Op
    id: str
    keywords: list[str]

    def as_update(self) -> tuple[Op, bytes, list[bytes]]:
        return self.op, self.id.encode(), [w.encode() for w in self.keywords]


def parse_record(obj, lineno: int) -> DatasetRecord:
    if not isinstance(obj, dict):
        raise IngestError(lineno, "record must be a JSON object")
    op = obj.get("op")
    if op not in ("add", "del"):
        raise IngestError(lineno, 'op must be "add" or "del"')
    doc_id = obj.get("id")
    if not isinstance(doc_id, str) or not doc_id:
        raise IngestError(lineno, "id must be a non-empty string")
    if len(doc_id.encode()) > ID_BYTES:
        raise IngestError(lineno, f"id longer than {ID_BYTES} bytes")
    kws = obj.get("keywords", [])
    if not isinstance(kws, list) or not all(isinstance(w, str) and w for w in kws):
        raise IngestError(lineno, "keywords must be a list of non-empty strings")
    if op == "add" and not kws:
        raise IngestError(lineno, "add records need at least one keyword")
    extra = set(obj) - {"op", "id", "keywords"}
    if extra:
        raise IngestError(lineno, f"unexpected fields {sorted(extra)}")
    return DatasetRecord(Op.ADD if op == "add" else Op.DEL, doc_id, list(dict.fromkeys(kws)))


def ingest(path: str | os.PathLike, ledger: DocumentLedger | None = None) -> list[DatasetRecord]:
    """Parse and validate a dataset file.

    ``ledger`` (left unmodified) describes documents already in the index,
    so a file may delete documents added by an earlier file.
    """
    work = DocumentLedger(ledger.live, ledger.retired) if ledger else DocumentLedger()
    records = []
    with Path(path).open(encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise IngestError(lineno, f"invalid JSON: {exc.msg}") from None
            rec = parse_record(obj, lineno)
            op, doc_id, kws = rec.as_update()
            if op is Op.DEL and rec.keywords:
                known = work.live.get(doc_id)
                if known is not None and set(known) != set(kws):
                    raise IngestError(lineno, "delete must cover exactly the keywords the document was added with")
            try:
                triples = work.expand(op, doc_id, kws)
            except LedgerError as exc:
                raise IngestError(lineno, str(exc)) from None
            rec.keywords = [t.w.decode() for t in triples]
            records.append(rec)
    return records
