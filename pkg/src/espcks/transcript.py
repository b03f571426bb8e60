"""Append-only log of protocol messages as seen on the wire.

Each message entry stores the raw payload (hex) so the auditor can re-decode
it strictly. Annotation entries carry the client's plaintext view (query
keywords, s-term count, update plaintext) and, optionally, oracle values;
the auditor needs them to say what the server *should* have been able to
learn.
"""

from __future__ import annotations

import json
import threading
import time
from pathlib import Path
from typing import Any


class SearchTranscript:
    def __init__(self, entries: list[dict] | None = None):
        self.entries: list[dict] = list(entries or [])
        self._lock = threading.Lock()

    def _append(self, entry: dict) -> None:
        with self._lock:
            entry["seq"] = len(self.entries)
            entry["t"] = time.time()
            self.entries.append(entry)

    def record(self, direction: str, msg_type: int, payload: bytes) -> None:
        self._append({"kind": "msg", "dir": direction, "type": msg_type, "payload": payload.hex()})

    def annotate(self, label: str, **data: Any) -> None:
        self._append({"kind": "note", "label": label, "data": data})

    def messages(self):
        for e in self.entries:
            if e["kind"] == "msg":
                yield e

    def __len__(self) -> int:
        return len(self.entries)

    def save(self, path: str | Path, *, append: bool = False) -> None:
        with open(path, "a" if append else "w", encoding="utf-8") as f:
            for e in self.entries:
                f.write(json.dumps(e) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "SearchTranscript":
        entries = []
        with open(path, encoding="utf-8") as f:
            for line in f:
                if line.strip():
                    entries.append(json.loads(line))
        return cls(entries)
