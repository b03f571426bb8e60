"""Client adapters that drive the protocol over a transport.

``SearchClient`` needs only the key bundle: it reads the current epoch nonce
from HELLO and runs the three search rounds. ``OwnerClient`` additionally
holds the owner's state (counters, plaintext Bloom filter, document ledger)
and issues INIT / UPDATE.
"""

from __future__ import annotations

import base64
import json
import os
import socket
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from pathlib import Path

from .. import core
from ..bloom import BloomFilter
from ..core import ClientState, DocumentLedger, Op, SecretKeyBundle, UpdateTriple
from ..transcript import SearchTranscript
from . import wire
from .config import parse_address


class TransportError(ConnectionError):
    pass


class ServerError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(f"server error {code}: {message}")
        self.code = code
        self.message = message


class SocketTransport:
    def __init__(self, address: str | tuple[str, int], timeout: float | None = 60.0,
                 frame_cap: int = 1 << 31):
        host, port = parse_address(address) if isinstance(address, str) else address
        try:
            self.sock = socket.create_connection((host, port), timeout=timeout)
        except OSError as exc:
            raise TransportError(f"cannot connect to {host}:{port}: {exc}") from exc
        self.frame_cap = frame_cap

    def exchange(self, msg_type: int, payload: bytes) -> tuple[int, bytes]:
        try:
            self.sock.sendall(wire.encode_frame(msg_type, payload))
            frame = wire.read_frame(self.sock, self.frame_cap)
        except OSError as exc:
            raise TransportError(str(exc)) from exc
        if frame is None:
            raise TransportError("server closed the connection")
        return frame

    def close(self) -> None:
        self.sock.close()


class LocalTransport:
    """In-process transport; still encodes and decodes every frame."""

    def __init__(self, engine):
        self.engine = engine

    def exchange(self, msg_type: int, payload: bytes) -> tuple[int, bytes]:
        return wire.decode_frame(self.engine.handle_frame(wire.encode_frame(msg_type, payload)), 1 << 62)

    def close(self) -> None:
        pass


@dataclass
class SearchResult:
    ids: set[bytes]
    query: list[bytes]
    s_term: bytes | None = None
    s_count: int = 0
    absent: list[bytes] = field(default_factory=list)


class SearchClient:
    def __init__(self, transport, sk: SecretKeyBundle, transcript: SearchTranscript | None = None):
        self.transport = transport
        self.sk = sk
        self.transcript = transcript

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def close(self) -> None:
        self.transport.close()

    def request(self, msg_type: int, payload: bytes = b"") -> bytes:
        if self.transcript is not None:
            self.transcript.record("req", msg_type, payload)
        rtype, rpayload = self.transport.exchange(msg_type, payload)
        if self.transcript is not None:
            self.transcript.record("resp", rtype, rpayload)
        if rtype == wire.ERR:
            raise ServerError(*wire.decode_error(rpayload))
        if rtype != msg_type | wire.RESPONSE:
            raise wire.WireError(f"expected response to 0x{msg_type:02x}, got 0x{rtype:02x}")
        return rpayload

    def hello(self) -> wire.Hello:
        return wire.decode_hello(self.request(wire.HELLO))

    def stats(self) -> wire.Stats:
        return wire.decode_stats(self.request(wire.STATS))

    def snapshot(self) -> str:
        return self.request(wire.SNAPSHOT).decode()

    def search(self, keywords: Iterable[bytes | str], *, _retry: bool = True) -> SearchResult:
        Q = core.normalize_query(k.encode() if isinstance(k, str) else k for k in keywords)
        info = self.hello()
        if not info.initialized:
            raise ServerError(wire.E_NOT_INITIALIZED, "server holds no encrypted database")
        r = info.r
        tokens = core.client_search_round1(self.sk, r, Q)
        try:
            sid, ecnts = wire.decode_r1_resp(self.request(wire.SEARCH_R1, wire.encode_r1(r, [t for _, t in tokens])))
        except ServerError as exc:
            if exc.code == wire.E_STALE_EPOCH and _retry:
                return self.search(Q, _retry=False)
            raise
        delta = [(tok, e) for (_, tok), e in zip(tokens, ecnts)]
        absent = [w for w, e in zip(Q, ecnts) if e is None]
        req = core.client_search_round2(self.sk, r, delta, Q)
        if self.transcript is not None:
            self.transcript.annotate("search", query=[w.hex() for w in Q], s_term=req.s_term.hex(),
                                     s_count=req.s_count, x_terms=len(Q) - 1, k=info.k,
                                     absent=[w.hex() for w in absent])
        if req.s_count == 0:
            return SearchResult(set(), req.query, req.s_term, 0, absent)
        mode, body = wire.decode_r2_resp(self.request(wire.SEARCH_R2, wire.encode_r2(sid, req.saddrs, req.xtokens)))
        if mode == wire.R2_FINAL:
            srlist = body
        else:
            if len(body) != req.s_count:
                raise wire.WireError("round-2 response does not cover every candidate")
            keys = core.client_search_round3(self.sk, body, info.m)
            srlist = wire.decode_srlist(self.request(wire.SEARCH_R3, wire.encode_r3(sid, keys)))
        ids = core.client_finalize(self.sk, req.s_term, srlist)
        return SearchResult(ids, req.query, req.s_term, req.s_count, absent)


# -- owner side ------------------------------------------------------------------

@dataclass
class OwnerState:
    """Everything the data owner keeps between sessions, minus the keys."""

    client: ClientState
    ledger: DocumentLedger
    capacity: int
    target_fp: float

    def to_json(self) -> str:
        st = self.client
        return json.dumps({
            "capacity": self.capacity,
            "target_fp": self.target_fp,
            "r": st.r,
            "epoch": st.epoch,
            "cnt": {w.hex(): c for w, c in st.cnt.items()},
            "bloom": base64.b64encode(st.bloom.to_bytes()).decode(),
            "ledger": self.ledger.to_json(),
        })

    @classmethod
    def from_json(cls, text: str, sk: SecretKeyBundle) -> "OwnerState":
        d = json.loads(text)
        bloom = BloomFilter.from_bytes(base64.b64decode(d["bloom"]), capacity=d["capacity"])
        st = core.init_state(sk, bloom, {bytes.fromhex(w): c for w, c in d["cnt"].items()},
                             d["r"], d["epoch"])
        return cls(st, DocumentLedger.from_json(d["ledger"]), d["capacity"], d["target_fp"])

    def save(self, path: str | os.PathLike) -> None:
        path = Path(path)
        tmp = path.with_name(path.name + ".tmp")
        tmp.write_text(self.to_json())
        os.replace(tmp, path)

    @classmethod
    def load(cls, path: str | os.PathLike, sk: SecretKeyBundle) -> "OwnerState":
        return cls.from_json(Path(path).read_text(), sk)

    @classmethod
    def fresh(cls, sk: SecretKeyBundle, capacity: int, target_fp: float) -> "OwnerState":
        st = core.init_state(sk, BloomFilter.for_capacity(capacity, target_fp))
        return cls(st, DocumentLedger(), capacity, target_fp)


class OwnerClient(SearchClient):
    def __init__(self, transport, sk: SecretKeyBundle, state: OwnerState,
                 transcript: SearchTranscript | None = None):
        super().__init__(transport, sk, transcript)
        self.state = state

    def init(self) -> None:
        st = self.state.client
        edb = core.initial_database(st)
        self.request(wire.INIT, wire.encode_init(edb.m, edb.k, self.state.capacity, edb.freq_set, edb.xtag_bf))

    def update_triples(self, triples: Sequence[UpdateTriple]) -> tuple[int, int]:
        new_st, msg = core.client_update(self.sk, self.state.client, triples)
        if self.transcript is not None:
            self.transcript.annotate("update", ids=sorted({t.id.hex() for t in triples}),
                                     keywords=sorted({t.w.hex() for t in triples}), triples=len(triples))
        ack = wire.decode_update_ack(self.request(wire.UPDATE, wire.encode_update(msg)))
        self.state.client = new_st
        return ack

    def update_documents(self, records: Iterable[tuple[Op, bytes, Sequence[bytes]]]) -> list[UpdateTriple]:
        """Expand document-level records through the ledger and send one batch.

        The ledger only changes if the server accepted the batch.
        """
        ledger = DocumentLedger(self.state.ledger.live, self.state.ledger.retired)
        triples: list[UpdateTriple] = []
        for op, doc_id, kws in records:
            triples += ledger.expand(op, doc_id, kws)
        if triples:
            self.update_triples(triples)
        self.state.ledger = ledger
        return triples


def client_connect(address: str, keyfile: str | os.PathLike, statefile: str | os.PathLike | None = None,
                   transcript: SearchTranscript | None = None) -> SearchClient:
    sk = SecretKeyBundle.from_json(Path(keyfile).read_text())
    transport = SocketTransport(address)
    if statefile is not None and Path(statefile).exists():
        return OwnerClient(transport, sk, OwnerState.load(statefile, sk), transcript)
    return SearchClient(transport, sk, transcript)
