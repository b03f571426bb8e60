"""Server engine and TCP listener.

Concurrency: a single writer commits updates under ``_commit``; every commit
installs a new ``EncryptedDatabase`` object. A search session pins the
object that was current at Round 1 and uses it for all three rounds, so a
concurrent update never changes what an in-flight search sees.
"""

from __future__ import annotations

import logging
import math
import os
import socketserver
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

from .. import core, lfka
from ..core import EncryptedDatabase
from . import persist, wire
from .config import ServerConfig

log = logging.getLogger(__name__)


NO_SESSION = bytes(wire.SESSION_ID_BYTES)


class RequestError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


@dataclass
class SearchSession:
    sid: bytes
    edb: EncryptedDatabase
    last_used: float = field(default_factory=time.monotonic)
    svals: list[bytes] | None = None


class ServerEngine:
    def __init__(self, edb: EncryptedDatabase | None = None, *, frame_cap: int = wire.DEFAULT_FRAME_CAP,
                 session_timeout: float = 300.0, snapshot_path: str | os.PathLike | None = None):
        self._edb = edb
        self.configured_cap = frame_cap
        self.frame_cap = frame_cap
        self.session_timeout = session_timeout
        self.snapshot_path = Path(snapshot_path) if snapshot_path else None
        self._commit = threading.Lock()
        self._sessions: dict[bytes, SearchSession] = {}
        self._slock = threading.Lock()
        if edb is not None:
            self._raise_cap(edb.m, math.ceil(edb.m / (1.44 * edb.k)))

    @property
    def edb(self) -> EncryptedDatabase | None:
        return self._edb

    def _raise_cap(self, m: int, capacity: int) -> None:
        # a full encrypted-filter retransmission plus a capacity-sized batch must fit
        need = 32 * m + 160 * capacity + (1 << 20)
        self.frame_cap = max(self.configured_cap, need)

    # -- dispatch --------------------------------------------------------------

    def handle(self, msg_type: int, payload: bytes) -> tuple[int, bytes]:
        try:
            handler = self._handlers[msg_type]
        except KeyError:
            return wire.ERR, wire.encode_error(wire.E_BAD_REQUEST, f"unexpected message type 0x{msg_type:02x}")
        try:
            return msg_type | wire.RESPONSE, handler(self, payload)
        except RequestError as exc:
            return wire.ERR, wire.encode_error(exc.code, str(exc))
        except wire.WireError as exc:
            return wire.ERR, wire.encode_error(wire.E_BAD_REQUEST, str(exc))
        except core.ProtocolError as exc:
            return wire.ERR, wire.encode_error(wire.E_DIVERGENCE, str(exc))
        except Exception as exc:  # noqa: BLE001 - reported to the peer, server keeps running
            log.exception("internal error handling 0x%02x", msg_type)
            return wire.ERR, wire.encode_error(wire.E_INTERNAL, f"{type(exc).__name__}: {exc}")

    def handle_frame(self, frame: bytes) -> bytes:
        try:
            msg_type, payload = wire.decode_frame(frame, self.frame_cap)
        except wire.FrameTooLarge as exc:
            return wire.encode_frame(wire.ERR, wire.encode_error(wire.E_FRAME_TOO_LARGE, str(exc)))
        except wire.WireError as exc:
            code = wire.E_VERSION if "version" in str(exc) else wire.E_BAD_REQUEST
            return wire.encode_frame(wire.ERR, wire.encode_error(code, str(exc)))
        return wire.encode_frame(*self.handle(msg_type, payload))

    def _require_edb(self) -> EncryptedDatabase:
        edb = self._edb
        if edb is None:
            raise RequestError(wire.E_NOT_INITIALIZED, "server holds no encrypted database; run init first")
        return edb

    # -- handlers --------------------------------------------------------------

    def _hello(self, payload: bytes) -> bytes:
        wire.decode_empty(payload)
        edb = self._edb
        if edb is None:
            return wire.encode_hello(wire.Hello(wire.VERSION, False, 0, 0, 0))
        return wire.encode_hello(wire.Hello(wire.VERSION, True, edb.freq_set.r, edb.m, edb.k))

    def _init(self, payload: bytes) -> bytes:
        m, k, capacity, freq, bf = wire.decode_init(payload)
        with self._commit:
            if self._edb is not None and self._edb.tset:
                raise RequestError(wire.E_BAD_REQUEST, "database already holds entries; refusing to re-initialize")
            self._edb = EncryptedDatabase(m, k, {}, bf, freq)
            self._raise_cap(m, capacity)
        return b""

    def _update(self, payload: bytes) -> bytes:
        msg = wire.decode_update(payload)
        with self._commit:
            edb = core.server_apply_update(self._require_edb(), msg)
            self._edb = edb
        return wire.encode_update_ack(edb.version, len(edb.tset))

    def _search_r1(self, payload: bytes) -> bytes:
        nonce, tokens = wire.decode_r1(payload)
        edb = self._require_edb()
        if nonce != edb.freq_set.r:
            raise RequestError(wire.E_STALE_EPOCH, "epoch nonce is stale; re-read it with HELLO")
        delta = lfka.freq_find(list(enumerate(tokens)), edb.freq_set)
        if any(ecnt is None for _, ecnt in delta):
            # the client stops here, so no session is opened
            return wire.encode_r1_resp(NO_SESSION, [ecnt for _, ecnt in delta])
        sess = SearchSession(os.urandom(wire.SESSION_ID_BYTES), edb)
        with self._slock:
            self._expire()
            self._sessions[sess.sid] = sess
        return wire.encode_r1_resp(sess.sid, [ecnt for _, ecnt in delta])

    def _session(self, sid: bytes, *, pop: bool = False) -> SearchSession:
        with self._slock:
            self._expire()
            sess = self._sessions.pop(sid, None) if pop else self._sessions.get(sid)
            if sess is None:
                raise RequestError(wire.E_SESSION, "unknown or expired search session")
            sess.last_used = time.monotonic()
            return sess

    def _search_r2(self, payload: bytes) -> bytes:
        sid, saddrs, xtokens = wire.decode_r2(payload)
        sess = self._session(sid)
        if sess.svals is not None:
            raise RequestError(wire.E_SESSION, "round 2 already answered for this session")
        try:
            vbfind, svals = core.server_search_round2(sess.edb, saddrs, xtokens)
        except core.UnknownAddress as exc:
            self._drop(sid)
            raise RequestError(wire.E_DIVERGENCE, str(exc)) from exc
        if not xtokens or not xtokens[0]:
            self._drop(sid)
            return wire.encode_r2_final(core.server_search_all(svals))
        sess.svals = svals
        return wire.encode_r2_positions(vbfind)

    def _search_r3(self, payload: bytes) -> bytes:
        sid, keys = wire.decode_r3(payload)
        sess = self._session(sid, pop=True)
        if sess.svals is None:
            raise RequestError(wire.E_SESSION, "round 3 before round 2")
        if any(p >= sess.edb.m for key in keys for p in key.S):
            raise RequestError(wire.E_BAD_REQUEST, "SHVE key position outside the filter")
        return wire.encode_srlist(core.server_search_round3(sess.edb, keys, sess.svals))

    def _snapshot(self, payload: bytes) -> bytes:
        wire.decode_empty(payload)
        if self.snapshot_path is None:
            raise RequestError(wire.E_BAD_REQUEST, "no snapshot path configured")
        with self._commit:
            path = persist.persist(self._require_edb(), self.snapshot_path)
        return str(path).encode()

    def _stats(self, payload: bytes) -> bytes:
        wire.decode_empty(payload)
        edb = self._require_edb()
        with self._slock:
            self._expire()
            n_sessions = len(self._sessions)
        return wire.encode_stats(wire.Stats(
            edb.version, len(edb.tset), len(edb.freq_set), edb.m, edb.k,
            estimated_fill(len(edb.tset), edb.m, edb.k), n_sessions,
        ))

    _handlers = {
        wire.HELLO: _hello,
        wire.INIT: _init,
        wire.UPDATE: _update,
        wire.SEARCH_R1: _search_r1,
        wire.SEARCH_R2: _search_r2,
        wire.SEARCH_R3: _search_r3,
        wire.SNAPSHOT: _snapshot,
        wire.STATS: _stats,
    }

    # -- sessions --------------------------------------------------------------

    def _drop(self, sid: bytes) -> None:
        with self._slock:
            self._sessions.pop(sid, None)

    def _expire(self) -> None:
        cutoff = time.monotonic() - self.session_timeout
        for sid in [s for s, v in self._sessions.items() if v.last_used < cutoff]:
            del self._sessions[sid]


def estimated_fill(n_entries: int, m: int, k: int) -> float:
    """Expected fraction of set bits after ``n_entries`` insertions.

    The server never sees the plaintext filter; this is derived from public
    counts only.
    """
    if m == 0:
        return 0.0
    return 1.0 - math.exp(-k * n_entries / m)


# -- TCP -----------------------------------------------------------------------

class _Handler(socketserver.BaseRequestHandler):
    def handle(self) -> None:
        engine: ServerEngine = self.server.engine  # type: ignore[attr-defined]
        sock = self.request
        while True:
            try:
                frame = wire.read_frame(sock, engine.frame_cap)
            except wire.FrameTooLarge as exc:
                sock.sendall(wire.encode_frame(wire.ERR, wire.encode_error(wire.E_FRAME_TOO_LARGE, str(exc))))
                return
            except wire.WireError as exc:
                code = wire.E_VERSION if "version" in str(exc) else wire.E_BAD_REQUEST
                try:
                    sock.sendall(wire.encode_frame(wire.ERR, wire.encode_error(code, str(exc))))
                except OSError:
                    pass
                return
            except OSError:
                return
            if frame is None:
                return
            sock.sendall(wire.encode_frame(*engine.handle(*frame)))


class EspcksTCPServer(socketserver.ThreadingTCPServer):
    daemon_threads = True
    allow_reuse_address = True

    def __init__(self, address: tuple[str, int], engine: ServerEngine):
        super().__init__(address, _Handler)
        self.engine = engine


def build_engine(config: ServerConfig) -> ServerEngine:
    edb = None
    snap = config.snapshot_path
    if snap and Path(snap).exists():
        edb = persist.restore(snap)
        log.info("restored snapshot %s (version %d, %d entries)", snap, edb.version, len(edb.tset))
    return ServerEngine(edb, frame_cap=config.frame_cap, session_timeout=config.session_timeout,
                        snapshot_path=snap)


def start_server(config: ServerConfig, engine: ServerEngine | None = None) -> tuple[EspcksTCPServer, threading.Thread]:
    """Start listening in a background thread (port 0 picks a free port)."""
    srv = EspcksTCPServer((config.host, config.port), engine or build_engine(config))
    t = threading.Thread(target=srv.serve_forever, name="espcks-server", daemon=True)
    t.start()
    return srv, t


def serve(config: ServerConfig) -> None:
    srv = EspcksTCPServer((config.host, config.port), build_engine(config))
    host, port = srv.server_address[:2]
    log.info("listening on %s:%d", host, port)
    try:
        srv.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        if srv.engine.snapshot_path and srv.engine.edb is not None:
            persist.persist(srv.engine.edb, srv.engine.snapshot_path)
        srv.server_close()
