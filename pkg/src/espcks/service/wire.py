"""Binary framing and strict payload codecs.

Frame: ``b"ESPC" | version (1) | msg_type (1) | payload_len (4, LE) | payload``.
Responses use ``request_type | 0x80``; errors use ``ERR``. Integers inside
payloads are little-endian. Every decoder consumes its payload exactly and
rejects trailing bytes, which is what lets the auditor treat a successful
decode as a schema check.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

from ..core import UpdateMessage
from ..lfka import EncryptedFreqSet, LfkaError
from ..prims import CryptoError, scalar_from_bytes, scalar_to_bytes
from ..shve import ShveError, ShveKey

MAGIC = b"ESPC"
VERSION = 1
HEADER = struct.Struct("<4sBBI")
DEFAULT_FRAME_CAP = 64 * 1024 * 1024
SESSION_ID_BYTES = 16

HELLO = 0x01
UPDATE = 0x02
INIT = 0x03
SEARCH_R1 = 0x10
SEARCH_R2 = 0x11
SEARCH_R3 = 0x12
SNAPSHOT = 0x20
STATS = 0x21
RESPONSE = 0x80
ERR = 0xFF

REQUEST_TYPES = {HELLO, UPDATE, INIT, SEARCH_R1, SEARCH_R2, SEARCH_R3, SNAPSHOT, STATS}
NAMES = {
    HELLO: "HELLO", UPDATE: "UPDATE", INIT: "INIT", SEARCH_R1: "SEARCH_R1",
    SEARCH_R2: "SEARCH_R2", SEARCH_R3: "SEARCH_R3", SNAPSHOT: "SNAPSHOT", STATS: "STATS",
    ERR: "ERR",
}
NAMES.update({t | RESPONSE: NAMES[t] + "_RESP" for t in REQUEST_TYPES})
TYPES_BY_NAME = {v: k for k, v in NAMES.items()}

# error codes carried in ERR payloads
E_BAD_REQUEST = 1
E_VERSION = 2
E_FRAME_TOO_LARGE = 3
E_SESSION = 4
E_STALE_EPOCH = 5
E_NOT_INITIALIZED = 6
E_DIVERGENCE = 7
E_INTERNAL = 8


class WireError(ValueError):
    pass


class FrameTooLarge(WireError):
    pass


def is_known_type(t: int) -> bool:
    return t in NAMES


# -- framing -------------------------------------------------------------------

def encode_frame(msg_type: int, payload: bytes = b"") -> bytes:
    if not is_known_type(msg_type):
        raise WireError(f"unknown message type 0x{msg_type:02x}")
    return HEADER.pack(MAGIC, VERSION, msg_type, len(payload)) + payload


def parse_header(header: bytes, frame_cap: int = DEFAULT_FRAME_CAP) -> tuple[int, int]:
    magic, version, msg_type, n = HEADER.unpack(header)
    if magic != MAGIC:
        raise WireError("bad frame magic")
    if version != VERSION:
        raise WireError(f"unsupported protocol version {version}")
    if not is_known_type(msg_type):
        raise WireError(f"unknown message type 0x{msg_type:02x}")
    if n > frame_cap:
        raise FrameTooLarge(f"frame of {n} bytes exceeds cap {frame_cap}")
    return msg_type, n


def decode_frame(frame: bytes, frame_cap: int = DEFAULT_FRAME_CAP) -> tuple[int, bytes]:
    if len(frame) < HEADER.size:
        raise WireError("truncated frame header")
    msg_type, n = parse_header(frame[:HEADER.size], frame_cap)
    payload = frame[HEADER.size:]
    if len(payload) != n:
        raise WireError("payload length does not match header")
    return msg_type, payload


def read_frame(sock, frame_cap: int = DEFAULT_FRAME_CAP) -> tuple[int, bytes] | None:
    """Read one frame from a socket; None on clean EOF before a header."""
    header = _recv_exact(sock, HEADER.size, eof_ok=True)
    if header is None:
        return None
    msg_type, n = parse_header(header, frame_cap)
    return msg_type, _recv_exact(sock, n) if n else b""


def _recv_exact(sock, n: int, eof_ok: bool = False) -> bytes | None:
    buf = bytearray()
    while len(buf) < n:
        chunk = sock.recv(min(n - len(buf), 1 << 20))
        if not chunk:
            if eof_ok and not buf:
                return None
            raise WireError("connection closed mid-frame")
        buf += chunk
    return bytes(buf)


# -- strict reader ---------------------------------------------------------------

class Reader:
    def __init__(self, buf: bytes):
        self.buf = memoryview(buf)
        self.off = 0

    def take(self, n: int) -> bytes:
        if n < 0 or self.off + n > len(self.buf):
            raise WireError("payload truncated")
        out = bytes(self.buf[self.off:self.off + n])
        self.off += n
        return out

    def unpack(self, fmt: str):
        s = struct.Struct("<" + fmt)
        vals = s.unpack(self.take(s.size))
        return vals[0] if len(vals) == 1 else vals

    def done(self) -> None:
        if self.off != len(self.buf):
            raise WireError(f"{len(self.buf) - self.off} trailing bytes in payload")


def _freq_set(r: Reader) -> EncryptedFreqSet:
    try:
        fs, off = EncryptedFreqSet.read_from(r.buf, r.off)
    except LfkaError as exc:
        raise WireError(str(exc)) from exc
    r.off = off
    return fs


def _elements(r: Reader, n: int, size: int = 32) -> list[bytes]:
    raw = r.take(n * size)
    return [raw[i:i + size] for i in range(0, len(raw), size)]


# -- payloads ------------------------------------------------------------------

@dataclass
class Hello:
    version: int
    initialized: bool
    r: int
    m: int
    k: int


def encode_hello(h: Hello) -> bytes:
    return struct.pack("<BBQQH", h.version, int(h.initialized), h.r, h.m, h.k)


def decode_hello(p: bytes) -> Hello:
    r = Reader(p)
    v, init, nonce, m, k = r.unpack("BBQQH")
    r.done()
    return Hello(v, bool(init), nonce, m, k)


def encode_init(m: int, k: int, capacity: int, freq_set: EncryptedFreqSet, xtag_bf: list[bytes]) -> bytes:
    if len(xtag_bf) != m:
        raise WireError("encrypted Bloom filter length must equal m")
    return struct.pack("<QHQ", m, k, capacity) + freq_set.to_bytes() + b"".join(xtag_bf)


def decode_init(p: bytes) -> tuple[int, int, int, EncryptedFreqSet, list[bytes]]:
    r = Reader(p)
    m, k, capacity = r.unpack("QHQ")
    if m == 0 or k == 0:
        raise WireError("m and k must be positive")
    fs = _freq_set(r)
    bf = _elements(r, m)
    r.done()
    return m, k, capacity, fs, bf


def encode_update(msg: UpdateMessage) -> bytes:
    parts = [msg.freq_set.to_bytes(), struct.pack("<I", len(msg.entries))]
    for addr, val, alpha in msg.entries:
        parts += (addr, val, scalar_to_bytes(alpha))
    parts.append(struct.pack("<Q", len(msg.xtag_bf)))
    parts.extend(msg.xtag_bf)
    return b"".join(parts)


def decode_update(p: bytes) -> UpdateMessage:
    r = Reader(p)
    fs = _freq_set(r)
    n = r.unpack("I")
    entries = []
    for _ in range(n):
        addr, val, a = r.take(32), r.take(32), r.take(32)
        try:
            entries.append((addr, val, scalar_from_bytes(a)))
        except CryptoError as exc:
            raise WireError(str(exc)) from exc
    m = r.unpack("Q")
    bf = _elements(r, m)
    r.done()
    return UpdateMessage(fs, entries, bf)


def encode_update_ack(version: int, tset_size: int) -> bytes:
    return struct.pack("<QQ", version, tset_size)


def decode_update_ack(p: bytes) -> tuple[int, int]:
    r = Reader(p)
    out = r.unpack("QQ")
    r.done()
    return out


def encode_r1(r_nonce: int, tokens: list[bytes]) -> bytes:
    if any(len(t) != 64 for t in tokens):
        raise WireError("frequency tokens are 64 bytes")
    return struct.pack("<QI", r_nonce, len(tokens)) + b"".join(tokens)


def decode_r1(p: bytes) -> tuple[int, list[bytes]]:
    r = Reader(p)
    nonce, n = r.unpack("QI")
    if n == 0:
        raise WireError("empty token list")
    toks = _elements(r, n, 64)
    r.done()
    return nonce, toks


def encode_r1_resp(session: bytes, delta: list[bytes | None]) -> bytes:
    parts = [session, struct.pack("<I", len(delta))]
    for ecnt in delta:
        parts.append(b"\x00" if ecnt is None else b"\x01" + ecnt)
    return b"".join(parts)


def decode_r1_resp(p: bytes) -> tuple[bytes, list[bytes | None]]:
    r = Reader(p)
    session = r.take(SESSION_ID_BYTES)
    n = r.unpack("I")
    out: list[bytes | None] = []
    for _ in range(n):
        flag = r.unpack("B")
        if flag == 0:
            out.append(None)
        elif flag == 1:
            out.append(r.take(64))
        else:
            raise WireError("bad presence flag")
    r.done()
    return session, out


def encode_r2(session: bytes, saddrs: list[bytes], xtokens: list[list[bytes]]) -> bytes:
    width = len(xtokens[0]) if xtokens else 0
    if len(xtokens) != len(saddrs) or any(len(row) != width for row in xtokens):
        raise WireError("xtoken matrix must have one equal-width row per address")
    parts = [session, struct.pack("<IH", len(saddrs), width)]
    parts.extend(saddrs)
    for row in xtokens:
        parts.extend(row)
    return b"".join(parts)


def decode_r2(p: bytes) -> tuple[bytes, list[bytes], list[list[bytes]]]:
    r = Reader(p)
    session = r.take(SESSION_ID_BYTES)
    c, width = r.unpack("IH")
    saddrs = _elements(r, c)
    flat = _elements(r, c * width)
    r.done()
    return session, saddrs, [flat[j * width:(j + 1) * width] for j in range(c)]


R2_POSITIONS = 0
R2_FINAL = 1


def encode_r2_positions(vbfind: list[list[int]]) -> bytes:
    parts = [struct.pack("<BI", R2_POSITIONS, len(vbfind))]
    for pos in vbfind:
        parts.append(struct.pack(f"<I{len(pos)}I", len(pos), *pos))
    return b"".join(parts)


def encode_r2_final(srlist: list[tuple[int, bytes]]) -> bytes:
    return bytes([R2_FINAL]) + encode_srlist(srlist)


def decode_r2_resp(p: bytes) -> tuple[int, list]:
    """``(R2_POSITIONS, vbfind)`` or ``(R2_FINAL, srlist)``."""
    r = Reader(p)
    mode = r.unpack("B")
    if mode == R2_FINAL:
        return mode, _srlist(r)
    if mode != R2_POSITIONS:
        raise WireError("bad round-2 response mode")
    c = r.unpack("I")
    vbfind = []
    for _ in range(c):
        n = r.unpack("I")
        pos = list(struct.unpack(f"<{n}I", r.take(4 * n)))
        if any(b <= a for a, b in zip(pos, pos[1:])):
            raise WireError("position sets must be sorted and deduplicated")
        vbfind.append(pos)
    r.done()
    return mode, vbfind


def encode_r3(session: bytes, keys: list[ShveKey]) -> bytes:
    return session + struct.pack("<I", len(keys)) + b"".join(k.to_bytes() for k in keys)


def decode_r3(p: bytes) -> tuple[bytes, list[ShveKey]]:
    r = Reader(p)
    session = r.take(SESSION_ID_BYTES)
    n = r.unpack("I")
    keys = []
    for _ in range(n):
        try:
            key, r.off = ShveKey.read_from(r.buf, r.off)
        except ShveError as exc:
            raise WireError(str(exc)) from exc
        keys.append(key)
    r.done()
    return session, keys


def encode_srlist(srlist: list[tuple[int, bytes]]) -> bytes:
    parts = [struct.pack("<I", len(srlist))]
    for j, sval in srlist:
        parts.append(struct.pack("<I", j) + sval)
    return b"".join(parts)


def _srlist(r: Reader) -> list[tuple[int, bytes]]:
    n = r.unpack("I")
    out = [(r.unpack("I"), r.take(32)) for _ in range(n)]
    r.done()
    js = [j for j, _ in out]
    if any(b <= a for a, b in zip(js, js[1:])):
        raise WireError("result list must be strictly ascending in j")
    return out


def decode_srlist(p: bytes) -> list[tuple[int, bytes]]:
    return _srlist(Reader(p))


@dataclass
class Stats:
    version: int
    tset_entries: int
    freq_entries: int
    m: int
    k: int
    est_fill_ratio: float
    open_sessions: int


def encode_stats(s: Stats) -> bytes:
    return struct.pack("<QQIQHdI", s.version, s.tset_entries, s.freq_entries, s.m, s.k,
                       s.est_fill_ratio, s.open_sessions)


def decode_stats(p: bytes) -> Stats:
    r = Reader(p)
    s = Stats(*r.unpack("QQIQHdI"))
    r.done()
    return s


def encode_error(code: int, message: str) -> bytes:
    return bytes([code]) + message.encode("utf-8", "replace")


def decode_error(p: bytes) -> tuple[int, str]:
    if not p:
        raise WireError("empty error payload")
    return p[0], p[1:].decode("utf-8", "replace")


def decode_empty(p: bytes) -> None:
    if p:
        raise WireError("payload must be empty")


# message type -> strict decoder, used by the auditor and fuzz tests
DECODERS = {
    HELLO: decode_empty,
    HELLO | RESPONSE: decode_hello,
    INIT: decode_init,
    INIT | RESPONSE: decode_empty,
    UPDATE: decode_update,
    UPDATE | RESPONSE: decode_update_ack,
    SEARCH_R1: decode_r1,
    SEARCH_R1 | RESPONSE: decode_r1_resp,
    SEARCH_R2: decode_r2,
    SEARCH_R2 | RESPONSE: decode_r2_resp,
    SEARCH_R3: decode_r3,
    SEARCH_R3 | RESPONSE: decode_srlist,
    SNAPSHOT: decode_empty,
    SNAPSHOT | RESPONSE: lambda p: p.decode("utf-8"),
    STATS: decode_empty,
    STATS | RESPONSE: decode_stats,
    ERR: decode_error,
}


def decode_payload(msg_type: int, payload: bytes):
    try:
        dec = DECODERS[msg_type]
    except KeyError:
        raise WireError(f"unknown message type 0x{msg_type:02x}") from None
    try:
        return dec(payload)
    except (struct.error, UnicodeDecodeError) as exc:
        raise WireError(str(exc)) from exc
