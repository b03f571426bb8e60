"""Client and server engines: setup, batched update, three-round search.

The engine is triple-level: an update is a list of ``(op, id, w)``.
Whole-document semantics (a delete must cover every keyword the document
was added with) are enforced above this layer, see ``DocumentLedger``.
"""

from __future__ import annotations

import json
import random
import secrets
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from enum import IntEnum

from . import lfka
from .bloom import BloomFilter, positions
from .lfka import EncryptedFreqSet
from .prims import (
    g_exp,
    group_exp,
    keyword_input,
    prf_F,
    prf_Fp,
    random_key,
    scalar_inv,
    scalar_mul,
    xor_bytes,
)
from .shve import PredicateVector, ShveKey, shve_component, shve_enc, shve_keygen, shve_query

ID_BYTES = 30

_sysrand = random.SystemRandom()


class Op(IntEnum):
    ADD = 0
    DEL = 1


class ProtocolError(Exception):
    """The peer sent something inconsistent with the protocol state."""


class UnknownAddress(ProtocolError):
    pass


class AddressCollision(ProtocolError):
    pass


class CorruptionError(Exception):
    pass


@dataclass(frozen=True)
class UpdateTriple:
    op: Op
    id: bytes
    w: bytes

    def __post_init__(self) -> None:
        if len(self.id) > ID_BYTES:
            raise ValueError(f"document id longer than {ID_BYTES} bytes")
        object.__setattr__(self, "op", Op(self.op))


def pack_id_op(doc_id: bytes, op: Op) -> bytes:
    """30-byte zero-padded id || op byte || original id length."""
    if len(doc_id) > ID_BYTES:
        raise ValueError(f"document id longer than {ID_BYTES} bytes")
    return doc_id.ljust(ID_BYTES, b"\x00") + bytes([int(op), len(doc_id)])


def unpack_id_op(block: bytes) -> tuple[bytes, Op]:
    op_byte, ln = block[ID_BYTES], block[ID_BYTES + 1]
    if op_byte not in (0, 1) or ln > ID_BYTES or any(block[ln:ID_BYTES]):
        raise CorruptionError("malformed (id, op) block")
    return bytes(block[:ln]), Op(op_byte)


@dataclass(frozen=True)
class SecretKeyBundle:
    msk: bytes
    k_lfka: bytes
    k_t: bytes
    k_x: bytes
    k_y: bytes
    k_z: bytes

    @classmethod
    def generate(cls) -> "SecretKeyBundle":
        return cls(*(random_key() for _ in range(6)))

    def to_json(self) -> str:
        return json.dumps({k: getattr(self, k).hex() for k in self.__dataclass_fields__}, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "SecretKeyBundle":
        d = json.loads(text)
        keys = {k: bytes.fromhex(d[k]) for k in cls.__dataclass_fields__}
        if any(len(v) != 32 for v in keys.values()):
            raise ValueError("every key in the bundle must be 32 bytes")
        return cls(**keys)


@dataclass
class ClientState:
    cnt: dict[bytes, int]
    r: int
    bloom: BloomFilter
    epoch: int = 0
    # Ciphertext of ``bloom`` under msk, kept in sync incrementally.
    xtag_ct: list[bytes] = field(default_factory=list, repr=False, compare=False)

    @property
    def m(self) -> int:
        return self.bloom.m

    @property
    def k(self) -> int:
        return self.bloom.k

    def copy(self) -> "ClientState":
        return ClientState(dict(self.cnt), self.r, self.bloom.copy(), self.epoch, list(self.xtag_ct))


@dataclass
class EncryptedDatabase:
    m: int
    k: int
    tset: dict[bytes, tuple[bytes, int]]
    xtag_bf: list[bytes]
    freq_set: EncryptedFreqSet
    version: int = 0

    def __post_init__(self) -> None:
        if len(self.xtag_bf) != self.m:
            raise ValueError("encrypted Bloom filter length must equal m")


@dataclass
class UpdateMessage:
    freq_set: EncryptedFreqSet
    entries: list[tuple[bytes, bytes, int]]  # (addr, val, alpha)
    xtag_bf: list[bytes]


# -- derivations ---------------------------------------------------------------

def tset_addr(sk: SecretKeyBundle, w: bytes, c: int) -> bytes:
    return prf_F(sk.k_t, keyword_input(w, c, 0))


def tset_mask(sk: SecretKeyBundle, w: bytes, c: int) -> bytes:
    return prf_F(sk.k_t, keyword_input(w, c, 1))


def _fp_x(sk: SecretKeyBundle, w: bytes) -> int:
    return prf_Fp(sk.k_x, w)


def _fp_y(sk: SecretKeyBundle, doc_id: bytes, op: Op) -> int:
    return prf_Fp(sk.k_y, pack_id_op(doc_id, op))


def _fp_z(sk: SecretKeyBundle, w: bytes, c: int) -> int:
    return prf_Fp(sk.k_z, keyword_input(w, c, 2))


def blinding_factor(sk: SecretKeyBundle, doc_id: bytes, op: Op, w: bytes, c: int) -> int:
    return scalar_mul(_fp_y(sk, doc_id, op), scalar_inv(_fp_z(sk, w, c)))


def xtag(sk: SecretKeyBundle, doc_id: bytes, op: Op, w: bytes) -> bytes:
    return g_exp(scalar_mul(_fp_x(sk, w), _fp_y(sk, doc_id, op)))


def xtoken(sk: SecretKeyBundle, s_term: bytes, j: int, x_term: bytes) -> bytes:
    return g_exp(scalar_mul(_fp_z(sk, s_term, j), _fp_x(sk, x_term)))


def _fresh_nonce(epoch: int) -> int:
    # counter in the high half keeps epochs distinct, random low half
    return ((epoch & 0xFFFFFFFF) << 32) | secrets.randbits(32)


# -- setup / update --------------------------------------------------------------

def setup(capacity: int, target_fp: float = 1e-6) -> tuple[SecretKeyBundle, ClientState, EncryptedDatabase]:
    sk = SecretKeyBundle.generate()
    st = init_state(sk, BloomFilter.for_capacity(capacity, target_fp))
    return sk, st, initial_database(st)


def init_state(sk: SecretKeyBundle, bloom: BloomFilter, cnt: dict[bytes, int] | None = None,
               r: int = 0, epoch: int = 0) -> ClientState:
    st = ClientState(dict(cnt or {}), r, bloom, epoch)
    st.xtag_ct = shve_enc(sk.msk, bloom.bit_list())
    return st


def initial_database(st: ClientState) -> EncryptedDatabase:
    return EncryptedDatabase(st.m, st.k, {}, list(st.xtag_ct), EncryptedFreqSet(st.r))


def client_update(sk: SecretKeyBundle, st: ClientState,
                  triples: Sequence[UpdateTriple]) -> tuple[ClientState, UpdateMessage]:
    """Encrypt a batch. ``st`` is left untouched; the new state is returned."""
    if not triples:
        raise ValueError("update batch is empty")
    new = st.copy()
    entries = []
    flipped: set[int] = set()
    for t in triples:
        c = new.cnt.get(t.w, 0) + 1
        new.cnt[t.w] = c
        addr = tset_addr(sk, t.w, c)
        val = xor_bytes(pack_id_op(t.id, t.op), tset_mask(sk, t.w, c))
        alpha = blinding_factor(sk, t.id, t.op, t.w, c)
        entries.append((addr, val, alpha))
        flipped.update(new.bloom.insert(xtag(sk, t.id, t.op, t.w)))
    if len({e[0] for e in entries}) != len(entries):
        raise AddressCollision("duplicate TSet address inside one batch")

    new.epoch += 1
    while True:
        r = _fresh_nonce(new.epoch)
        try:
            freq = lfka.freq_setup(new.cnt, sk.k_lfka, r)
            break
        except lfka.PrefixCollision:
            continue
    new.r = r
    if len(new.xtag_ct) != new.m:
        new.xtag_ct = shve_enc(sk.msk, new.bloom.bit_list())
    for p in flipped:
        new.xtag_ct[p] = shve_component(sk.msk, 1, p)
    return new, UpdateMessage(freq, entries, list(new.xtag_ct))


def server_apply_update(edb: EncryptedDatabase, msg: UpdateMessage) -> EncryptedDatabase:
    """New database version; ``edb`` itself is not modified."""
    if len(msg.xtag_bf) != edb.m:
        raise ProtocolError("encrypted Bloom filter length changed")
    tset = dict(edb.tset)
    for addr, val, alpha in msg.entries:
        if addr in tset:
            raise AddressCollision("TSet address already present; client and server state diverged")
        tset[addr] = (val, alpha)
    return EncryptedDatabase(edb.m, edb.k, tset, list(msg.xtag_bf), msg.freq_set, edb.version + 1)


# -- search ---------------------------------------------------------------------

def normalize_query(keywords: Iterable[bytes]) -> list[bytes]:
    q = list(dict.fromkeys(keywords))
    if not q:
        raise ValueError("query must contain at least one keyword")
    return q


def client_search_round1(sk: SecretKeyBundle, r: int, Q: Sequence[bytes]) -> list[tuple[int, bytes]]:
    return lfka.token_gen(Q, sk.k_lfka, r)


@dataclass
class Round2Request:
    query: list[bytes]  # s-term first
    s_count: int
    saddrs: list[bytes]
    xtokens: list[list[bytes]]

    @property
    def s_term(self) -> bytes:
        return self.query[0]


def client_search_round2(sk: SecretKeyBundle, r: int, delta, Q: Sequence[bytes]) -> Round2Request:
    w_s, cnt = lfka.compare(delta, sk.k_lfka, r, Q)
    q = [w_s] + [w for w in Q if w != w_s]
    if cnt == 0:
        return Round2Request(q, 0, [], [])
    saddrs, xtokens = [], []
    for j in range(1, cnt + 1):
        saddrs.append(tset_addr(sk, w_s, j))
        row = [xtoken(sk, w_s, j, w) for w in q[1:]]
        _sysrand.shuffle(row)
        xtokens.append(row)
    return Round2Request(q, cnt, saddrs, xtokens)


def server_search_round2(edb: EncryptedDatabase, saddrs: Sequence[bytes],
                         xtokens: Sequence[Sequence[bytes]]) -> tuple[list[list[int]], list[bytes]]:
    """Return per-candidate Bloom position sets and the svals kept for round 3."""
    if len(xtokens) != len(saddrs):
        raise ProtocolError("one xtoken tuple is required per address")
    if len({len(row) for row in xtokens}) > 1:
        raise ProtocolError("xtoken tuples differ in length")
    vbfind, svals = [], []
    for addr, row in zip(saddrs, xtokens):
        try:
            sval, alpha = edb.tset[addr]
        except KeyError:
            raise UnknownAddress("search address not in TSet") from None
        svals.append(sval)
        pos: set[int] = set()
        for tok in row:
            pos.update(positions(group_exp(tok, alpha), edb.m, edb.k))
        vbfind.append(sorted(pos))
    return vbfind, svals


def client_search_round3(sk: SecretKeyBundle, vbfind: Sequence[Sequence[int]], m: int) -> list[ShveKey]:
    return [shve_keygen(sk.msk, PredicateVector.ones_at(m, pos)) for pos in vbfind]


def server_search_round3(edb: EncryptedDatabase, keys: Sequence[ShveKey],
                         svals: Sequence[bytes]) -> list[tuple[int, bytes]]:
    if len(keys) != len(svals):
        raise ProtocolError("one SHVE key is required per candidate")
    return [(j, sval) for j, (key, sval) in enumerate(zip(keys, svals), start=1)
            if shve_query(key, edb.xtag_bf)]


def server_search_all(svals: Sequence[bytes]) -> list[tuple[int, bytes]]:
    """Single-keyword queries: every candidate is a result."""
    return list(enumerate(svals, start=1))


def client_finalize(sk: SecretKeyBundle, w1: bytes, srlist: Iterable[tuple[int, bytes]]) -> set[bytes]:
    ids: set[bytes] = set()
    for j, sval in sorted(srlist):
        doc_id, op = unpack_id_op(xor_bytes(sval, tset_mask(sk, w1, j)))
        if op is Op.ADD:
            ids.add(doc_id)
        else:
            ids.discard(doc_id)
    return ids


def search_local(sk: SecretKeyBundle, r: int, edb: EncryptedDatabase, keywords: Iterable[bytes]) -> set[bytes]:
    """All three rounds against an in-memory database (no transport)."""
    Q = normalize_query(keywords)
    delta = lfka.freq_find(client_search_round1(sk, r, Q), edb.freq_set)
    req = client_search_round2(sk, r, delta, Q)
    if req.s_count == 0:
        return set()
    vbfind, svals = server_search_round2(edb, req.saddrs, req.xtokens)
    if len(req.query) == 1:
        srlist = server_search_all(svals)
    else:
        srlist = server_search_round3(edb, client_search_round3(sk, vbfind, edb.m), svals)
    return client_finalize(sk, req.s_term, srlist)


# -- document-level updates -------------------------------------------------------

class LedgerError(ValueError):
    pass


class DocumentLedger:
    """Tracks live documents so deletions expand to every added keyword.

    Identifiers are never reused: once deleted, an id cannot be added again.
    Re-adding would revive stale cross-tags from the first incarnation and
    make conjunctive answers wrong.
    """

    def __init__(self, live: dict[bytes, list[bytes]] | None = None, retired: Iterable[bytes] = ()):
        self.live = {k: list(v) for k, v in (live or {}).items()}
        self.retired = set(retired)

    def expand(self, op: Op, doc_id: bytes, keywords: Sequence[bytes] = ()) -> list[UpdateTriple]:
        op = Op(op)
        if op is Op.ADD:
            if doc_id in self.live or doc_id in self.retired:
                raise LedgerError(f"document id {doc_id!r} was already used")
            kws = list(dict.fromkeys(keywords))
            if not kws:
                raise LedgerError("an added document needs at least one keyword")
            self.live[doc_id] = kws
        else:
            if doc_id not in self.live:
                raise LedgerError(f"cannot delete unknown document {doc_id!r}")
            kws = self.live.pop(doc_id)
            self.retired.add(doc_id)
        return [UpdateTriple(op, doc_id, w) for w in kws]

    def to_json(self) -> dict:
        return {
            "live": {k.hex(): [w.hex() for w in v] for k, v in self.live.items()},
            "retired": sorted(k.hex() for k in self.retired),
        }

    @classmethod
    def from_json(cls, d: dict) -> "DocumentLedger":
        return cls(
            {bytes.fromhex(k): [bytes.fromhex(w) for w in v] for k, v in d.get("live", {}).items()},
            (bytes.fromhex(k) for k in d.get("retired", [])),
        )

