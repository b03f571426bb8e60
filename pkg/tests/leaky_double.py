"""Instrumented servers that leak more than the scheme allows.

``BooleanLeakEngine`` is handed the owner's plaintext Bloom filter and
appends one membership byte per (candidate, x-term) to its Round-2
response. ``PerTermPositionsEngine`` keeps a well-formed Round-2 schema but
returns one position set per (candidate, x-term) instead of their union.
"""

from espcks import core
from espcks.bloom import BloomFilter, positions
from espcks.prims import group_exp
from espcks.service import wire
from espcks.service.server import ServerEngine


class BooleanLeakEngine(ServerEngine):
    def __init__(self, bloom: BloomFilter, **kw):
        super().__init__(**kw)
        self.bloom = bloom

    def _search_r2(self, payload: bytes) -> bytes:
        out = super()._search_r2(payload)
        sid, saddrs, xtokens = wire.decode_r2(payload)
        edb = self.edb
        flags = bytearray()
        for addr, row in zip(saddrs, xtokens):
            _, alpha = edb.tset[addr]
            for tok in row:
                tag = group_exp(tok, alpha)
                flags.append(all(self.bloom.get(p) for p in positions(tag, edb.m, edb.k)))
        return out + bytes(flags)

    _handlers = {**ServerEngine._handlers, wire.SEARCH_R2: _search_r2}


class PerTermPositionsEngine(ServerEngine):
    def _search_r2(self, payload: bytes) -> bytes:
        sid, saddrs, xtokens = wire.decode_r2(payload)
        if not xtokens or not xtokens[0]:
            return super()._search_r2(payload)
        sess = self._session(sid)
        vbfind = []
        svals = []
        for addr, row in zip(saddrs, xtokens):
            sval, alpha = sess.edb.tset[addr]
            svals.append(sval)
            for tok in row:
                vbfind.append(sorted(set(positions(group_exp(tok, alpha), sess.edb.m, sess.edb.k))))
        sess.svals = svals
        return wire.encode_r2_positions(vbfind)

    _handlers = {**ServerEngine._handlers, wire.SEARCH_R2: _search_r2}


def unmasked_update(sk, st, triples):
    """An update whose TSet values carry (id, op) without the PRF mask."""
    new, msg = core.client_update(sk, st, triples)
    entries = [(a, core.pack_id_op(t.id, t.op), alpha) for (a, _, alpha), t in zip(msg.entries, triples)]
    return new, core.UpdateMessage(msg.freq_set, entries, msg.xtag_bf)
