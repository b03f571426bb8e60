"""Least-frequent-keyword acquisition.

Each keyword's update count is published as a 64-byte ``ecnt``:

    high 32 bytes = high 32 bytes of F1(K, r || w)
    low 32 bytes  = (low half of F1 + F2'(K, w || r) + cnt) mod 2^256

where ``F2'`` is F2 truncated to 224 bits and ``cnt < 2^32``, so the sum
never carries into the matching prefix. A searcher holding ``K`` and ``r``
sends ``F1(K, r || w)``; the server matches on the 32-byte prefix.
"""

from __future__ import annotations

import struct
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field

from .prims import encode_counter, prf_F1, prf_F2, random_key

CNT_LIMIT = 1 << 32
_MOD = 1 << 256


class LfkaError(ValueError):
    pass


class PrefixCollision(LfkaError):
    """Two keywords share an ecnt prefix under this r; retry with a fresh r."""


class CounterCorruption(LfkaError):
    pass


@dataclass
class EncryptedFreqSet:
    r: int
    entries: dict[bytes, bytes] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.entries)

    def to_bytes(self) -> bytes:
        parts = [struct.pack("<QI", self.r, len(self.entries))]
        parts.extend(self.entries[p] for p in sorted(self.entries))
        return b"".join(parts)

    @classmethod
    def read_from(cls, buf: bytes, off: int = 0) -> tuple["EncryptedFreqSet", int]:
        try:
            r, n = struct.unpack_from("<QI", buf, off)
        except struct.error as exc:
            raise LfkaError("truncated frequency set") from exc
        off += 12
        end = off + 64 * n
        if end > len(buf):
            raise LfkaError("truncated frequency set")
        entries = {}
        for i in range(off, end, 64):
            ecnt = bytes(buf[i:i + 64])
            entries[ecnt[:32]] = ecnt
        if len(entries) != n:
            raise LfkaError("duplicate prefix in frequency set")
        return cls(r, entries), end


def lfka_keygen() -> bytes:
    return random_key()


def _f1(K: bytes, r: int, w: bytes) -> bytes:
    return prf_F1(K, encode_counter(r) + w)


def _f2_trunc(K: bytes, r: int, w: bytes) -> int:
    return int.from_bytes(prf_F2(K, w + encode_counter(r)), "big") >> 32


def encrypt_count(K: bytes, r: int, w: bytes, cnt: int) -> bytes:
    if not 0 <= cnt < CNT_LIMIT:
        raise LfkaError(f"count {cnt} outside [0, 2^32)")
    f1 = _f1(K, r, w)
    low = (int.from_bytes(f1[32:], "big") + _f2_trunc(K, r, w) + cnt) % _MOD
    return f1[:32] + low.to_bytes(32, "big")


def decrypt_count(K: bytes, r: int, w: bytes, ecnt: bytes) -> int:
    f1 = _f1(K, r, w)
    if ecnt[:32] != f1[:32]:
        raise CounterCorruption("ecnt prefix does not match the keyword's token")
    cnt = (int.from_bytes(ecnt[32:], "big") - int.from_bytes(f1[32:], "big") - _f2_trunc(K, r, w)) % _MOD
    if cnt >= CNT_LIMIT:
        raise CounterCorruption(f"decrypted count {cnt} is out of range")
    return cnt


def freq_setup(gamma: Mapping[bytes, int], K: bytes, r: int) -> EncryptedFreqSet:
    entries: dict[bytes, bytes] = {}
    for w, cnt in gamma.items():
        ecnt = encrypt_count(K, r, w, cnt)
        if ecnt[:32] in entries:
            raise PrefixCollision("frequency prefix collision")
        entries[ecnt[:32]] = ecnt
    return EncryptedFreqSet(r, entries)


def token_gen(Q: Sequence[bytes], K: bytes, r: int) -> list[tuple[int, bytes]]:
    if not Q:
        raise LfkaError("query must contain at least one keyword")
    return [(i, _f1(K, r, w)) for i, w in enumerate(Q)]


def freq_find(T: Sequence[tuple[int, bytes]], C: EncryptedFreqSet) -> list[tuple[bytes, bytes | None]]:
    """Server side: pair each token with its ecnt, or None when unindexed."""
    return [(tok, C.entries.get(tok[:32])) for _, tok in T]


def compare(delta: Sequence[tuple[bytes, bytes | None]], K: bytes, r: int, Q: Sequence[bytes]) -> tuple[bytes, int]:
    """Least frequent keyword of ``Q`` and its count.

    Absent keywords count as 0 and therefore win; ties go to the earliest
    keyword in ``Q``.
    """
    if len(delta) != len(Q):
        raise LfkaError("response does not cover every query keyword")
    best: tuple[bytes, int] | None = None
    for w, (_, ecnt) in zip(Q, delta):
        cnt = 0 if ecnt is None else decrypt_count(K, r, w, ecnt)
        if best is None or cnt < best[1]:
            best = (w, cnt)
    assert best is not None
    return best
