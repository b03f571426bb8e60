"""Symmetric-key hidden vector encryption over the alphabet {0, 1}.

A ciphertext is one PRF output per position, ``c_l = F(msk, x_l || l)``.
A key for a wildcard pattern ``v`` hides a fresh 33-byte ``K0``: the XOR of
the PRF outputs at the non-wildcard positions masks the first 32 bytes
(``d0``) and ``d1`` encrypts the 33-byte zero string under a key derived
from those 32 bytes. ``K0``'s last byte rides in ``d1`` as associated data.
Query recombines ``d0`` with the ciphertext components at ``S`` and
succeeds iff ``d1`` decrypts to zeros.
"""

from __future__ import annotations

import os
import struct
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass

from .prims import DecryptionError, prf_F, random_key, sym_dec, sym_enc

PAYLOAD_BYTES = 33  # lambda + log2(lambda) bits for lambda = 256
K0_BYTES = 33
_ZERO_PAYLOAD = bytes(PAYLOAD_BYTES)
_D1_LABEL = b"shve-d1"


class ShveError(ValueError):
    pass


def _component_input(bit: int, pos: int) -> bytes:
    return bytes([bit]) + pos.to_bytes(8, "big")


def shve_setup() -> bytes:
    return random_key()


def shve_component(msk: bytes, bit: int, pos: int) -> bytes:
    return prf_F(msk, _component_input(bit, pos))


def shve_enc(msk: bytes, x: Sequence[int], m: int | None = None) -> list[bytes]:
    if m is not None and len(x) != m:
        raise ShveError(f"index vector has length {len(x)}, expected {m}")
    out = []
    for pos, bit in enumerate(x):
        if bit not in (0, 1):
            raise ShveError("index vector entries must be 0 or 1")
        out.append(prf_F(msk, _component_input(bit, pos)))
    return out


class PredicateVector:
    """Length-m pattern over {0, 1, *}; only the non-wildcard slots are stored."""

    __slots__ = ("m", "fixed")

    def __init__(self, m: int, fixed: Mapping[int, int] | None = None):
        self.m = m
        self.fixed = dict(fixed or {})
        for pos, bit in self.fixed.items():
            if not 0 <= pos < m:
                raise ShveError(f"position {pos} outside [0, {m})")
            if bit not in (0, 1):
                raise ShveError("predicate entries must be 0, 1 or wildcard")

    @classmethod
    def from_sequence(cls, v: Sequence[int | None]) -> "PredicateVector":
        """Dense form; ``None`` is the wildcard."""
        return cls(len(v), {i: b for i, b in enumerate(v) if b is not None})

    @classmethod
    def ones_at(cls, m: int, pos: Iterable[int]) -> "PredicateVector":
        return cls(m, {p: 1 for p in pos})

    def matches(self, x: Sequence[int]) -> bool:
        """Plaintext predicate evaluation."""
        return all(x[p] == b for p, b in self.fixed.items())


@dataclass(frozen=True)
class ShveKey:
    d0: bytes
    d1: bytes
    S: tuple[int, ...]

    def to_bytes(self) -> bytes:
        return b"".join(
            (
                struct.pack("<I", len(self.S)),
                b"".join(struct.pack("<I", p) for p in self.S),
                self.d0,
                struct.pack("<I", len(self.d1)),
                self.d1,
            )
        )

    @classmethod
    def read_from(cls, buf: bytes, off: int = 0) -> tuple["ShveKey", int]:
        """Parse one key at ``off``; returns the key and the new offset."""
        try:
            (n,) = struct.unpack_from("<I", buf, off)
            off += 4
            S = struct.unpack_from(f"<{n}I", buf, off)
            off += 4 * n
            d0 = buf[off:off + 32]
            off += 32
            (ln,) = struct.unpack_from("<I", buf, off)
            off += 4
            d1 = buf[off:off + ln]
            off += ln
        except struct.error as exc:
            raise ShveError("truncated SHVE key") from exc
        if len(d0) != 32 or len(d1) != ln:
            raise ShveError("truncated SHVE key")
        if any(b <= a for a, b in zip(S, S[1:])):
            raise ShveError("key positions must be strictly increasing")
        return cls(bytes(d0), bytes(d1), tuple(S)), off


def _xor_components(parts: Iterable[bytes]) -> int:
    acc = 0
    for p in parts:
        acc ^= int.from_bytes(p, "big")
    return acc


def shve_keygen(msk: bytes, v: PredicateVector) -> ShveKey:
    S = tuple(sorted(v.fixed))
    k0 = os.urandom(K0_BYTES)
    agg = _xor_components(prf_F(msk, _component_input(v.fixed[p], p)) for p in S)
    d0 = (agg ^ int.from_bytes(k0[:32], "big")).to_bytes(32, "big")
    tail = k0[32:]
    d1 = tail + sym_enc(prf_F(k0[:32], _D1_LABEL), _ZERO_PAYLOAD, aad=tail)
    return ShveKey(d0=d0, d1=d1, S=S)


def shve_query(key: ShveKey, ct: Sequence[bytes]) -> bool:
    """True for the payload "True", False for the failure symbol."""
    m = len(ct)
    if any(p >= m for p in key.S):
        raise ShveError("key position outside the ciphertext")
    k0 = (_xor_components(ct[p] for p in key.S) ^ int.from_bytes(key.d0, "big")).to_bytes(32, "big")
    if len(key.d1) < 1:
        return False
    tail, body = key.d1[:1], key.d1[1:]
    try:
        mu = sym_dec(prf_F(k0, _D1_LABEL), body, aad=tail)
    except DecryptionError:
        return False
    return mu == _ZERO_PAYLOAD
