"""Fixed-capacity Bloom filter over 32-byte group-element encodings.

Positions come from double hashing: ``(h1 + i*h2) mod m`` for ``i < k``,
with ``h1``/``h2`` the first and second 8-byte big-endian words of
SHA-256(x) and ``h2`` forced odd.
"""

from __future__ import annotations

import hashlib
import math
import struct
from dataclasses import dataclass, field


class BloomParamError(ValueError):
    pass


class CapacityExceeded(RuntimeError):
    pass


def derive_params(capacity: int, target_fp: float) -> tuple[int, int]:
    """Return ``(m, k)`` for ``capacity`` insertions at false-positive rate ``target_fp``.

    ``k = round(log2(1/P))`` and ``m = ceil(1.44 * log2(1/P) * N)``.
    """
    if not isinstance(capacity, int) or capacity < 1:
        raise BloomParamError("capacity must be a positive integer")
    if not 0.0 < target_fp < 1.0:
        raise BloomParamError("target false-positive rate must lie in (0, 1)")
    bits = math.log2(1.0 / target_fp)
    k = max(1, round(bits))
    m = math.ceil(1.44 * bits * capacity)
    return m, k


def positions(x: bytes, m: int, k: int) -> list[int]:
    d = hashlib.sha256(x).digest()
    h1 = int.from_bytes(d[0:8], "big")
    h2 = int.from_bytes(d[8:16], "big") | 1
    return [(h1 + i * h2) % m for i in range(k)]


_HEADER = struct.Struct("<QHQ")


@dataclass
class BloomFilter:
    m: int
    k: int
    capacity: int | None = None
    n_inserted: int = 0
    bits: bytearray = field(default=None, repr=False)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        if self.m <= 0 or self.k <= 0:
            raise BloomParamError("m and k must be positive")
        if self.bits is None:
            self.bits = bytearray((self.m + 7) // 8)
        elif len(self.bits) != (self.m + 7) // 8:
            raise BloomParamError("bit array length does not match m")

    @classmethod
    def for_capacity(cls, capacity: int, target_fp: float) -> "BloomFilter":
        m, k = derive_params(capacity, target_fp)
        return cls(m=m, k=k, capacity=capacity)

    def get(self, i: int) -> int:
        return (self.bits[i >> 3] >> (i & 7)) & 1

    def positions(self, x: bytes) -> list[int]:
        return positions(x, self.m, self.k)

    def insert(self, x: bytes) -> list[int]:
        """Set the k bits for ``x``; returns the positions that flipped 0 -> 1."""
        if self.capacity is not None and self.n_inserted >= self.capacity:
            raise CapacityExceeded(
                f"Bloom filter capacity {self.capacity} reached; false-positive bound no longer holds"
            )
        flipped = []
        for p in self.positions(x):
            byte, mask = p >> 3, 1 << (p & 7)
            if not self.bits[byte] & mask:
                self.bits[byte] |= mask
                flipped.append(p)
        self.n_inserted += 1
        return flipped

    def __contains__(self, x: bytes) -> bool:
        return all(self.get(p) for p in self.positions(x))

    contains = __contains__

    def popcount(self) -> int:
        return sum(bin(b).count("1") for b in self.bits)

    def fill_ratio(self) -> float:
        return self.popcount() / self.m

    def bit_list(self) -> list[int]:
        bits = self.bits
        return [(bits[i >> 3] >> (i & 7)) & 1 for i in range(self.m)]

    def copy(self) -> "BloomFilter":
        return BloomFilter(self.m, self.k, self.capacity, self.n_inserted, bytearray(self.bits))

    def to_bytes(self) -> bytes:
        return _HEADER.pack(self.m, self.k, self.n_inserted) + bytes(self.bits)

    @classmethod
    def from_bytes(cls, data: bytes, capacity: int | None = None) -> "BloomFilter":
        if len(data) < _HEADER.size:
            raise BloomParamError("truncated Bloom filter encoding")
        m, k, n = _HEADER.unpack_from(data)
        body = data[_HEADER.size:]
        if m == 0 or len(body) != (m + 7) // 8:
            raise BloomParamError("Bloom filter body length does not match m")
        return cls(m=m, k=k, capacity=capacity, n_inserted=n, bits=bytearray(body))
