import hashlib
import os
import struct

import mpmath
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from espcks.bloom import BloomFilter, BloomParamError, CapacityExceeded, derive_params, positions


def params_oracle(n: int, p: float) -> tuple[int, int]:
    """Sizing rule evaluated in 50-digit arithmetic."""
    mpmath.mp.dps = 50
    bits = mpmath.log(1 / mpmath.mpf(p), 2)
    return int(mpmath.ceil(mpmath.mpf("1.44") * bits * n)), int(mpmath.nint(bits))


def positions_oracle(x: bytes, m: int, k: int) -> list[int]:
    h1, h2 = struct.unpack(">QQ", hashlib.sha256(x).digest()[:16])
    h2 |= 1
    out, cur = [], h1 % m
    for _ in range(k):
        out.append(cur)
        cur = (cur + h2) % m
    return out


def test_params_n1000_p1e6():
    assert derive_params(1000, 1e-6) == params_oracle(1000, 1e-6) == (28702, 20)


def test_params_small_cases():
    assert derive_params(1, 0.5) == (2, 1)
    assert derive_params(10_000, 1e-6)[1] == 20


@pytest.mark.parametrize("n, p", [(1, 0.1), (37, 1e-3), (5000, 1e-6), (123_457, 1e-9)])
def test_params_match_oracle(n, p):
    assert derive_params(n, p) == params_oracle(n, p)


@pytest.mark.parametrize("n, p", [(0, 0.1), (-3, 0.1), (10, 0.0), (10, 1.0), (10, 2.0)])
def test_bad_params_rejected(n, p):
    with pytest.raises(BloomParamError):
        derive_params(n, p)


@settings(max_examples=200)
@given(st.binary(max_size=64), st.integers(1, 10**7), st.integers(1, 30))
def test_positions_match_second_implementation(x, m, k):
    assert positions(x, m, k) == positions_oracle(x, m, k)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.binary(min_size=1, max_size=40), min_size=1, max_size=300, unique=True))
def test_no_false_negatives(items):
    bf = BloomFilter.for_capacity(len(items), 1e-4)
    for x in items:
        bf.insert(x)
    assert all(x in bf for x in items)


def test_false_positive_rate_near_target():
    bf = BloomFilter.for_capacity(1000, 1e-3)
    for i in range(1000):
        bf.insert(b"member-%d" % i)
    trials = 100_000
    fp = sum(b"other-%d" % i in bf for i in range(trials))
    assert fp / trials <= 2e-3


def test_insert_reports_flipped_positions():
    bf = BloomFilter(m=64, k=4)
    first = bf.insert(b"a")
    assert sorted(first) == sorted(set(bf.positions(b"a")))
    assert bf.insert(b"a") == []
    assert bf.popcount() == len(first)


def test_capacity_exceeded():
    bf = BloomFilter.for_capacity(2, 0.01)
    bf.insert(b"a")
    bf.insert(b"b")
    with pytest.raises(CapacityExceeded):
        bf.insert(b"c")


def test_serialization_round_trip():
    bf = BloomFilter.for_capacity(500, 1e-6)
    for _ in range(200):
        bf.insert(os.urandom(16))
    back = BloomFilter.from_bytes(bf.to_bytes(), capacity=500)
    assert back.bits == bf.bits and (back.m, back.k, back.n_inserted) == (bf.m, bf.k, bf.n_inserted)
    assert back.bit_list() == bf.bit_list()


def test_truncated_encoding_rejected():
    data = BloomFilter(m=100, k=3).to_bytes()
    for cut in (5, len(data) - 1):
        with pytest.raises(BloomParamError):
            BloomFilter.from_bytes(data[:cut])


def test_bit_order_is_little_endian_within_bytes():
    bf = BloomFilter(m=16, k=1)
    bf.bits[0] = 0b0000_0010
    assert bf.bit_list()[:8] == [0, 1, 0, 0, 0, 0, 0, 0]


def test_copy_is_independent():
    bf = BloomFilter(m=64, k=2)
    c = bf.copy()
    c.insert(b"x")
    assert bf.popcount() == 0
