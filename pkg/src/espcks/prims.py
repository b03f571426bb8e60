"""Keyed primitives shared by every layer of the scheme.

PRFs are HMAC-SHA256 (32-byte outputs) and HMAC-SHA512 (64-byte outputs),
each with a one-byte family tag prepended to the input so that the four
families never collide on the same raw input.

The group is ristretto255 (prime order ``GROUP_ORDER``), accessed through
libsodium. Scalars are plain Python ints in ``[1, GROUP_ORDER - 1]``; group
elements are their canonical 32-byte encodings.

Sym.Enc is ChaCha20-Poly1305 with an all-zero nonce. Every key handed to
``sym_enc`` is single-use, which is what makes the fixed nonce safe.
"""

from __future__ import annotations

import hashlib
import hmac
import os

import pysodium
from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives.ciphers.aead import ChaCha20Poly1305

LAMBDA_BYTES = 32
KEY_BYTES = 32

# ristretto255 group order, 2^252 + 27742317777372353535851937790883648493
GROUP_ORDER = (1 << 252) + 27742317777372353535851937790883648493

TAG_F = b"\x01"
TAG_F1 = b"\x02"
TAG_F2 = b"\x03"
TAG_FP = b"\x04"

FP_MAX_RETRIES = 255

_ZERO_NONCE = bytes(12)

GENERATOR: bytes = pysodium.crypto_scalarmult_ristretto255_base(
    (1).to_bytes(32, "little")
)


class CryptoError(Exception):
    """Raised on invalid keys, encodings or scalars."""


class DecryptionError(CryptoError):
    """Sym.Dec failure (wrong key or malformed ciphertext)."""


def random_key() -> bytes:
    return os.urandom(KEY_BYTES)


def _check_key(key: bytes) -> None:
    if len(key) != KEY_BYTES:
        raise CryptoError(f"PRF key must be {KEY_BYTES} bytes, got {len(key)}")


def prf_F(key: bytes, data: bytes) -> bytes:
    """32-byte PRF used for TSet addresses/masks and SHVE components."""
    _check_key(key)
    return hmac.digest(key, TAG_F + data, "sha256")


def prf_F1(key: bytes, data: bytes) -> bytes:
    """64-byte PRF (frequency tokens)."""
    _check_key(key)
    return hmac.digest(key, TAG_F1 + data, "sha512")


def prf_F2(key: bytes, data: bytes) -> bytes:
    _check_key(key)
    return hmac.digest(key, TAG_F2 + data, "sha256")


def prf_Fp(key: bytes, data: bytes) -> int:
    """PRF into the nonzero scalars.

    A 64-byte HMAC-SHA512 output is read little-endian and reduced mod the
    group order. A zero result is re-derived with a one-byte retry counter
    appended to the input.
    """
    _check_key(key)
    msg = TAG_FP + data
    for retry in range(FP_MAX_RETRIES + 1):
        suffix = b"" if retry == 0 else bytes([retry])
        wide = hmac.digest(key, msg + suffix, "sha512")
        s = int.from_bytes(wide, "little") % GROUP_ORDER
        if s:
            return s
    raise CryptoError("prf_Fp produced zero on every retry")


# -- encodings ---------------------------------------------------------------

def encode_counter(n: int) -> bytes:
    return n.to_bytes(8, "big")


def keyword_input(w: bytes, counter: int, tag: int) -> bytes:
    """``w || 0x1F || 8-byte BE counter || tag byte``.

    The suffix has fixed width, so the encoding is injective even when the
    keyword itself contains 0x1F.
    """
    return w + b"\x1f" + encode_counter(counter) + bytes([tag])


def scalar_to_bytes(s: int) -> bytes:
    check_scalar(s)
    return s.to_bytes(32, "little")


def scalar_from_bytes(b: bytes) -> int:
    if len(b) != 32:
        raise CryptoError("scalar encoding must be 32 bytes")
    s = int.from_bytes(b, "little")
    if not 0 < s < GROUP_ORDER:
        raise CryptoError("scalar out of range or not reduced")
    return s


def check_scalar(s: int) -> None:
    if not 0 < s < GROUP_ORDER:
        raise CryptoError("scalar must lie in [1, p-1]")


# -- scalar field --------------------------------------------------------------

def scalar_mul(a: int, b: int) -> int:
    return (a * b) % GROUP_ORDER


def scalar_inv(a: int) -> int:
    if a % GROUP_ORDER == 0:
        raise CryptoError("zero has no inverse")
    return pow(a, -1, GROUP_ORDER)


def random_scalar() -> int:
    while True:
        s = int.from_bytes(os.urandom(64), "little") % GROUP_ORDER
        if s:
            return s


# -- group -------------------------------------------------------------------

def is_group_element(b: bytes) -> bool:
    if len(b) != 32:
        return False
    return bool(pysodium.crypto_core_ristretto255_is_valid_point(b))


def decode_element(b: bytes) -> bytes:
    """Validate a canonical encoding; returns it unchanged."""
    if not is_group_element(b):
        raise CryptoError("not a canonical ristretto255 encoding")
    return bytes(b)


def group_exp(base: bytes, e: int) -> bytes:
    check_scalar(e)
    try:
        return pysodium.crypto_scalarmult_ristretto255(e.to_bytes(32, "little"), base)
    except ValueError as exc:
        raise CryptoError("invalid group element") from exc


def g_exp(e: int) -> bytes:
    """``g^e`` for the fixed generator."""
    check_scalar(e)
    return pysodium.crypto_scalarmult_ristretto255_base(e.to_bytes(32, "little"))


# -- symmetric cipher ----------------------------------------------------------

def sym_enc(key: bytes, msg: bytes, aad: bytes = b"") -> bytes:
    _check_key(key)
    return ChaCha20Poly1305(key).encrypt(_ZERO_NONCE, msg, aad)


def sym_dec(key: bytes, ct: bytes, aad: bytes = b"") -> bytes:
    _check_key(key)
    if len(ct) < 16:
        raise DecryptionError("ciphertext shorter than the tag")
    try:
        return ChaCha20Poly1305(key).decrypt(_ZERO_NONCE, ct, aad)
    except InvalidTag as exc:
        raise DecryptionError("authentication failed") from exc


def xor_bytes(a: bytes, b: bytes) -> bytes:
    if len(a) != len(b):
        raise ValueError("xor operands differ in length")
    n = len(a)
    return (int.from_bytes(a, "big") ^ int.from_bytes(b, "big")).to_bytes(n, "big")


def sha256(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()
