"""EDB snapshot files.

Layout (integers little-endian)::

    b"ESPS" | version (1) | m (8) | k (2) | edb version (8)
    | frequency set (8-byte r, 4-byte count, 64-byte entries sorted by prefix)
    | tset count (8) | count x (addr 32 | val 32 | alpha 32), sorted by addr
    | xtag_bf (m x 32)
    | SHA-256 of everything above (32)

Writes go to a temporary file in the same directory, then ``os.replace``.
"""

from __future__ import annotations

import hashlib
import os
import struct
import tempfile
from pathlib import Path

from ..core import EncryptedDatabase
from ..lfka import EncryptedFreqSet, LfkaError
from ..prims import CryptoError, scalar_from_bytes, scalar_to_bytes

SNAPSHOT_MAGIC = b"ESPS"
SNAPSHOT_VERSION = 1
_HEAD = struct.Struct("<4sBQHQ")


class SnapshotError(ValueError):
    pass


def dump_snapshot(edb: EncryptedDatabase) -> bytes:
    parts = [
        _HEAD.pack(SNAPSHOT_MAGIC, SNAPSHOT_VERSION, edb.m, edb.k, edb.version),
        edb.freq_set.to_bytes(),
        struct.pack("<Q", len(edb.tset)),
    ]
    for addr in sorted(edb.tset):
        val, alpha = edb.tset[addr]
        parts += (addr, val, scalar_to_bytes(alpha))
    parts.extend(edb.xtag_bf)
    body = b"".join(parts)
    return body + hashlib.sha256(body).digest()


def load_snapshot(data: bytes) -> EncryptedDatabase:
    if len(data) < _HEAD.size + 32:
        raise SnapshotError("snapshot truncated")
    body, digest = data[:-32], data[-32:]
    magic, version, m, k, edb_version = _HEAD.unpack_from(body)
    if magic != SNAPSHOT_MAGIC:
        raise SnapshotError("not a snapshot file")
    if version != SNAPSHOT_VERSION:
        raise SnapshotError(f"unsupported snapshot version {version}")
    if hashlib.sha256(body).digest() != digest:
        raise SnapshotError("snapshot checksum mismatch")
    off = _HEAD.size
    try:
        freq, off = EncryptedFreqSet.read_from(body, off)
    except LfkaError as exc:
        raise SnapshotError(str(exc)) from exc
    if off + 8 > len(body):
        raise SnapshotError("snapshot truncated")
    (n,) = struct.unpack_from("<Q", body, off)
    off += 8
    expected = off + 96 * n + 32 * m
    if expected != len(body):
        raise SnapshotError("snapshot length does not match its header")
    tset = {}
    try:
        for i in range(off, off + 96 * n, 96):
            tset[body[i:i + 32]] = (body[i + 32:i + 64], scalar_from_bytes(body[i + 64:i + 96]))
    except CryptoError as exc:
        raise SnapshotError(str(exc)) from exc
    if len(tset) != n:
        raise SnapshotError("duplicate address in snapshot")
    off += 96 * n
    bf = [body[i:i + 32] for i in range(off, off + 32 * m, 32)]
    return EncryptedDatabase(m, k, tset, bf, freq, edb_version)


def persist(edb: EncryptedDatabase, path: str | os.PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=path.name + ".", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(dump_snapshot(edb))
            f.flush()
            os.fsync(f.fileno())
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except FileNotFoundError:
            pass
        raise
    return path


def restore(path: str | os.PathLike) -> EncryptedDatabase:
    return load_snapshot(Path(path).read_bytes())
