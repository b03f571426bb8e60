"""Conjunctive dynamic searchable encryption with an encrypted Bloom filter and SHVE matching."""

from .core import (
    DocumentLedger,
    EncryptedDatabase,
    Op,
    SecretKeyBundle,
    UpdateTriple,
    client_update,
    search_local,
    server_apply_update,
    setup,
)
from .oracle import PlaintextOracle, oracle_search

__all__ = [
    "DocumentLedger",
    "EncryptedDatabase",
    "Op",
    "PlaintextOracle",
    "SecretKeyBundle",
    "UpdateTriple",
    "client_update",
    "oracle_search",
    "search_local",
    "server_apply_update",
    "setup",
]
__version__ = "0.1.0"
