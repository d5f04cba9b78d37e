"""Integrity verification for network-slice configurations.

A slicing controller's slice documents are snapshotted into a
content-addressed store through an oracle request/fulfill round trip on a
simulated ledger. A cron-driven auditor later re-hashes the live document
and compares it against the hash anchored in the validator contract.
"""

from sliceguard.canonical import canonical_json, canonicalize_bytes
from sliceguard.content_store import Cid, ContentStore, cid_of
from sliceguard.errors import (
    AdapterError,
    CapacityError,
    Conflict,
    NotFound,
    SliceguardError,
    Unavailable,
    ValidationError,
)

__version__ = "0.1.0"

__all__ = [
    "AdapterError",
    "CapacityError",
    "Cid",
    "Conflict",
    "ContentStore",
    "NotFound",
    "SliceguardError",
    "Unavailable",
    "ValidationError",
    "canonical_json",
    "canonicalize_bytes",
    "cid_of",
]
