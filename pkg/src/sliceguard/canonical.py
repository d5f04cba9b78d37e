"""Canonical JSON: sorted keys, no insignificant whitespace, UTF-8."""

from __future__ import annotations

import json
from typing import Any


def canonical_json(obj: Any) -> bytes:
    return json.dumps(
        obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False, allow_nan=False
    ).encode("utf-8")


def canonicalize_bytes(raw: bytes | str) -> bytes:
    """Re-encode a JSON document in canonical form.

    Raises ``ValueError`` if ``raw`` is not valid JSON.
    """
    if isinstance(raw, bytes):
        raw = raw.decode("utf-8")
    return canonical_json(json.loads(raw))
