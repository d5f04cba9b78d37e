"""
Content identifiers
===================

Hash a document, pin it, and see why whitespace does not matter once the
bytes are canonical.
"""
import json

from sliceguard import ContentStore, canonical_json, canonicalize_bytes, cid_of

# The empty input hashes to a well-known value.
print("empty:", cid_of(b""))

doc = {"tenant_id": "f7257cce-d05e-4f43-a0a6-f19236948f2f", "slice_id": "0x00", "quantum_ms": 100}
compact = canonical_json(doc)
pretty = json.dumps(doc, indent=4).encode()

# Raw bytes differ, so raw CIDs differ too.
print("raw compact:", cid_of(compact))
print("raw pretty: ", cid_of(pretty))

# After canonicalization both collapse to the same bytes.
assert canonicalize_bytes(pretty) == compact
print("canonical:  ", cid_of(canonicalize_bytes(pretty)))

# Pinned content survives garbage collection, unpinned content does not.
store = ContentStore()
kept = store.add(compact, pin=True)
store.add(b"scratch")
print("removed by gc:", store.gc(), "| still there:", kept in store)
