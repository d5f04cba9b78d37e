import hashlib
import random

import base58  # independent reference encoder, test-only
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sliceguard.content_store import (
    BASE58_ALPHABET,
    Cid,
    ContentStore,
    b58decode,
    b58encode,
    cid_of,
    is_cid_text,
)
from sliceguard.errors import CapacityError, NotFound, ValidationError

# sha256("") via coreutils sha256sum, base58btc via the `base58` package.
EMPTY_CID = "QmdfTbBqBPQ7VNxZEYEj14VmRuZBkqFbiwReogJgS1zR1n"
LOGGED_HASH_WITNESS = "QmRuCqSaDTmvWQWhaY3RK5X8oxSJJpvzECZtk35gJfTzN6e"


def reference_cid(content: bytes) -> str:
    return base58.b58encode(b"\x12\x20" + hashlib.sha256(content).digest()).decode()


def test_empty_content_golden():
    assert cid_of(b"").text == EMPTY_CID
    assert cid_of(b"").multihash == b"\x12\x20" + bytes.fromhex(
        "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
    )


def test_deterministic():
    assert cid_of(b"abc") == cid_of(b"abc")


def test_one_digit_change_changes_cid():
    a = b'{"quantum_ms":100,"slice_id":"0x00"}'
    b = b'{"quantum_ms":200,"slice_id":"0x00"}'
    assert cid_of(a) != cid_of(b)


def test_logged_hash_shares_prefix_and_alphabet():
    # The published log line carries one stray character (47 chars), so it
    # only witnesses the textual shape, not a decodable multihash.
    assert LOGGED_HASH_WITNESS.startswith("Qm")
    assert set(LOGGED_HASH_WITNESS) <= set(BASE58_ALPHABET)
    assert not is_cid_text(LOGGED_HASH_WITNESS)


@pytest.mark.parametrize(
    "text",
    ["not-base58!", "", "Qm", EMPTY_CID[:-1], EMPTY_CID + "1", "Qm0" + EMPTY_CID[3:], "zb" + EMPTY_CID[2:]],
)
def test_parse_rejects_malformed(text):
    assert not is_cid_text(text)
    with pytest.raises(ValidationError):
        Cid.parse(text)


@settings(max_examples=300)
@given(st.binary(max_size=512))
def test_matches_reference_and_format(content):
    cid = cid_of(content)
    assert cid.text == reference_cid(content)
    assert len(cid.text) == 46
    assert cid.text.startswith("Qm")
    assert set(cid.text) <= set(BASE58_ALPHABET)
    assert Cid.parse(cid.text) == cid


@given(st.binary(min_size=34, max_size=34))
def test_base58_round_trip(raw):
    assert b58decode(b58encode(raw)) == raw
    assert b58encode(raw) == base58.b58encode(raw).decode()


@pytest.mark.parametrize("raw", [b"", b"\0", b"\0\0\x01", b"\x00\xff"])
def test_base58_leading_zeros(raw):
    assert b58encode(raw) == base58.b58encode(raw).decode()
    assert b58decode(b58encode(raw)) == raw


def test_add_get_round_trip():
    store = ContentStore()
    cid = store.add(b"hello", pin=True)
    assert cid == cid_of(b"hello")
    assert store.get(cid) == b"hello"
    assert store.get(cid.text) == b"hello"


def test_add_is_idempotent_and_ors_pin():
    store = ContentStore()
    c1 = store.add(b"x", pin=False)
    c2 = store.add(b"x", pin=True)
    assert c1 == c2
    assert store.stat(c1).pinned
    store.add(b"x", pin=False)
    assert store.stat(c1).pinned
    assert len(store) == 1


def test_thousand_distinct_blobs():
    rng = random.Random(7)
    blobs = {rng.randbytes(rng.randrange(0, 64)) for _ in range(1200)}
    blobs = sorted(blobs)[:1000]
    store = ContentStore()
    cids = [store.add(b).text for b in blobs]
    assert len(set(cids)) == 1000
    assert len(store) == 1000


def test_get_unknown():
    with pytest.raises(NotFound):
        ContentStore().get(cid_of(b"never"))


def test_gc_contract():
    store = ContentStore()
    kept = store.add(b"keep", pin=True)
    assert store.gc() == 0
    gone = store.add(b"drop")
    assert store.gc() == 1
    with pytest.raises(NotFound):
        store.get(gone)
    assert store.get(kept) == b"keep"
    store.unpin(kept)
    assert store.gc() == 1
    with pytest.raises(NotFound):
        store.get(kept)


@pytest.mark.parametrize("n,m", [(0, 0), (3, 0), (0, 4), (5, 7)])
def test_gc_removes_exactly_unpinned(n, m):
    store = ContentStore()
    pinned = {store.add(f"p{i}".encode(), pin=True).text for i in range(n)}
    loose = {store.add(f"u{i}".encode()).text for i in range(m)}
    before = set(store.cids())
    assert store.gc() == m
    after = set(store.cids())
    assert before - after == loose
    assert after == pinned


def test_pin_unknown_raises():
    store = ContentStore()
    with pytest.raises(NotFound):
        store.pin(cid_of(b"missing"))
    with pytest.raises(NotFound):
        store.unpin(cid_of(b"missing"))


def test_capacity_limit():
    store = ContentStore(capacity_bytes=10)
    store.add(b"12345")
    with pytest.raises(CapacityError):
        store.add(b"123456")
    store.add(b"12345")  # already stored, no extra space needed
    store.add(b"abcde")


ops = st.lists(
    st.tuples(st.sampled_from(["add", "addpin", "pin", "unpin", "gc"]), st.integers(0, 5)),
    max_size=40,
)


@given(ops)
def test_gc_safety_property(seq):
    store = ContentStore()
    for op, k in seq:
        blob = bytes([k])
        if op == "add":
            store.add(blob)
        elif op == "addpin":
            store.add(blob, pin=True)
        elif op in ("pin", "unpin"):
            if cid_of(blob) in store:
                getattr(store, op)(cid_of(blob))
        else:
            before = store.pinned()
            store.gc()
            assert store.pinned() == before
        assert store.pinned() <= set(store.cids())


def test_file_backed_persistence(tmp_path):
    store = ContentStore(tmp_path)
    a = store.add(b"alpha", pin=True)
    b = store.add(b"beta")
    assert (tmp_path / a.text).read_bytes() == b"alpha"
    reopened = ContentStore(tmp_path)
    assert reopened.get(a) == b"alpha"
    assert reopened.stat(a).pinned
    assert not reopened.stat(b).pinned
    assert reopened.gc() == 1
    assert not (tmp_path / b.text).exists()
    assert ContentStore(tmp_path).cids() == [a.text]
