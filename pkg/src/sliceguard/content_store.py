"""Local content-addressed store with CIDv0-style identifiers.

Identifiers are ``base58btc(0x12 || 0x20 || sha256(content))``: the sha2-256
multihash of the raw bytes. Unlike a real IPFS node the content is not
chunked into a UnixFS DAG, so a CID here is a plain content hash that can be
recomputed by anyone holding the bytes.
"""

from __future__ import annotations

import hashlib
import itertools
import logging
import os
import threading
from dataclasses import dataclass
from pathlib import Path

from sliceguard.errors import CapacityError, NotFound, ValidationError

logger = logging.getLogger(__name__)

BASE58_ALPHABET = "123456789ABCDEFGHJKLMNPQRSTUVWXYZabcdefghijkmnopqrstuvwxyz"
_B58_INDEX = {c: i for i, c in enumerate(BASE58_ALPHABET)}

SHA2_256 = 0x12
DIGEST_LEN = 0x20
MULTIHASH_LEN = 2 + DIGEST_LEN
CID_TEXT_LEN = 46


def b58encode(data: bytes) -> str:
    n = int.from_bytes(data, "big")
    out = []
    while n:
        n, rem = divmod(n, 58)
        out.append(BASE58_ALPHABET[rem])
    pad = len(data) - len(data.lstrip(b"\0"))
    return "1" * pad + "".join(reversed(out))


def b58decode(text: str) -> bytes:
    n = 0
    for ch in text:
        try:
            n = n * 58 + _B58_INDEX[ch]
        except KeyError:
            raise ValueError(f"invalid base58 character {ch!r}") from None
    pad = len(text) - len(text.lstrip("1"))
    body = n.to_bytes((n.bit_length() + 7) // 8, "big") if n else b""
    return b"\0" * pad + body


@dataclass(frozen=True)
class Cid:
    """A sha2-256 multihash and its base58btc text form."""

    text: str
    multihash: bytes

    @classmethod
    def from_multihash(cls, multihash: bytes) -> Cid:
        if len(multihash) != MULTIHASH_LEN or multihash[0] != SHA2_256 or multihash[1] != DIGEST_LEN:
            raise ValidationError("multihash must be 0x12 0x20 followed by a 32-byte digest")
        return cls(b58encode(multihash), bytes(multihash))

    @classmethod
    def parse(cls, text: str) -> Cid:
        """Parse and validate CID text; raises ``ValidationError`` on anything malformed."""
        if not isinstance(text, str) or len(text) != CID_TEXT_LEN or not text.startswith("Qm"):
            raise ValidationError(f"malformed CID: {text!r}")
        try:
            raw = b58decode(text)
        except ValueError as exc:
            raise ValidationError(f"malformed CID: {text!r}") from exc
        cid = cls.from_multihash(raw)
        if cid.text != text:
            raise ValidationError(f"non-canonical CID: {text!r}")
        return cid

    @property
    def digest(self) -> bytes:
        return self.multihash[2:]

    def __str__(self) -> str:
        return self.text


def cid_of(content: bytes) -> Cid:
    return Cid.from_multihash(bytes([SHA2_256, DIGEST_LEN]) + hashlib.sha256(content).digest())


def is_cid_text(text: object) -> bool:
    try:
        Cid.parse(text)  # type: ignore[arg-type]
    except ValidationError:
        return False
    return True


def _as_cid(cid: Cid | str) -> Cid:
    return cid if isinstance(cid, Cid) else Cid.parse(cid)


@dataclass
class StoredObject:
    cid: Cid
    data: bytes
    pinned: bool
    stored_at: int


class ContentStore:
    """In-memory content-addressed object store with pinning and GC.

    With ``root`` set, every object is mirrored to ``root/<cid>`` and the pin
    set to ``root/pins``, and the store reloads from there on construction.
    ``capacity_bytes`` bounds the total size of stored content.

    All public methods take one lock, so ``gc`` is atomic with respect to
    every other operation.
    """

    def __init__(self, root: str | os.PathLike | None = None, capacity_bytes: int | None = None):
        self.capacity_bytes = capacity_bytes
        self._objects: dict[str, StoredObject] = {}
        self._lock = threading.RLock()
        self._seq = itertools.count()
        self._root = Path(root) if root is not None else None
        if self._root is not None:
            self._root.mkdir(parents=True, exist_ok=True)
            self._load()

    def _load(self) -> None:
        pins_file = self._root / "pins"
        pinned = set(pins_file.read_text().split()) if pins_file.exists() else set()
        for path in sorted(self._root.iterdir()):
            if not path.name.startswith("Qm"):
                continue
            data = path.read_bytes()
            cid = cid_of(data)
            if cid.text != path.name:
                logger.warning("skipping %s: content does not hash to its name", path)
                continue
            self._objects[cid.text] = StoredObject(cid, data, cid.text in pinned, next(self._seq))

    def _sync_pins(self) -> None:
        if self._root is None:
            return
        pinned = sorted(k for k, o in self._objects.items() if o.pinned)
        tmp = self._root / "pins.tmp"
        tmp.write_text("".join(p + "\n" for p in pinned))
        os.replace(tmp, self._root / "pins")

    @property
    def size_bytes(self) -> int:
        return sum(len(o.data) for o in self._objects.values())

    def add(self, content: bytes, pin: bool = False) -> Cid:
        content = bytes(content)
        cid = cid_of(content)
        with self._lock:
            existing = self._objects.get(cid.text)
            if existing is not None:
                if pin and not existing.pinned:
                    existing.pinned = True
                    self._sync_pins()
                return cid
            if self.capacity_bytes is not None and self.size_bytes + len(content) > self.capacity_bytes:
                raise CapacityError(
                    f"store full: {self.size_bytes} + {len(content)} bytes exceeds {self.capacity_bytes}"
                )
            self._objects[cid.text] = StoredObject(cid, content, pin, next(self._seq))
            if self._root is not None:
                tmp = self._root / (cid.text + ".tmp")
                tmp.write_bytes(content)
                os.replace(tmp, self._root / cid.text)
                if pin:
                    self._sync_pins()
        return cid

    def get(self, cid: Cid | str) -> bytes:
        cid = _as_cid(cid)
        with self._lock:
            obj = self._objects.get(cid.text)
        if obj is None:
            raise NotFound(f"no object {cid.text}")
        return obj.data

    def stat(self, cid: Cid | str) -> StoredObject:
        cid = _as_cid(cid)
        with self._lock:
            try:
                return self._objects[cid.text]
            except KeyError:
                raise NotFound(f"no object {cid.text}") from None

    def __contains__(self, cid: object) -> bool:
        key = cid.text if isinstance(cid, Cid) else cid
        with self._lock:
            return key in self._objects

    def __len__(self) -> int:
        return len(self._objects)

    def pin(self, cid: Cid | str) -> bool:
        """Pin ``cid``; returns whether the pin state changed."""
        return self._set_pinned(cid, True)

    def unpin(self, cid: Cid | str) -> bool:
        return self._set_pinned(cid, False)

    def _set_pinned(self, cid: Cid | str, pinned: bool) -> bool:
        with self._lock:
            obj = self.stat(cid)
            changed = obj.pinned != pinned
            obj.pinned = pinned
            if changed:
                self._sync_pins()
        return changed

    def pinned(self) -> set[str]:
        with self._lock:
            return {k for k, o in self._objects.items() if o.pinned}

    def cids(self) -> list[str]:
        """Stored CIDs in insertion order."""
        with self._lock:
            return [o.cid.text for o in sorted(self._objects.values(), key=lambda o: o.stored_at)]

    def gc(self) -> int:
        """Remove every unpinned object and return how many were removed."""
        with self._lock:
            doomed = [k for k, o in self._objects.items() if not o.pinned]
            for key in doomed:
                del self._objects[key]
                if self._root is not None:
                    (self._root / key).unlink(missing_ok=True)
        if doomed:
            logger.debug("gc removed %d objects", len(doomed))
        return len(doomed)
