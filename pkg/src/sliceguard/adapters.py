"""External adapters: IPFS pinning (snapshot path) and auditor (verification path).

Both adapters canonicalize the slice document before hashing, so a
controller that re-serializes the same configuration with different
whitespace or key order still verifies, while any change of value does not.

The auditor's console line keeps the original deployment's wording::

    SUCCESS: Rota: <path> verificada!
    ERROR: Rota: <path> corrompida!
"""

from __future__ import annotations

import enum
import json
import logging
from dataclasses import dataclass, field
from typing import Callable, Mapping, Protocol

from sliceguard.canonical import canonical_json, canonicalize_bytes
from sliceguard.content_store import ContentStore, cid_of, is_cid_text
from sliceguard.errors import AdapterError, NotFound, Unavailable, ValidationError
from sliceguard.slicing import parse_slice_path

logger = logging.getLogger(__name__)
audit_log = logging.getLogger("sliceguard.audit")

LOG_LINE_RE = r"^(SUCCESS|ERROR): Rota: (\S+) (verificada|corrompida)!$"


class SliceSource(Protocol):
    def get_path(self, api_path: str) -> bytes: ...


class Verdict(str, enum.Enum):
    VERIFIED = "VERIFIED"
    CORRUPTED = "CORRUPTED"
    UNAVAILABLE = "UNAVAILABLE"


@dataclass
class AdapterRequest:
    """Bridge request envelope: ``{"id": ..., "data": {...}, "meta": {...}}``.

    ``data.path`` is accepted as an alias for ``data.api_path``.
    """

    run_id: str
    data: dict
    meta: dict = field(default_factory=dict)

    @classmethod
    def parse(cls, body: bytes | str | Mapping, require_hash: bool = False) -> AdapterRequest:
        if isinstance(body, (bytes, str)):
            try:
                body = json.loads(body)
            except (ValueError, UnicodeDecodeError) as exc:
                raise ValidationError(f"request body is not JSON: {exc}") from None
        if not isinstance(body, Mapping):
            raise ValidationError("request body must be an object")
        data = body.get("data")
        meta = body.get("meta", {}) or {}
        if not isinstance(data, Mapping) or not isinstance(meta, Mapping):
            raise ValidationError("data and meta must be objects")
        data = dict(data)
        if "api_path" not in data and "path" in data:
            data["api_path"] = data.pop("path")
        parse_slice_path(data.get("api_path"))
        if require_hash and not is_cid_text(data.get("hashIpfs")):
            raise ValidationError(f"hashIpfs is not a CID: {data.get('hashIpfs')!r}")
        run_id = body.get("id", body.get("run_id", ""))
        return cls(str(run_id), data, dict(meta))

    @property
    def api_path(self) -> str:
        return self.data["api_path"]

    def to_dict(self) -> dict:
        return {"id": self.run_id, "data": self.data, "meta": self.meta}


@dataclass
class IntegrityReport:
    api_path: str
    expected_cid: str
    actual_cid: str
    verdict: Verdict
    checked_at: int
    detail: str = ""

    def __post_init__(self):
        self.verdict = Verdict(self.verdict)

    @property
    def log_line(self) -> str:
        if self.verdict is Verdict.VERIFIED:
            return f"SUCCESS: Rota: {self.api_path} verificada!"
        if self.verdict is Verdict.CORRUPTED:
            return f"ERROR: Rota: {self.api_path} corrompida!"
        return f"WARNING: Rota: {self.api_path} indisponivel ({self.detail})"

    def to_dict(self) -> dict:
        return {
            "api_path": self.api_path,
            "expected_cid": self.expected_cid,
            "actual_cid": self.actual_cid,
            "verdict": self.verdict.value,
            "checked_at": self.checked_at,
            "detail": self.detail,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> IntegrityReport:
        return cls(d["api_path"], d["expected_cid"], d["actual_cid"], d["verdict"], d["checked_at"], d.get("detail", ""))


def _document_bytes(raw: bytes) -> bytes:
    try:
        return canonicalize_bytes(raw)
    except (ValueError, UnicodeDecodeError):
        return raw


def ipfs_pin_adapter(req: AdapterRequest, source: SliceSource, store: ContentStore) -> dict:
    """Fetch the document at ``req.api_path``, pin its canonical bytes, return the CID."""
    try:
        raw = source.get_path(req.api_path)
    except (NotFound, Unavailable, ValidationError) as exc:
        raise AdapterError(f"cannot fetch {req.api_path}: {exc}") from exc
    try:
        body = canonicalize_bytes(raw)
    except (ValueError, UnicodeDecodeError) as exc:
        raise AdapterError(f"{req.api_path} did not return JSON") from exc
    cid = store.add(body, pin=True)
    logger.info("pinned %s as %s", req.api_path, cid.text)
    return {"cid": cid.text}


def auditor_adapter(req: AdapterRequest, source: SliceSource, now: int = 0) -> IntegrityReport:
    """Compare the live document's CID with the anchored one and log the verdict."""
    expected = req.data.get("hashIpfs")
    if not is_cid_text(expected):
        raise AdapterError(f"expected hash is not a CID: {expected!r}")
    try:
        actual = cid_of(_document_bytes(source.get_path(req.api_path))).text
    except (NotFound, Unavailable) as exc:
        report = IntegrityReport(req.api_path, expected, "", Verdict.UNAVAILABLE, now, str(exc))
    else:
        verdict = Verdict.VERIFIED if actual == expected else Verdict.CORRUPTED
        report = IntegrityReport(req.api_path, expected, actual, verdict, now)
    level = logging.INFO if report.verdict is Verdict.VERIFIED else logging.WARNING
    audit_log.log(level, report.log_line)
    audit_log.debug("audit %s", canonical_json(report.to_dict()).decode())
    return report


class AdapterService:
    """Both adapters bound to one controller and one store.

    ``pin`` and ``validate`` take and return plain JSON-able dicts, the same
    shape the HTTP facade exposes, so the oracle node can call either one.
    """

    def __init__(self, source: SliceSource, store: ContentStore, clock: Callable[[], int] | None = None):
        self.source = source
        self.store = store
        self._clock = clock or (lambda: 0)

    def pin(self, body: Mapping | bytes | str) -> dict:
        return ipfs_pin_adapter(AdapterRequest.parse(body), self.source, self.store)

    def validate(self, body: Mapping | bytes | str) -> dict:
        req = AdapterRequest.parse(body, require_hash=True)
        return auditor_adapter(req, self.source, self._clock()).to_dict()

    def by_name(self) -> dict[str, Callable[[dict], dict]]:
        return {"ipfs_pin": self.pin, "auditor": self.validate}

