"""Mock 5G-EmPOWER slicing controller: tenants, slices and their quantum.

Slices are served at ``/api/v1/tenants/{tenant_id}/slices/{slice_id}`` as
canonical JSON, so two reads with no mutation in between return identical
bytes and hash to the same CID. With a ``state_dir`` every tenant is kept
as one canonical JSON file, which makes those bytes stable across restarts.
"""

from __future__ import annotations

import json
import logging
import os
import random
import re
import threading
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable

from sliceguard.canonical import canonical_json
from sliceguard.errors import Conflict, NotFound, Unavailable, ValidationError

logger = logging.getLogger(__name__)

SLICE_ID_RE = re.compile(r"^0x[0-9a-f]{2}$")
UUID_RE = re.compile(r"^[0-9a-f]{8}-[0-9a-f]{4}-[0-9a-f]{4}-[0-9a-f]{4}-[0-9a-f]{12}$")
SLICE_PATH_RE = re.compile(
    r"^/api/v1/tenants/(?P<tenant_id>[0-9a-f]{8}-[0-9a-f]{4}-[0-9a-f]{4}-[0-9a-f]{4}-[0-9a-f]{12})"
    r"/slices/(?P<slice_id>0x[0-9a-f]{2})$"
)


def slice_path(tenant_id: str, slice_id: str) -> str:
    return f"/api/v1/tenants/{tenant_id}/slices/{slice_id}"


def parse_slice_path(path: str) -> tuple[str, str]:
    m = SLICE_PATH_RE.match(path) if isinstance(path, str) else None
    if m is None:
        raise ValidationError(f"not a slice path: {path!r}")
    return m["tenant_id"], m["slice_id"]


def _check_tenant_id(tenant_id: str) -> str:
    if not isinstance(tenant_id, str) or not UUID_RE.match(tenant_id):
        raise ValidationError(f"tenant_id must be a lowercase RFC 4122 UUID: {tenant_id!r}")
    return tenant_id


def _check_quantum(quantum_ms: object) -> int:
    if not isinstance(quantum_ms, int) or isinstance(quantum_ms, bool) or quantum_ms < 1:
        raise ValidationError(f"quantum_ms must be an integer >= 1, got {quantum_ms!r}")
    return quantum_ms


@dataclass(frozen=True)
class WTP:
    wtp_id: str
    description: str = ""

    def __post_init__(self):
        if not isinstance(self.wtp_id, str) or not self.wtp_id:
            raise ValidationError("wtp_id must be non-empty")


@dataclass
class SliceConfig:
    tenant_id: str
    slice_id: str
    quantum_ms: int
    wtps: list[str] = field(default_factory=list)
    created_at: int = 0

    def to_document(self) -> dict:
        return {
            "created_at": self.created_at,
            "quantum_ms": self.quantum_ms,
            "slice_id": self.slice_id,
            "tenant_id": self.tenant_id,
            "wtps": list(self.wtps),
        }

    @classmethod
    def from_document(cls, doc: dict) -> SliceConfig:
        return cls(doc["tenant_id"], doc["slice_id"], doc["quantum_ms"], list(doc["wtps"]), doc["created_at"])


@dataclass
class Tenant:
    tenant_id: str
    name: str
    slices: dict[str, SliceConfig] = field(default_factory=dict)

    def to_document(self) -> dict:
        return {
            "name": self.name,
            "slices": {sid: s.to_document() for sid, s in self.slices.items()},
            "tenant_id": self.tenant_id,
        }

    @classmethod
    def from_document(cls, doc: dict) -> Tenant:
        slices = {sid: SliceConfig.from_document(s) for sid, s in doc["slices"].items()}
        return cls(doc["tenant_id"], doc["name"], slices)


class SlicingController:
    """In-process controller. ``shutdown()`` makes every read raise ``Unavailable``."""

    def __init__(
        self,
        state_dir: str | os.PathLike | None = None,
        clock: Callable[[], int] | None = None,
        seed: int = 0,
    ):
        self._clock = clock or (lambda: 0)
        self._rng = random.Random(seed)
        self._tenants: dict[str, Tenant] = {}
        self._wtps: dict[str, WTP] = {}
        self._lock = threading.RLock()
        self._running = True
        self._dir = Path(state_dir) if state_dir is not None else None
        if self._dir is not None:
            (self._dir / "tenants").mkdir(parents=True, exist_ok=True)
            self.reload()

    # -- persistence ---------------------------------------------------

    def reload(self) -> None:
        """Re-read persisted state, discarding anything held in memory."""
        if self._dir is None:
            return
        with self._lock:
            self._tenants = {}
            for path in sorted((self._dir / "tenants").glob("*.json")):
                tenant = Tenant.from_document(json.loads(path.read_bytes()))
                self._tenants[tenant.tenant_id] = tenant
            wtps = self._dir / "wtps.json"
            self._wtps = {}
            if wtps.exists():
                for w in json.loads(wtps.read_bytes()):
                    self._wtps[w["wtp_id"]] = WTP(w["wtp_id"], w["description"])

    def _write(self, path: Path, doc: object) -> None:
        tmp = path.with_suffix(".tmp")
        tmp.write_bytes(canonical_json(doc))
        os.replace(tmp, path)

    def _persist_tenant(self, tenant: Tenant) -> None:
        if self._dir is not None:
            self._write(self._dir / "tenants" / f"{tenant.tenant_id}.json", tenant.to_document())

    def tenant_file(self, tenant_id: str) -> Path:
        if self._dir is None:
            raise ValueError("controller has no state directory")
        return self._dir / "tenants" / f"{tenant_id}.json"

    # -- availability --------------------------------------------------

    @property
    def running(self) -> bool:
        return self._running

    def shutdown(self) -> None:
        self._running = False

    def start(self) -> None:
        self._running = True

    def _check_up(self) -> None:
        if not self._running:
            raise Unavailable("slicing controller is down")

    # -- tenants, WTPs, slices -----------------------------------------

    def create_tenant(self, name: str, tenant_id: str | None = None) -> Tenant:
        if not isinstance(name, str) or not name:
            raise ValidationError("tenant name must be non-empty")
        with self._lock:
            self._check_up()
            if tenant_id is None:
                tenant_id = str(uuid.UUID(int=self._rng.getrandbits(128), version=4))
            _check_tenant_id(tenant_id)
            if tenant_id in self._tenants:
                raise Conflict(f"tenant {tenant_id} exists")
            tenant = Tenant(tenant_id, name)
            self._tenants[tenant_id] = tenant
            self._persist_tenant(tenant)
            return tenant

    def register_wtp(self, wtp_id: str, description: str = "") -> WTP:
        wtp = WTP(wtp_id, description)
        with self._lock:
            self._check_up()
            if wtp_id in self._wtps:
                raise Conflict(f"WTP {wtp_id} exists")
            self._wtps[wtp_id] = wtp
            if self._dir is not None:
                self._write(self._dir / "wtps.json", [vars(w) for w in self._wtps.values()])
        return wtp

    def wtps(self) -> list[WTP]:
        with self._lock:
            return list(self._wtps.values())

    def tenants(self) -> list[Tenant]:
        with self._lock:
            self._check_up()
            return [Tenant.from_document(t.to_document()) for t in self._tenants.values()]

    def _tenant(self, tenant_id: str) -> Tenant:
        try:
            return self._tenants[tenant_id]
        except KeyError:
            raise NotFound(f"no tenant {tenant_id}") from None

    def _slice(self, tenant_id: str, slice_id: str) -> SliceConfig:
        try:
            return self._tenant(tenant_id).slices[slice_id]
        except KeyError:
            raise NotFound(f"no slice {slice_id} in tenant {tenant_id}") from None

    def _check_wtps(self, wtps: Iterable[str]) -> list[str]:
        wtps = list(wtps)
        unknown = [w for w in wtps if w not in self._wtps]
        if unknown:
            raise ValidationError(f"unknown WTPs: {unknown}")
        if len(set(wtps)) != len(wtps):
            raise ValidationError("duplicate WTP in slice")
        return wtps

    def create_slice(self, tenant_id: str, slice_id: str, quantum_ms: int, wtps: Iterable[str] = ()) -> SliceConfig:
        if not isinstance(slice_id, str) or not SLICE_ID_RE.match(slice_id):
            raise ValidationError(f"slice_id must look like 0x00: {slice_id!r}")
        _check_quantum(quantum_ms)
        with self._lock:
            self._check_up()
            tenant = self._tenant(tenant_id)
            if slice_id in tenant.slices:
                raise Conflict(f"slice {slice_id} exists in tenant {tenant_id}")
            cfg = SliceConfig(tenant_id, slice_id, quantum_ms, self._check_wtps(wtps), self._clock())
            tenant.slices[slice_id] = cfg
            self._persist_tenant(tenant)
            logger.info("created slice %s", slice_path(tenant_id, slice_id))
            return SliceConfig.from_document(cfg.to_document())

    def update_slice(
        self, tenant_id: str, slice_id: str, *, quantum_ms: int | None = None, wtps: Iterable[str] | None = None
    ) -> SliceConfig:
        with self._lock:
            self._check_up()
            cfg = self._slice(tenant_id, slice_id)
            new_quantum = cfg.quantum_ms if quantum_ms is None else _check_quantum(quantum_ms)
            new_wtps = cfg.wtps if wtps is None else self._check_wtps(wtps)
            cfg.quantum_ms, cfg.wtps = new_quantum, list(new_wtps)
            self._persist_tenant(self._tenant(tenant_id))
            return SliceConfig.from_document(cfg.to_document())

    def update_quantum(self, tenant_id: str, slice_id: str, new_quantum_ms: int) -> SliceConfig:
        return self.update_slice(tenant_id, slice_id, quantum_ms=new_quantum_ms)

    def get_slice(self, tenant_id: str, slice_id: str) -> bytes:
        """Canonical JSON bytes of one slice document."""
        with self._lock:
            self._check_up()
            return canonical_json(self._slice(tenant_id, slice_id).to_document())

    def get_path(self, api_path: str) -> bytes:
        tenant_id, slice_id = parse_slice_path(api_path)
        return self.get_slice(tenant_id, slice_id)

    def slice_paths(self) -> list[str]:
        with self._lock:
            return [slice_path(t.tenant_id, sid) for t in self._tenants.values() for sid in t.slices]
