"""HTTP clients mirroring the in-process service objects method for method."""

from __future__ import annotations

from typing import Any

import httpx

from sliceguard.content_store import Cid
from sliceguard.errors import ERRORS_BY_CODE, SliceguardError, Unavailable
from sliceguard.ledger import Account, Address, Block, Event, Receipt, Transaction

DEFAULT_TIMEOUT = 10.0


class _Client:
    """``http`` injects a ready client, e.g. a Starlette ``TestClient``."""

    def __init__(self, base_url: str = "", timeout: float = DEFAULT_TIMEOUT, http: httpx.Client | None = None):
        self.base_url = base_url.rstrip("/")
        self._http = http if http is not None else httpx.Client(base_url=self.base_url, timeout=timeout)

    def close(self) -> None:
        self._http.close()

    def _request(self, method: str, path: str, **kw) -> httpx.Response:
        try:
            resp = self._http.request(method, path, **kw)
        except httpx.TransportError as exc:
            raise Unavailable(f"{self.base_url}{path}: {exc}") from exc
        if resp.status_code >= 400:
            try:
                err = resp.json()["error"]
                cls = ERRORS_BY_CODE.get(err["code"], SliceguardError)
                message = err["message"]
            except (ValueError, KeyError, TypeError):
                cls, message = (Unavailable if resp.status_code >= 500 else SliceguardError), resp.text
            raise cls(message)
        return resp


class StoreClient(_Client):
    def add(self, content: bytes, pin: bool = False) -> Cid:
        text = self._request("POST", "/objects", params={"pin": str(pin).lower()}, content=content).json()["cid"]
        return Cid.parse(text)

    def get(self, cid: Cid | str) -> bytes:
        return self._request("GET", f"/objects/{cid}").content

    def pin(self, cid: Cid | str) -> bool:
        return self._request("POST", f"/objects/{cid}/pin").json()["changed"]

    def unpin(self, cid: Cid | str) -> bool:
        return self._request("POST", f"/objects/{cid}/unpin").json()["changed"]

    def gc(self) -> int:
        return self._request("POST", "/gc").json()["removed"]

    def cids(self) -> list[str]:
        return self._request("GET", "/objects").json()["cids"]

    def pinned(self) -> set[str]:
        return set(self._request("GET", "/objects").json()["pinned"])


def _text(value: Any) -> Any:
    return value.text if isinstance(value, Address) else value


class LedgerClient(_Client):
    def _rpc(self, method: str, **params) -> Any:
        params = {k: _text(v) for k, v in params.items()}
        return self._request("POST", "/rpc", json={"method": method, "params": params}).json()["result"]

    def create_eoa(self, seed: int) -> Address:
        return Address.parse(self._rpc("create_eoa", seed=seed))

    def deploy_contract(self, deployer, code_id: str, init_args: dict | None = None) -> Receipt:
        return Receipt.from_dict(self._rpc("deploy_contract", deployer=deployer, code_id=code_id, init_args=init_args))

    def submit_transaction(self, tx: Transaction) -> Receipt:
        return Receipt.from_dict(self._rpc("submit_transaction", tx=tx.to_dict()))

    def call(self, sender, to, fn: str, args: dict | None = None, link_value: int = 0) -> Receipt:
        return Receipt.from_dict(self._rpc("call", sender=sender, to=to, fn=fn, args=args, link_value=link_value))

    def transfer(self, sender, to, amount: int) -> Receipt:
        return Receipt.from_dict(self._rpc("transfer", sender=sender, to=to, amount=amount))

    def call_view(self, to, fn: str, args: dict | None = None, sender=None) -> Any:
        return self._rpc("call_view", to=to, fn=fn, args=args, sender=sender)

    def get_events(self, from_block: int = 0, topic: str | None = None, emitter=None) -> list[Event]:
        rows = self._rpc("get_events", from_block=from_block, topic=topic, emitter=emitter)
        return [Event.from_dict(r) for r in rows]

    def get_account(self, address) -> Account:
        return Account(**self._rpc("get_account", address=address))

    def accounts(self) -> list[Account]:
        return [Account(**a) for a in self._rpc("accounts")]

    def balance(self, address) -> int:
        return self.get_account(address).balance

    def get_block(self, number: int) -> Block:
        d = self._rpc("get_block", number=number)
        return Block(d["number"], d["timestamp"], d["transactions"], [Receipt.from_dict(r) for r in d["receipts"]])

    def blocks(self) -> list[Block]:
        return [self.get_block(n) for n in range(self.height + 1)]

    @property
    def height(self) -> int:
        return self._rpc("height")

    @property
    def total_supply(self) -> int:
        return self._rpc("total_supply")


class ControllerClient(_Client):
    def create_tenant(self, name: str, tenant_id: str | None = None) -> dict:
        return self._request("POST", "/api/v1/tenants", json={"name": name, "tenant_id": tenant_id}).json()

    def register_wtp(self, wtp_id: str, description: str = "") -> dict:
        return self._request("POST", "/api/v1/wtps", json={"wtp_id": wtp_id, "description": description}).json()

    def create_slice(self, tenant_id: str, slice_id: str, quantum_ms: int, wtps=()) -> dict:
        body = {"slice_id": slice_id, "quantum_ms": quantum_ms, "wtps": list(wtps)}
        return self._request("POST", f"/api/v1/tenants/{tenant_id}/slices", json=body).json()

    def get_path(self, api_path: str) -> bytes:
        return self._request("GET", api_path).content

    def get_slice(self, tenant_id: str, slice_id: str) -> bytes:
        return self.get_path(f"/api/v1/tenants/{tenant_id}/slices/{slice_id}")

    def update_quantum(self, tenant_id: str, slice_id: str, new_quantum_ms: int) -> dict:
        path = f"/api/v1/tenants/{tenant_id}/slices/{slice_id}/quantum"
        return self._request("PUT", path, json={"quantum_ms": new_quantum_ms}).json()

    def tenants(self) -> list[dict]:
        return self._request("GET", "/api/v1/tenants").json()

    def slice_paths(self) -> list[str]:
        return [f"/api/v1/tenants/{t['tenant_id']}/slices/{sid}" for t in self.tenants() for sid in t["slices"]]


class AdapterClient(_Client):
    def pin(self, body: dict) -> dict:
        return self._request("POST", "/pin", json=body).json()

    def validate(self, body: dict) -> dict:
        return self._request("POST", "/validate", json=body).json()

    def by_name(self) -> dict:
        return {"ipfs_pin": self.pin, "auditor": self.validate}


class NodeClient(_Client):
    def runs(self) -> list[dict]:
        return self._request("GET", "/runs").json()

    def jobs(self) -> list[dict]:
        return self._request("GET", "/jobs").json()

    def trigger(self, job_id: str) -> dict:
        return self._request("POST", f"/jobs/{job_id}/trigger").json()
