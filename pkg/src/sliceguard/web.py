"""HTTP facades for every service.

Each ``*_app`` factory wraps one in-process object; the clients in
:mod:`sliceguard.clients` speak the same routes. Errors travel as
``{"error": {"code": ..., "message": ...}}`` with the status code of the
matching :class:`~sliceguard.errors.SliceguardError` subclass.
"""

from __future__ import annotations

import json
import logging
import threading
from typing import Any, Callable

from fastapi import Body, FastAPI, Request
from fastapi.responses import JSONResponse, Response

from sliceguard.adapters import AdapterService
from sliceguard.canonical import canonical_json
from sliceguard.content_store import ContentStore
from sliceguard.errors import SliceguardError, ValidationError
from sliceguard.ledger import Ledger, Transaction
from sliceguard.oracle_node import OracleNode
from sliceguard.slicing import SlicingController

logger = logging.getLogger(__name__)


class CanonicalJSONResponse(JSONResponse):
    def render(self, content: Any) -> bytes:
        return canonical_json(content)


def _error_response(exc: SliceguardError) -> Response:
    return CanonicalJSONResponse({"error": {"code": exc.code, "message": str(exc)}}, status_code=exc.http_status)


def _install_error_handler(app: FastAPI) -> None:
    @app.exception_handler(SliceguardError)
    async def _handle(request: Request, exc: SliceguardError):
        return _error_response(exc)


async def _json_body(request: Request) -> Any:
    raw = await request.body()
    try:
        return json.loads(raw)
    except (ValueError, UnicodeDecodeError):
        raise ValidationError("body is not valid JSON") from None


def _new_app(title: str) -> FastAPI:
    app = FastAPI(title=title, default_response_class=CanonicalJSONResponse)
    _install_error_handler(app)
    return app


# -- content store -----------------------------------------------------


def store_app(store: ContentStore) -> FastAPI:
    app = _new_app("content store")

    @app.post("/objects")
    async def add(request: Request, pin: bool = False):
        return {"cid": store.add(await request.body(), pin=pin).text}

    @app.get("/objects")
    def listing():
        return {"cids": store.cids(), "pinned": sorted(store.pinned())}

    @app.get("/objects/{cid}")
    def get(cid: str):
        return Response(store.get(cid), media_type="application/octet-stream")

    @app.post("/objects/{cid}/pin")
    def pin(cid: str):
        return {"changed": store.pin(cid)}

    @app.post("/objects/{cid}/unpin")
    def unpin(cid: str):
        return {"changed": store.unpin(cid)}

    @app.post("/gc")
    def gc():
        return {"removed": store.gc()}

    return app


# -- ledger ------------------------------------------------------------


def _ledger_methods(ledger: Ledger) -> dict[str, Callable[[dict], Any]]:
    return {
        "create_eoa": lambda p: ledger.create_eoa(int(p["seed"])).text,
        "deploy_contract": lambda p: ledger.deploy_contract(p["deployer"], p["code_id"], p.get("init_args")).to_dict(),
        "submit_transaction": lambda p: ledger.submit_transaction(Transaction.from_dict(p["tx"])).to_dict(),
        "call": lambda p: ledger.call(p["sender"], p["to"], p["fn"], p.get("args"), int(p.get("link_value", 0))).to_dict(),
        "transfer": lambda p: ledger.transfer(p["sender"], p["to"], int(p["amount"])).to_dict(),
        "call_view": lambda p: ledger.call_view(p["to"], p["fn"], p.get("args"), p.get("sender")),
        "get_events": lambda p: [
            e.to_dict() for e in ledger.get_events(int(p.get("from_block", 0)), p.get("topic"), p.get("emitter"))
        ],
        "get_account": lambda p: ledger.get_account(p["address"]).to_dict(),
        "accounts": lambda p: [a.to_dict() for a in ledger.accounts()],
        "get_block": lambda p: ledger.get_block(int(p["number"])).to_dict(),
        "height": lambda p: ledger.height,
        "total_supply": lambda p: ledger.total_supply,
    }


def ledger_app(ledger: Ledger) -> FastAPI:
    """JSON-RPC style: ``POST /rpc {"method": name, "params": {...}}`` -> ``{"result": ...}``."""
    app = _new_app("ledger")
    methods = _ledger_methods(ledger)

    @app.post("/rpc")
    async def rpc(request: Request):
        body = await _json_body(request)
        if not isinstance(body, dict) or body.get("method") not in methods:
            raise ValidationError(f"unknown method {body.get('method') if isinstance(body, dict) else body!r}")
        params = body.get("params") or {}
        try:
            return {"result": methods[body["method"]](params)}
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, SliceguardError):
                raise
            raise ValidationError(f"bad params for {body['method']}: {exc}") from None

    return app


# -- slicing controller --------------------------------------------------


def controller_app(controller: SlicingController) -> FastAPI:
    app = _new_app("slicing controller")
    prefix = "/api/v1"

    @app.post(prefix + "/tenants", status_code=201)
    def create_tenant(body: dict = Body(...)):
        tenant = controller.create_tenant(body.get("name"), body.get("tenant_id"))
        return tenant.to_document()

    @app.get(prefix + "/tenants")
    def tenants():
        return [t.to_document() for t in controller.tenants()]

    @app.post(prefix + "/wtps", status_code=201)
    def register_wtp(body: dict = Body(...)):
        return vars(controller.register_wtp(body.get("wtp_id"), body.get("description", "")))

    @app.post(prefix + "/tenants/{tenant_id}/slices", status_code=201)
    def create_slice(tenant_id: str, body: dict = Body(...)):
        cfg = controller.create_slice(tenant_id, body.get("slice_id"), body.get("quantum_ms"), body.get("wtps") or [])
        return cfg.to_document()

    @app.get(prefix + "/tenants/{tenant_id}/slices/{slice_id}")
    def get_slice(tenant_id: str, slice_id: str):
        return Response(controller.get_slice(tenant_id, slice_id), media_type="application/json")

    @app.put(prefix + "/tenants/{tenant_id}/slices/{slice_id}/quantum")
    def update_quantum(tenant_id: str, slice_id: str, body: dict = Body(...)):
        return controller.update_quantum(tenant_id, slice_id, body.get("quantum_ms")).to_document()

    return app


# -- external adapters -------------------------------------------------


def adapters_app(service: AdapterService) -> FastAPI:
    app = _new_app("external adapters")

    @app.post("/pin")
    async def pin(request: Request):
        return service.pin(await request.body())

    @app.post("/validate")
    async def validate(request: Request):
        raw = await request.body()
        logger.debug("Body: %r", raw)
        return service.validate(raw)

    return app


# -- oracle node -------------------------------------------------------


def node_app(node: OracleNode, lock: threading.Lock | None = None) -> FastAPI:
    lock = lock or threading.Lock()
    app = _new_app("oracle node")

    @app.get("/runs")
    def runs():
        with lock:
            return node.runs_as_dicts()

    @app.get("/jobs")
    def jobs():
        with lock:
            return [j.to_dict() for j in node.jobs.values()]

    @app.post("/jobs/{job_id}/trigger")
    def trigger(job_id: str):
        with lock:
            if job_id not in node.jobs:
                raise ValidationError(f"unknown job {job_id!r}")
            return node.trigger(job_id).to_dict()

    return app
