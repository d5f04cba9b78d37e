"""Contract behaviors executed by the ledger.

Three codes are registered: ``link_token`` (the payment token),
``oracle`` (request/fulfill gateway holding escrow and the node
allow-list) and ``validator`` (the client contract that owns an API path
and the latest authorized CID of the document behind it).

Each behavior is a stateless object; its state lives in the contract
account and is reached through ``ctx.state``. Any :class:`Revert` raised
here rolls back the whole enclosing transaction.
"""

from __future__ import annotations

import hashlib
from typing import Any, Callable

from sliceguard.canonical import canonical_json
from sliceguard.content_store import is_cid_text
from sliceguard.ledger import Address, CallContext, Revert

ORACLE_REQUEST = "OracleRequest"
ORACLE_FULFILLED = "OracleFulfilled"
HASH_STORED = "HashStored"
DEFAULT_MIN_PAYMENT = 1


def request_id_for(requester: str, counter: int, job_id: str) -> str:
    """SHA-256 over the canonical encoding of (requester, counter, job_id)."""
    payload = canonical_json({"requester": requester, "nonce": counter, "job_id": job_id})
    return "0x" + hashlib.sha256(payload).hexdigest()


def _require(cond: bool, reason: str) -> None:
    if not cond:
        raise Revert(reason)


def _address(value: Any, what: str) -> str:
    try:
        return Address.parse(value).text
    except Exception:
        raise Revert(f"{what} is not an address") from None


def _amount(value: Any) -> int:
    _require(isinstance(value, int) and not isinstance(value, bool) and value >= 0, "amount must be a non-negative integer")
    return value


class Behavior:
    code_id = ""
    external: tuple[str, ...] = ()

    def constructor(self, ctx: CallContext, args: dict) -> None:
        pass

    def functions(self) -> dict[str, Callable[[CallContext, dict], Any]]:
        return {name: getattr(self, name) for name in self.external}


class LinkToken(Behavior):
    code_id = "link_token"
    external = ("transfer", "transfer_and_call", "balance_of", "total_supply")

    def constructor(self, ctx, args):
        supply = _amount(args.get("initial_supply", 0))
        ctx.state.update(symbol="LINK", total_supply=supply)
        ctx.mint(ctx.sender, supply)

    def balance_of(self, ctx, args):
        return ctx.balance_of(_address(args.get("owner"), "owner"))

    def total_supply(self, ctx, args):
        return ctx.state["total_supply"]

    def transfer(self, ctx, args):
        to = _address(args.get("to"), "to")
        amount = _amount(args.get("amount"))
        _require(ctx.balance_of(ctx.sender) >= amount, "insufficient balance")
        ctx.move(ctx.sender, to, amount)
        return True

    def transfer_and_call(self, ctx, args):
        """Pay ``amount`` into an oracle and file a request in the same step."""
        to = _address(args.get("to"), "to")
        amount = _amount(args.get("amount"))
        _require(ctx.code_of(to) == "oracle", "target is not an oracle")
        _require(ctx.balance_of(ctx.sender) >= amount, "insufficient balance")
        data = args.get("data")
        _require(isinstance(data, dict), "request payload must be an object")
        ctx.move(ctx.sender, to, amount)
        return ctx.call(to, "oracle_request", {**data, "requester": ctx.sender, "payment": amount})


class Oracle(Behavior):
    code_id = "oracle"
    external = (
        "oracle_request",
        "fulfill",
        "set_authorization",
        "is_authorized",
        "get_request",
        "pending_ids",
        "escrow_total",
    )

    def constructor(self, ctx, args):
        link = _address(args.get("link_token"), "link_token")
        _require(ctx.code_of(link) == "link_token", "link_token is not a LINK token contract")
        ctx.state.update(
            owner=ctx.sender,
            link_token=link,
            min_payment=_amount(args.get("min_payment", DEFAULT_MIN_PAYMENT)),
            authorized=[],
            pending={},
            escrow={},
            seen=[],
        )

    def oracle_request(self, ctx, args):
        st = ctx.state
        _require(ctx.sender == st["link_token"], "requests must be paid through transfer_and_call")
        payment = _amount(args.get("payment"))
        _require(payment >= st["min_payment"], "payment too low")
        job_id = args.get("job_id")
        _require(isinstance(job_id, str) and job_id != "", "job_id required")
        callback = args.get("callback")
        _require(isinstance(callback, str) and callback != "", "callback required")
        counter = args.get("nonce")
        _require(isinstance(counter, int) and counter >= 0, "request nonce required")
        params = args.get("params") or {}
        _require(isinstance(params, dict), "params must be an object")
        requester = args["requester"]

        rid = request_id_for(requester, counter, job_id)
        _require(rid not in st["seen"], "duplicate request id")
        st["seen"].append(rid)
        st["pending"][rid] = {
            "request_id": rid,
            "requester": requester,
            "job_id": job_id,
            "payment": payment,
            "params": params,
            "callback": callback,
        }
        st["escrow"][rid] = payment
        ctx.emit(
            ORACLE_REQUEST,
            {
                "request_id": rid,
                "job_id": job_id,
                "api_path": params.get("api_path"),
                "callback": callback,
                "payment": payment,
                "requester": requester,
            },
        )
        return rid

    def fulfill(self, ctx, args):
        st = ctx.state
        _require(ctx.sender in st["authorized"], "node not authorized")
        rid = args.get("request_id")
        _require(rid in st["pending"], "unknown or already fulfilled request")
        result = args.get("result")
        _require(isinstance(result, dict), "result must be an object")
        req = st["pending"].pop(rid)
        payment = st["escrow"].pop(rid)
        ctx.transfer(ctx.sender, payment)
        ctx.call(req["requester"], req["callback"], {"request_id": rid, "result": result})
        ctx.emit(ORACLE_FULFILLED, {"request_id": rid, "node": ctx.sender, "payment": payment})
        return True

    def set_authorization(self, ctx, args):
        st = ctx.state
        _require(ctx.sender == st["owner"], "only the owner may change authorization")
        node = _address(args.get("node"), "node")
        allowed = bool(args.get("allowed", True))
        nodes = set(st["authorized"])
        nodes.add(node) if allowed else nodes.discard(node)
        st["authorized"] = sorted(nodes)
        return True

    def is_authorized(self, ctx, args):
        return _address(args.get("node"), "node") in ctx.state["authorized"]

    def get_request(self, ctx, args):
        return ctx.state["pending"].get(args.get("request_id"))

    def pending_ids(self, ctx, args):
        return sorted(ctx.state["pending"])

    def escrow_total(self, ctx, args):
        return sum(ctx.state["escrow"].values())


class Validator(Behavior):
    """Client contract: knows an API path and the latest CID anchored for it."""

    code_id = "validator"
    external = ("request_snapshot", "store_hash", "get_stored_hash", "get_config")

    def constructor(self, ctx, args):
        api_path = args.get("api_path")
        _require(isinstance(api_path, str) and api_path != "", "api_path must be non-empty")
        job_id = args.get("job_id")
        _require(isinstance(job_id, str) and job_id != "", "job_id must be non-empty")
        oracle = _address(args.get("oracle"), "oracle")
        _require(ctx.code_of(oracle) == "oracle", "oracle is not an oracle contract")
        ctx.state.update(
            owner=ctx.sender,
            api_path=api_path,
            job_id=job_id,
            oracle=oracle,
            link_token=ctx.read_state(oracle)["link_token"],
            payment=_amount(args.get("payment", DEFAULT_MIN_PAYMENT)),
            stored_cid=None,
            last_update_block=None,
            request_counter=0,
            outstanding=[],
        )

    def request_snapshot(self, ctx, args):
        st = ctx.state
        _require(ctx.sender == st["owner"], "only the owner may request snapshots")
        _require(ctx.balance_of(ctx.this) >= st["payment"], "insufficient LINK")
        counter = st["request_counter"]
        st["request_counter"] = counter + 1
        rid = ctx.call(
            st["link_token"],
            "transfer_and_call",
            {
                "to": st["oracle"],
                "amount": st["payment"],
                "data": {
                    "job_id": st["job_id"],
                    "params": {"api_path": st["api_path"]},
                    "callback": "store_hash",
                    "nonce": counter,
                },
            },
        )
        st["outstanding"].append(rid)
        return rid

    def store_hash(self, ctx, args):
        st = ctx.state
        _require(ctx.sender == st["oracle"], "only the oracle may store a hash")
        result = args.get("result")
        cid = result.get("cid") if isinstance(result, dict) else args.get("cid")
        _require(is_cid_text(cid), "malformed CID")
        rid = args.get("request_id")
        if rid is not None:
            _require(rid in st["outstanding"], "unknown request")
            st["outstanding"].remove(rid)
        st["stored_cid"] = cid
        st["last_update_block"] = ctx.block_number
        ctx.emit(HASH_STORED, {"cid": cid, "request_id": rid})
        return cid

    def get_stored_hash(self, ctx, args):
        return ctx.state["stored_cid"]

    def get_config(self, ctx, args):
        st = ctx.state
        return {k: st[k] for k in ("api_path", "job_id", "oracle", "payment", "stored_cid", "last_update_block")}


CODES: dict[str, Behavior] = {b.code_id: b for b in (LinkToken(), Oracle(), Validator())}
