"""Minimal account-based ledger with instant single-sealer finality.

Every accepted submission is executed and sealed into its own block at
once. LINK is the ledger's only asset and lives in account balances;
contract accounts additionally carry a JSON-serializable state map that
their registered behavior (see :mod:`sliceguard.contracts`) mutates.

A transaction that fails a pre-check (unknown sender, stale nonce, short
balance) raises and leaves no trace. A transaction whose contract code
reverts is still sealed, with a ``failed`` receipt: the sender's nonce
advances but every other state change and every event is rolled back.
"""

from __future__ import annotations

import copy
import hashlib
import json
import logging
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Mapping

from sliceguard.canonical import canonical_json
from sliceguard.errors import (
    AlreadyExists,
    BadNonce,
    InsufficientBalance,
    LedgerError,
    UnknownAccount,
    UnknownCode,
    ValidationError,
)

logger = logging.getLogger(__name__)

EOA = "eoa"
CONTRACT = "contract"


@dataclass(frozen=True, order=True)
class Address:
    raw: bytes

    def __post_init__(self):
        if len(self.raw) != 20:
            raise ValidationError("address must be 20 bytes")

    @property
    def text(self) -> str:
        return "0x" + self.raw.hex()

    @classmethod
    def parse(cls, value: Address | str) -> Address:
        if isinstance(value, Address):
            return value
        if not isinstance(value, str) or len(value) != 42 or not value.startswith("0x"):
            raise ValidationError(f"malformed address: {value!r}")
        try:
            raw = bytes.fromhex(value[2:])
        except ValueError:
            raise ValidationError(f"malformed address: {value!r}") from None
        if value != value.lower():
            raise ValidationError(f"address must be lowercase hex: {value!r}")
        return cls(raw)

    def __str__(self) -> str:
        return self.text

    def __repr__(self) -> str:
        return f"Address({self.text})"


def _derive(tag: bytes, payload: bytes) -> Address:
    return Address(hashlib.sha256(tag + payload).digest()[:20])


def eoa_address(seed: int) -> Address:
    """``sha256(b"eoa:" + decimal(seed))[:20]``."""
    return _derive(b"eoa:", str(int(seed)).encode())


def contract_address(deployer: Address, nonce: int) -> Address:
    return _derive(b"contract:", canonical_json({"deployer": deployer.text, "nonce": nonce}))


def _addr_text(value: Address | str) -> str:
    return Address.parse(value).text


class Revert(Exception):
    """Raised by contract code to abort the enclosing transaction."""


@dataclass
class Account:
    address: str
    kind: str
    balance: int = 0
    nonce: int = 0
    code_id: str | None = None
    state: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "address": self.address,
            "kind": self.kind,
            "balance": self.balance,
            "nonce": self.nonce,
            "code_id": self.code_id,
            "state": self.state,
        }


@dataclass
class Transaction:
    """``to=None`` with ``call={"fn": "deploy", ...}`` deploys a contract."""

    sender: str
    to: str | None
    nonce: int
    call: dict | None = None
    link_value: int = 0

    def __post_init__(self):
        self.sender = _addr_text(self.sender)
        if self.to is not None:
            self.to = _addr_text(self.to)
        if not isinstance(self.link_value, int) or self.link_value < 0:
            raise ValidationError("link_value must be a non-negative integer")
        if self.call is not None:
            if not isinstance(self.call, Mapping) or not isinstance(self.call.get("fn"), str):
                raise ValidationError('call must be {"fn": name, "args": {...}}')
            self.call = {"fn": self.call["fn"], "args": dict(self.call.get("args") or {})}

    def to_dict(self) -> dict:
        return {
            "from": self.sender,
            "to": self.to,
            "nonce": self.nonce,
            "call": self.call,
            "link_value": self.link_value,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> Transaction:
        return cls(d["from"], d.get("to"), int(d["nonce"]), d.get("call"), int(d.get("link_value", 0)))

    @property
    def hash(self) -> str:
        return "0x" + hashlib.sha256(canonical_json(self.to_dict())).hexdigest()


@dataclass(frozen=True)
class Event:
    emitter: str
    topic: str
    data: dict
    block_number: int
    index_in_block: int
    tx_hash: str

    @property
    def position(self) -> tuple[int, int]:
        return (self.block_number, self.index_in_block)

    def to_dict(self) -> dict:
        return {
            "emitter": self.emitter,
            "topic": self.topic,
            "data": self.data,
            "block_number": self.block_number,
            "index_in_block": self.index_in_block,
            "tx_hash": self.tx_hash,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> Event:
        return cls(d["emitter"], d["topic"], d["data"], d["block_number"], d["index_in_block"], d["tx_hash"])


@dataclass
class Receipt:
    tx_hash: str
    status: str
    block_number: int
    events: list[Event]
    return_value: Any = None
    error: str | None = None
    contract_address: str | None = None

    @property
    def ok(self) -> bool:
        return self.status == "success"

    def to_dict(self) -> dict:
        return {
            "tx_hash": self.tx_hash,
            "status": self.status,
            "block_number": self.block_number,
            "events": [e.to_dict() for e in self.events],
            "return_value": self.return_value,
            "error": self.error,
            "contract_address": self.contract_address,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> Receipt:
        return cls(
            d["tx_hash"],
            d["status"],
            d["block_number"],
            [Event.from_dict(e) for e in d["events"]],
            d.get("return_value"),
            d.get("error"),
            d.get("contract_address"),
        )


@dataclass
class Block:
    number: int
    timestamp: int
    transactions: list[dict]
    receipts: list[Receipt]

    @property
    def events(self) -> list[Event]:
        return [e for r in self.receipts for e in r.events]

    def to_dict(self) -> dict:
        return {
            "number": self.number,
            "timestamp": self.timestamp,
            "transactions": self.transactions,
            "receipts": [r.to_dict() for r in self.receipts],
        }


class CallContext:
    """What contract code sees while it runs: caller, value, and the world."""

    def __init__(self, ledger: _Execution, this: str, sender: str, value: int, depth: int):
        self._exec = ledger
        self.this = this
        self.sender = sender
        self.value = value
        self.depth = depth

    @property
    def block_number(self) -> int:
        return self._exec.block_number

    @property
    def state(self) -> dict:
        return self._exec.accounts[self.this].state

    def balance_of(self, address: str) -> int:
        acct = self._exec.accounts.get(address)
        return acct.balance if acct else 0

    def code_of(self, address: str) -> str | None:
        acct = self._exec.accounts.get(address)
        return acct.code_id if acct else None

    def is_eoa(self, address: str) -> bool:
        acct = self._exec.accounts.get(address)
        return acct is not None and acct.kind == EOA

    def emit(self, topic: str, data: dict) -> None:
        self._exec.emit(self.this, topic, data)

    def call(self, to: str, fn: str, args: dict | None = None, value: int = 0) -> Any:
        return self._exec.call(self.this, to, fn, args or {}, value, self.depth + 1)

    def transfer(self, to: str, amount: int) -> None:
        self._exec.move(self.this, to, amount)

    def read_state(self, address: str) -> dict:
        """Read-only view of another contract's state."""
        acct = self._exec.accounts.get(address)
        if acct is None or acct.kind != CONTRACT:
            raise Revert(f"{address} is not a contract")
        return copy.deepcopy(acct.state)

    # privileged hooks, honored only for the token contract
    def move(self, frm: str, to: str, amount: int) -> None:
        self._require_token()
        self._exec.move(frm, to, amount)

    def mint(self, to: str, amount: int) -> None:
        self._require_token()
        self._exec.mint(to, amount)

    def _require_token(self) -> None:
        if self.code_of(self.this) != "link_token":
            raise Revert("only the LINK token may move foreign balances")


MAX_CALL_DEPTH = 16


class _Execution:
    """Scratch copy of world state for one transaction."""

    def __init__(self, ledger: Ledger, block_number: int, tx_hash: str):
        self.ledger = ledger
        self.accounts = copy.deepcopy(ledger._accounts)
        self.total_supply = ledger.total_supply
        self.block_number = block_number
        self.tx_hash = tx_hash
        self.events: list[tuple[str, str, dict]] = []

    def emit(self, emitter: str, topic: str, data: dict) -> None:
        self.events.append((emitter, topic, json.loads(canonical_json(data))))

    def move(self, frm: str, to: str, amount: int) -> None:
        if not isinstance(amount, int) or amount < 0:
            raise Revert("amount must be a non-negative integer")
        src = self.accounts.get(frm)
        dst = self.accounts.get(to)
        if src is None or dst is None:
            raise Revert("unknown account")
        if src.balance < amount:
            raise Revert("insufficient balance")
        src.balance -= amount
        dst.balance += amount

    def mint(self, to: str, amount: int) -> None:
        if self.total_supply:
            raise Revert("LINK already minted")
        self.accounts[to].balance += amount
        self.total_supply += amount

    def call(self, sender: str, to: str, fn: str, args: dict, value: int, depth: int) -> Any:
        if depth > MAX_CALL_DEPTH:
            raise Revert("call depth exceeded")
        acct = self.accounts.get(to)
        if acct is None:
            raise Revert(f"unknown account {to}")
        if value:
            self.move(sender, to, value)
        if acct.kind != CONTRACT:
            if fn:
                raise Revert(f"{to} has no code")
            return None
        behavior = self.ledger.codes[acct.code_id]
        method = behavior.functions().get(fn)
        if method is None:
            raise Revert(f"{acct.code_id} has no function {fn!r}")
        ctx = CallContext(self, to, sender, value, depth)
        return method(ctx, dict(args))

    def deploy(self, deployer: str, nonce: int, code_id: str, init_args: dict, value: int) -> str:
        addr = contract_address(Address.parse(deployer), nonce).text
        if addr in self.accounts:
            raise Revert("address collision")
        self.accounts[addr] = Account(addr, CONTRACT, code_id=code_id)
        if value:
            self.move(deployer, addr, value)
        behavior = self.ledger.codes[code_id]
        behavior.constructor(CallContext(self, addr, deployer, value, 0), dict(init_args))
        return addr


class Ledger:
    """Serialized state machine; every submission seals one block.

    Parameters
    ----------
    clock:
        Returns the current tick, recorded as each block's timestamp.
        Defaults to the block number.
    journal:
        Optional JSON-lines file. Accepted operations are appended and the
        ledger rebuilds itself by replaying them on construction.
    seal_delay:
        Seconds to wait before sealing; stands in for real network latency
        in live mode. Zero in deterministic mode.
    """

    def __init__(
        self,
        clock: Callable[[], int] | None = None,
        journal: str | os.PathLike | None = None,
        seal_delay: float = 0.0,
        codes: Mapping[str, Any] | None = None,
    ):
        if codes is None:
            from sliceguard.contracts import CODES

            codes = CODES
        self.codes = dict(codes)
        self._clock = clock
        self.seal_delay = seal_delay
        self._accounts: dict[str, Account] = {}
        self._blocks: list[Block] = []
        self._seeds: set[int] = set()
        self.total_supply = 0
        self._lock = threading.RLock()
        self._journal: Path | None = None
        self._seal([], [], timestamp=self._now())
        if journal is not None:
            self._replay(Path(journal))
            self._journal = Path(journal)

    def _now(self) -> int:
        return self._clock() if self._clock else len(self._blocks)

    # -- journal -------------------------------------------------------

    def _replay(self, path: Path) -> None:
        if not path.exists():
            path.parent.mkdir(parents=True, exist_ok=True)
            return
        for line in path.read_text().splitlines():
            if not line.strip():
                continue
            op = json.loads(line)
            if op["op"] == "create_eoa":
                self.create_eoa(op["seed"])
            elif op["op"] == "block":
                self.submit_batch([Transaction.from_dict(t) for t in op["txs"]], timestamp=op["timestamp"])
            else:
                raise LedgerError(f"unknown journal op {op['op']!r}")

    def _log(self, record: dict) -> None:
        if self._journal is None:
            return
        with self._journal.open("ab") as fh:
            fh.write(canonical_json(record) + b"\n")
            fh.flush()
            os.fsync(fh.fileno())

    # -- accounts ------------------------------------------------------

    def create_eoa(self, seed: int) -> Address:
        with self._lock:
            if seed in self._seeds:
                raise AlreadyExists(f"EOA for seed {seed} already exists")
            addr = eoa_address(seed)
            self._seeds.add(seed)
            self._accounts[addr.text] = Account(addr.text, EOA)
            self._log({"op": "create_eoa", "seed": seed})
        return addr

    def get_account(self, address: Address | str) -> Account:
        key = _addr_text(address)
        with self._lock:
            try:
                return copy.deepcopy(self._accounts[key])
            except KeyError:
                raise UnknownAccount(f"no account {key}") from None

    def accounts(self) -> list[Account]:
        with self._lock:
            return [copy.deepcopy(a) for a in self._accounts.values()]

    def balance(self, address: Address | str) -> int:
        return self.get_account(address).balance

    # -- blocks & events -----------------------------------------------

    @property
    def height(self) -> int:
        return len(self._blocks) - 1

    def get_block(self, number: int) -> Block:
        with self._lock:
            if not 0 <= number < len(self._blocks):
                raise UnknownAccount(f"no block {number}")
            return self._blocks[number]

    def blocks(self) -> list[Block]:
        with self._lock:
            return list(self._blocks)

    def get_events(
        self, from_block: int = 0, topic: str | None = None, emitter: Address | str | None = None
    ) -> list[Event]:
        emitter = _addr_text(emitter) if emitter is not None else None
        with self._lock:
            blocks = self._blocks[max(from_block, 0):]
        return [
            e
            for b in blocks
            for e in b.events
            if (topic is None or e.topic == topic) and (emitter is None or e.emitter == emitter)
        ]

    def _seal(self, txs: list[dict], receipts: list[Receipt], timestamp: int) -> Block:
        block = Block(len(self._blocks), timestamp, txs, receipts)
        self._blocks.append(block)
        return block

    # -- transactions --------------------------------------------------

    def deploy_contract(self, deployer: Address | str, code_id: str, init_args: dict | None = None) -> Receipt:
        """Deploy from an EOA using its next nonce; the address is in the receipt."""
        deployer = _addr_text(deployer)
        tx = Transaction(
            deployer,
            None,
            self.get_account(deployer).nonce,
            {"fn": "deploy", "args": {"code_id": code_id, "init": init_args or {}}},
        )
        return self.submit_transaction(tx)

    def call(
        self, sender: Address | str, to: Address | str, fn: str, args: dict | None = None, link_value: int = 0
    ) -> Receipt:
        """Convenience: build a transaction with the sender's next nonce and submit it."""
        with self._lock:
            nonce = self.get_account(sender).nonce
            return self.submit_transaction(Transaction(sender, to, nonce, {"fn": fn, "args": args or {}}, link_value))

    def transfer(self, sender: Address | str, to: Address | str, amount: int) -> Receipt:
        with self._lock:
            nonce = self.get_account(sender).nonce
            return self.submit_transaction(Transaction(sender, to, nonce, None, amount))

    def call_view(self, to: Address | str, fn: str, args: dict | None = None, sender: Address | str | None = None) -> Any:
        """Run a contract function against a scratch copy and discard its effects."""
        to = _addr_text(to)
        sender = _addr_text(sender) if sender is not None else to
        with self._lock:
            ex = _Execution(self, self.height, "")
            try:
                return ex.call(sender, to, fn, args or {}, 0, 0)
            except Revert as exc:
                raise LedgerError(f"view reverted: {exc}") from None

    def submit_transaction(self, tx: Transaction) -> Receipt:
        return self.submit_batch([tx])[0]

    def submit_batch(self, txs: list[Transaction], timestamp: int | None = None) -> list[Receipt]:
        """Execute ``txs`` in order and seal them into one new block.

        Pre-check failures raise before anything is sealed; a later
        transaction in the batch is checked against the state left by the
        earlier ones.
        """
        if not txs:
            raise LedgerError("empty batch")
        if self.seal_delay:
            time.sleep(self.seal_delay)
        with self._lock:
            saved = (copy.deepcopy(self._accounts), self.total_supply)
            number = len(self._blocks)
            receipts: list[Receipt] = []
            events: list[Event] = []
            try:
                for tx in txs:
                    receipt = self._execute(tx, number, len(events))
                    events.extend(receipt.events)
                    receipts.append(receipt)
            except LedgerError:
                self._accounts, self.total_supply = saved
                raise
            ts = self._now() if timestamp is None else timestamp
            self._seal([t.to_dict() for t in txs], receipts, ts)
            self._log({"op": "block", "timestamp": ts, "txs": [t.to_dict() for t in txs]})
        for r in receipts:
            if not r.ok:
                logger.info("tx %s reverted: %s", r.tx_hash[:12], r.error)
        return receipts

    def _execute(self, tx: Transaction, block_number: int, event_offset: int) -> Receipt:
        sender = self._accounts.get(tx.sender)
        if sender is None:
            raise UnknownAccount(f"unknown sender {tx.sender}")
        if sender.kind != EOA:
            raise LedgerError("contract accounts cannot originate transactions")
        if tx.nonce != sender.nonce:
            raise BadNonce(f"expected nonce {sender.nonce}, got {tx.nonce}")
        if sender.balance < tx.link_value:
            raise InsufficientBalance(f"balance {sender.balance} < {tx.link_value}")
        deploying = tx.to is None
        if deploying:
            if tx.call is None or tx.call["fn"] != "deploy":
                raise LedgerError("transaction without recipient must be a deployment")
            code_id = tx.call["args"].get("code_id")
            if code_id not in self.codes:
                raise UnknownCode(f"unknown code_id {code_id!r}")
        elif tx.to not in self._accounts:
            raise UnknownAccount(f"unknown recipient {tx.to}")

        ex = _Execution(self, block_number, tx.hash)
        ex.accounts[tx.sender].nonce += 1
        status, error, value, created = "success", None, None, None
        try:
            if deploying:
                args = tx.call["args"]
                created = ex.deploy(tx.sender, tx.nonce, args["code_id"], args.get("init") or {}, tx.link_value)
                value = created
            else:
                fn = tx.call["fn"] if tx.call else ""
                call_args = tx.call["args"] if tx.call else {}
                value = ex.call(tx.sender, tx.to, fn, call_args, tx.link_value, 0)
            canonical_json(value)
        except Revert as exc:
            status, error, value, created = "failed", str(exc) or "reverted", None, None

        if status == "success":
            self._accounts = ex.accounts
            self.total_supply = ex.total_supply
            events = [
                Event(emitter, topic, data, block_number, event_offset + i, tx.hash)
                for i, (emitter, topic, data) in enumerate(ex.events)
            ]
        else:
            self._accounts[tx.sender].nonce += 1
            events = []
        return Receipt(tx.hash, status, block_number, events, value, error, created)

    # -- invariants ----------------------------------------------------

    def balance_sum(self) -> int:
        with self._lock:
            return sum(a.balance for a in self._accounts.values())

    def state_digest(self) -> str:
        """Hash of all accounts and blocks; equal digests mean identical histories."""
        with self._lock:
            doc = {
                "accounts": [a.to_dict() for a in sorted(self._accounts.values(), key=lambda a: a.address)],
                "blocks": [b.to_dict() for b in self._blocks],
            }
        return hashlib.sha256(canonical_json(doc)).hexdigest()
