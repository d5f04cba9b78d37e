"""Acceptance suite. Each test carries a ``criterion`` marker; the run ends
with one PASS/FAIL line per criterion (see ``conftest.py``).

Run just this file with ``pytest tests/test_acceptance.py``.
"""

import hashlib
import json
import random
import re
import time

import base58
import pytest

from sliceguard.adapters import AdapterService
from sliceguard.content_store import BASE58_ALPHABET, cid_of
from sliceguard.errors import AdapterError, LedgerError
from sliceguard.harness import AUDIT_JOB, ScenarioConfig, Transcript, World, provision, request_snapshot, run_scenario
from sliceguard.ledger import Ledger, Transaction
from sliceguard.oracle_node import CronSchedule

from conftest import deploy_chain

C1 = pytest.mark.criterion("1. scenario reproduction: [VERIFIED, CORRUPTED], log grammar, < 5 s")
C2 = pytest.mark.criterion("2. cron fidelity: audits at ticks 10, 20, 30 of 35")
C3 = pytest.mark.criterion("3. CID correctness: golden value, invariants, byte flips")
C4 = pytest.mark.criterion("4. exactly-once fulfillment under replay and crash/restart")
C5 = pytest.mark.criterion("5. tamper completeness and canonicalization")
C6 = pytest.mark.criterion("6. error taxonomy: UNAVAILABLE on shutdown, no ledger change on adapter failure")
C7 = pytest.mark.criterion("7. determinism: byte-identical transcripts")
C8 = pytest.mark.criterion("8. access control: only the oracle stores a hash")

# sha256("") encoded independently (coreutils sha256sum + PyPI base58) before the build
GOLDEN_EMPTY_CID = "QmdfTbBqBPQ7VNxZEYEj14VmRuZBkqFbiwReogJgS1zR1n"
SUCCESS_RE = re.compile(r"^SUCCESS: Rota: (/api/v1/tenants/[0-9a-f-]{36}/slices/0x00) verificada!$")
ERROR_RE = re.compile(r"^ERROR: Rota: (/api/v1/tenants/[0-9a-f-]{36}/slices/0x00) corrompida!$")


def reference_cid(data: bytes) -> str:
    return base58.b58encode(b"\x12\x20" + hashlib.sha256(data).digest()).decode()


def make_world(state_dir=None, **config) -> World:
    """Provisioned world with the snapshot job fulfilled at tick 1."""
    world = World(ScenarioConfig(**config).validate(), state_dir)
    world.book = provision(world.controller, world.ledger, world.config, Transcript(), world.clock.now)
    world.boot_node()
    world.save()
    return world


def anchor(world: World) -> str:
    rid = request_snapshot(world.ledger, world.book)
    world.step()
    return rid


def hash_writes(ledger, validator) -> list[str]:
    return [e.data["request_id"] for e in ledger.get_events(0, "HashStored", validator)]


def payouts(ledger, oracle) -> list[str]:
    return [e.data["request_id"] for e in ledger.get_events(0, "OracleFulfilled", oracle)]


# -- 1 ----------------------------------------------------------------------


@C1
def test_scenario_reproduction():
    start = time.perf_counter()
    t = run_scenario()
    elapsed = time.perf_counter() - start
    assert t.verdicts == ["VERIFIED", "CORRUPTED"]
    ok, bad = t.log_lines
    assert SUCCESS_RE.match(ok) and ERROR_RE.match(bad)
    assert SUCCESS_RE.match(ok).group(1) == ERROR_RE.match(bad).group(1)
    assert elapsed < 5.0


# -- 2 ----------------------------------------------------------------------


@C2
def test_cron_fires_exactly_on_the_grid():
    world = make_world(cron_interval_ticks=10)
    anchor(world)
    fired = []
    while world.clock.now() < 35:
        fired += [world.clock.now() for r in world.step() if r.job_id == AUDIT_JOB]
    assert world.clock.now() == 35
    assert fired == [10, 20, 30]


@C2
def test_cron_schedule_alone():
    sched = CronSchedule(10, 0)
    assert [t for t in range(36) if sched.due(t)] == [10, 20, 30]


# -- 3 ----------------------------------------------------------------------


@C3
def test_golden_empty_cid():
    assert reference_cid(b"") == GOLDEN_EMPTY_CID
    assert cid_of(b"").text == GOLDEN_EMPTY_CID


@C3
def test_random_inputs_hold_invariants():
    rng = random.Random(20260)
    for _ in range(1000):
        data = rng.randbytes(rng.randrange(0, 512))
        text = cid_of(data).text
        assert len(text) == 46 and text.startswith("Qm")
        assert set(text) <= set(BASE58_ALPHABET)
        assert text == reference_cid(data)


@C3
def test_any_single_byte_flip_changes_cid():
    rng = random.Random(7)
    small = b"\x00\x7f\x80\xff"
    base = cid_of(small).text
    for i in range(len(small)):
        for v in range(256):
            if v != small[i]:
                assert cid_of(small[:i] + bytes([v]) + small[i + 1 :]).text != base
    for _ in range(1000):
        data = bytearray(rng.randbytes(rng.randrange(1, 256)))
        before = cid_of(bytes(data)).text
        data[rng.randrange(len(data))] ^= rng.randrange(1, 256)
        assert cid_of(bytes(data)).text != before


# -- 4 ----------------------------------------------------------------------


@C4
def test_replayed_fulfill_pays_and_writes_once():
    world = make_world()
    led, book = world.ledger, world.book
    rid = anchor(world)
    (fulfill_tx,) = [
        tx for b in led.blocks() for tx in b.transactions if (tx.get("call") or {}).get("fn") == "fulfill"
    ]
    tx = Transaction.from_dict(fulfill_tx)
    args = tx.call["args"]
    for _ in range(100):
        # the identical transaction is stale; a re-signed copy reverts
        with pytest.raises(LedgerError):
            led.submit_transaction(tx)
        assert led.call(book["node"], book["oracle"], "fulfill", args).status == "failed"
    assert hash_writes(led, book["validator"]) == [rid]
    assert payouts(led, book["oracle"]) == [rid]
    assert led.balance(book["node"]) == world.config.payment_link
    assert led.balance_sum() == led.total_supply == world.config.link_supply


class SimulatedCrash(Exception):
    pass


@C4
def test_crash_between_fulfill_and_cursor_commit(tmp_path):
    world = make_world(tmp_path)
    led, book = world.ledger, world.book
    rids = [request_snapshot(led, book) for _ in range(3)]
    commits = []
    real = world.node._commit_cursor

    def crash_on_second(pos):
        if len(commits) == 1:
            raise SimulatedCrash  # second fulfill is on chain, cursor not yet moved
        real(pos)
        commits.append(pos)

    world.node._commit_cursor = crash_on_second
    world.clock.advance()
    with pytest.raises(SimulatedCrash):
        world.node.run_once()
    assert len(payouts(led, book["oracle"])) == 2
    world.save()

    restarted = World.open(tmp_path)
    for _ in range(3):
        restarted.step()
    led = restarted.ledger
    assert sorted(hash_writes(led, book["validator"])) == sorted(rids)
    assert sorted(payouts(led, book["oracle"])) == sorted(rids)
    assert led.get_account(book["oracle"]).state["escrow"] == {}
    assert led.balance(book["node"]) == 3 * world.config.payment_link
    assert led.balance_sum() == led.total_supply == world.config.link_supply


# -- 5 ----------------------------------------------------------------------

FIELD_MUTATIONS = {
    "tenant_id": "00000000-0000-4000-8000-000000000000",
    "slice_id": "0x01",
    "quantum_ms": 200,
    "wtps": ["00:0d:b9:2f:56:64"],
    "created_at": 42,
}


def audit_verdict(world: World) -> str:
    run = world.audit_once()
    assert run.status == "success", run.error
    return run.data["verdict"]


@C5
def test_every_field_is_covered():
    from dataclasses import fields

    from sliceguard.slicing import SliceConfig

    assert {f.name for f in fields(SliceConfig)} == set(FIELD_MUTATIONS)


@C5
@pytest.mark.parametrize("name", sorted(FIELD_MUTATIONS))
def test_field_mutation_is_corrupted(tmp_path, name):
    world = make_world(tmp_path)
    anchor(world)
    assert audit_verdict(world) == "VERIFIED"
    path = world.controller.tenant_file(world.config.tenant_id)
    doc = json.loads(path.read_bytes())
    doc["slices"][world.config.slice_id][name] = FIELD_MUTATIONS[name]
    path.write_text(json.dumps(doc))
    world.controller.reload()
    assert audit_verdict(world) == "CORRUPTED"


class Reformatted:
    """Serves the real document re-serialized with other whitespace and key order."""

    def __init__(self, controller, style):
        self.controller, self.style = controller, style

    def get_path(self, api_path):
        doc = json.loads(self.controller.get_path(api_path))
        return self.style(doc).encode()


STYLES = [
    lambda d: json.dumps(d, indent=4),
    lambda d: json.dumps(d, indent="\t", sort_keys=True) + "\n",
    lambda d: json.dumps(dict(reversed(list(d.items()))), separators=(" , ", " : ")),
    lambda d: "\r\n  " + json.dumps(d) + "  \r\n",
]


@C5
@pytest.mark.parametrize("style", range(len(STYLES)))
def test_whitespace_reserialization_is_verified(style):
    world = make_world()
    anchor(world)
    svc = AdapterService(Reformatted(world.controller, STYLES[style]), world.store, world.clock)
    world.node.adapters["auditor"] = svc.validate
    assert audit_verdict(world) == "VERIFIED"


@C5
def test_pretty_printed_tenant_file_is_verified(tmp_path):
    world = make_world(tmp_path)
    anchor(world)
    path = world.controller.tenant_file(world.config.tenant_id)
    path.write_text(json.dumps(json.loads(path.read_bytes()), indent=2))
    world.controller.reload()
    assert audit_verdict(world) == "VERIFIED"


# -- 6 ----------------------------------------------------------------------


@C6
def test_controller_shutdown_mid_audit_is_unavailable():
    world = make_world()
    anchor(world)
    real = world.node.adapters["auditor"]

    def shut_down_then_audit(body):
        world.controller.shutdown()  # after the stored hash was read on chain
        return real(body)

    world.node.adapters["auditor"] = shut_down_then_audit
    assert audit_verdict(world) == "UNAVAILABLE"
    world.node.adapters["auditor"] = real
    assert audit_verdict(world) == "UNAVAILABLE"
    world.controller.start()
    assert audit_verdict(world) == "VERIFIED"


@C6
@pytest.mark.parametrize("failure", ["adapter_raises", "controller_down", "garbage_payload"])
def test_adapter_failure_leaves_ledger_unchanged(failure):
    world = make_world()
    led = world.ledger
    if failure == "adapter_raises":

        def broken(_body):
            raise AdapterError("HTTP 500 from bridge")

        world.node.adapters["ipfs_pin"] = broken
    elif failure == "controller_down":
        world.controller.shutdown()
    else:
        world.node.adapters["ipfs_pin"] = lambda _body: {"cid": "not-a-cid"}
    request_snapshot(led, world.book)
    height, digest = led.height, led.state_digest()
    runs = world.step()
    assert [r.status for r in runs] == ["errored"]
    assert led.height == height and led.state_digest() == digest
    assert led.call_view(world.book["validator"], "get_stored_hash") is None


# -- 7 ----------------------------------------------------------------------


@C7
def test_transcripts_are_byte_identical():
    assert run_scenario().to_jsonl() == run_scenario().to_jsonl()


@C7
def test_transcript_files_are_byte_identical(tmp_path):
    from sliceguard.cli import main

    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    assert main(["scenario", "run", "--transcript", str(a), "--state-dir", str(tmp_path / "wa")]) == 0
    assert main(["scenario", "run", "--transcript", str(b), "--state-dir", str(tmp_path / "wb")]) == 0
    assert a.read_bytes() == b.read_bytes()


# -- 8 ----------------------------------------------------------------------

EXTRA_EOAS = (4, 5, 6, 7, 8)


def callers(chain):
    eoas = [chain.owner, chain.node, chain.stranger] + [chain.ledger.create_eoa(s).text for s in EXTRA_EOAS]
    return eoas, [chain.link, chain.oracle, chain.validator]


@C8
def test_store_hash_caller_enumeration():
    cid = cid_of(b"anchored").text
    probe = deploy_chain(Ledger())
    eoas, contracts = callers(probe)
    outcomes = {}
    for who in eoas + contracts:
        for entry in ("direct", "direct_with_request", "via_fulfill"):
            chain = deploy_chain(Ledger())
            callers(chain)
            led = chain.ledger
            rid = led.call(chain.owner, chain.validator, "request_snapshot").return_value
            if entry == "via_fulfill":
                to, fn, args = chain.oracle, "fulfill", {"request_id": rid, "result": {"cid": cid}}
            else:
                to, fn = chain.validator, "store_hash"
                args = {"cid": cid, "request_id": rid} if entry == "direct_with_request" else {"cid": cid}
            try:
                ok = led.call(who, to, fn, args).ok
            except LedgerError:
                ok = False  # contract accounts cannot originate transactions
            stored = led.call_view(chain.validator, "get_stored_hash")
            assert (stored == cid) == ok
            outcomes[(who, entry)] = ok
    assert len(outcomes) == 3 * 11
    # the only success: the authorized node fulfilling, so the oracle calls store_hash
    assert {k for k, ok in outcomes.items() if ok} == {(probe.node, "via_fulfill")}
