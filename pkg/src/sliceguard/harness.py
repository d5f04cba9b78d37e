"""Scenario runner: wires every service together and replays the tamper experiment.

The scenario snapshots one slice's configuration into the validator
contract, lets the cron auditor confirm it, changes the slice's quantum
behind the contract's back, and lets the next audit flag it.

Deterministic mode runs everything in one process on a :class:`VirtualClock`;
two runs with the same config produce byte-identical transcripts. Live mode
starts one ``sliceguard serve`` process per service and only observes.
"""

from __future__ import annotations

import json
import logging
import os
import shutil
import socket
import subprocess
import sys
import tempfile
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Callable

from sliceguard.adapters import AdapterService, IntegrityReport, Verdict
from sliceguard.canonical import canonical_json
from sliceguard.clock import VirtualClock, WallClock
from sliceguard.content_store import ContentStore, cid_of
from sliceguard.errors import SliceguardError, ValidationError
from sliceguard.ledger import Ledger
from sliceguard.oracle_node import JobRun, OracleNode, audit_job, snapshot_job
from sliceguard.slicing import SLICE_ID_RE, SlicingController, slice_path

logger = logging.getLogger(__name__)

DEFAULT_TENANT_ID = "f7257cce-d05e-4f43-a0a6-f19236948f2f"
AUDIT_JOB = "integrity-audit"
ADMIN_SEED, NODE_SEED = 1, 2


@dataclass
class ScenarioConfig:
    mode: str = "deterministic"
    cron_interval_ticks: int = 10
    payment_link: int = 1
    tenant_name: str = "empower-admin"
    tenant_id: str = DEFAULT_TENANT_ID
    slice_id: str = "0x00"
    quantum_initial: int = 100
    quantum_tampered: int = 200
    seed: int = 0
    link_supply: int = 1_000_000
    validator_funding: int = 10
    job_id: str = "my-bridge-task"
    tick_seconds: float = 1.0
    max_ticks: int = 1000

    def validate(self) -> ScenarioConfig:
        if self.mode not in ("deterministic", "live"):
            raise ValidationError(f"mode must be deterministic or live, not {self.mode!r}")
        if self.quantum_initial == self.quantum_tampered:
            raise ValidationError("quantum_tampered must differ from quantum_initial")
        for name in ("cron_interval_ticks", "quantum_initial", "quantum_tampered", "payment_link"):
            value = getattr(self, name)
            if not isinstance(value, int) or isinstance(value, bool) or value < 1:
                raise ValidationError(f"{name} must be an integer >= 1")
        if self.validator_funding < self.payment_link:
            raise ValidationError("validator_funding must cover at least one payment")
        if not SLICE_ID_RE.match(self.slice_id):
            raise ValidationError(f"bad slice_id {self.slice_id!r}")
        if self.tick_seconds <= 0:
            raise ValidationError("tick_seconds must be positive")
        return self

    @property
    def api_path(self) -> str:
        return slice_path(self.tenant_id, self.slice_id)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> ScenarioConfig:
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValidationError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def load(cls, path: str | os.PathLike) -> ScenarioConfig:
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass
class Transcript:
    entries: list[dict] = field(default_factory=list)
    reports: list[IntegrityReport] = field(default_factory=list)

    def record(self, tick: int, component: str, event: str, **data: Any) -> None:
        self.entries.append({"tick": tick, "component": component, "event": event, **data})

    def add_report(self, tick: int, report: IntegrityReport) -> None:
        self.reports.append(report)
        self.record(tick, "auditor", "audit", log=report.log_line, report=report.to_dict())

    @property
    def verdicts(self) -> list[str]:
        return [r.verdict.value for r in self.reports]

    @property
    def log_lines(self) -> list[str]:
        return [e["log"] for e in self.entries if e["event"] == "audit"]

    def to_jsonl(self) -> bytes:
        lines = [canonical_json(e) for e in self.entries]
        lines.append(canonical_json({"final_reports": [r.to_dict() for r in self.reports]}))
        return b"\n".join(lines) + b"\n"

    def write(self, path: str | os.PathLike) -> None:
        Path(path).write_bytes(self.to_jsonl())

    @classmethod
    def from_jsonl(cls, raw: bytes | str) -> Transcript:
        t = cls()
        for line in (raw.decode() if isinstance(raw, bytes) else raw).splitlines():
            row = json.loads(line)
            if "final_reports" in row:
                t.reports = [IntegrityReport.from_dict(r) for r in row["final_reports"]]
            else:
                t.entries.append(row)
        return t


class ScenarioError(SliceguardError):
    """A stage failed. ``transcript`` holds everything recorded up to that point."""

    code = "scenario"

    def __init__(self, stage: str, cause: object, transcript: Transcript):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.transcript = transcript


class _Stages:
    def __init__(self, transcript: Transcript):
        self.transcript = transcript
        self.current = "init"

    def __call__(self, name: str) -> _Stages:
        self.current = name
        return self

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc is not None and not isinstance(exc, ScenarioError):
            raise ScenarioError(self.current, exc, self.transcript) from exc
        return False


# -- shared setup ------------------------------------------------------


def provision(controller: Any, ledger: Any, config: ScenarioConfig, transcript: Transcript, now: Callable[[], int]) -> dict:
    """Create the slice and deploy/fund the contracts. Returns the address book."""
    controller.create_tenant(config.tenant_name, config.tenant_id)
    controller.create_slice(config.tenant_id, config.slice_id, config.quantum_initial)
    transcript.record(now(), "controller", "slice_created", api_path=config.api_path, quantum_ms=config.quantum_initial)

    admin = ledger.create_eoa(ADMIN_SEED).text
    node = ledger.create_eoa(NODE_SEED).text

    def deployed(code_id: str, init: dict) -> str:
        receipt = ledger.deploy_contract(admin, code_id, init)
        if not receipt.ok:
            raise SliceguardError(f"deploying {code_id} reverted: {receipt.error}")
        transcript.record(now(), "ledger", "deployed", code_id=code_id, address=receipt.contract_address, block=receipt.block_number)
        return receipt.contract_address

    def ok(receipt, what: str):
        if not receipt.ok:
            raise SliceguardError(f"{what} reverted: {receipt.error}")
        return receipt

    link = deployed("link_token", {"initial_supply": config.link_supply})
    oracle = deployed("oracle", {"link_token": link, "min_payment": config.payment_link})
    ok(ledger.call(admin, oracle, "set_authorization", {"node": node, "allowed": True}), "authorizing node")
    validator = deployed(
        "validator",
        {"api_path": config.api_path, "job_id": config.job_id, "oracle": oracle, "payment": config.payment_link},
    )
    ok(ledger.call(admin, link, "transfer", {"to": validator, "amount": config.validator_funding}), "funding validator")
    transcript.record(now(), "ledger", "funded", validator=validator, amount=config.validator_funding)
    return {"admin": admin, "node": node, "link": link, "oracle": oracle, "validator": validator}


def node_jobs(config: ScenarioConfig, validator: str) -> list:
    return [snapshot_job(config.job_id), audit_job(validator, config.api_path, config.cron_interval_ticks, AUDIT_JOB)]


def request_snapshot(ledger: Any, book: dict) -> str:
    receipt = ledger.call(book["admin"], book["validator"], "request_snapshot")
    if not receipt.ok:
        raise SliceguardError(f"request_snapshot reverted: {receipt.error}")
    return receipt.return_value


# -- deterministic world -----------------------------------------------


class World:
    """Every service in one process, optionally persisted under ``state_dir``."""

    def __init__(self, config: ScenarioConfig, state_dir: str | os.PathLike | None = None, tick: int = 0):
        self.config = config
        self.state_dir = Path(state_dir) if state_dir is not None else None
        sub = (lambda name: self.state_dir / name) if self.state_dir is not None else (lambda name: None)
        self.clock = VirtualClock(tick)
        self.controller = SlicingController(sub("controller"), clock=self.clock, seed=config.seed)
        self.store = ContentStore(sub("store"))
        self.ledger = Ledger(clock=self.clock, journal=sub("ledger.jsonl"))
        self.adapters = AdapterService(self.controller, self.store, self.clock)
        self.book: dict[str, str] = {}
        self.node: OracleNode | None = None
        self.backlog: list[JobRun] = []

    def boot_node(self) -> OracleNode:
        cursor = self.state_dir / "node_cursor.json" if self.state_dir is not None else None
        self.node = OracleNode(
            self.ledger,
            self.book["node"],
            self.adapters.by_name(),
            self.clock,
            oracle=self.book["oracle"],
            source=self.controller,
            cursor_path=cursor,
        )
        for job in node_jobs(self.config, self.book["validator"]):
            self.node.register_job(job)
        return self.node

    def save(self) -> None:
        if self.state_dir is None:
            return
        doc = {"config": self.config.to_dict(), "addresses": self.book, "tick": self.clock.now()}
        (self.state_dir / "world.json").write_bytes(canonical_json(doc))

    @classmethod
    def open(cls, state_dir: str | os.PathLike) -> World:
        state_dir = Path(state_dir)
        try:
            doc = json.loads((state_dir / "world.json").read_text())
        except FileNotFoundError:
            raise ValidationError(f"{state_dir} holds no saved world (run `scenario run --state-dir` first)") from None
        world = cls(ScenarioConfig.from_dict(doc["config"]), state_dir, doc["tick"])
        world.book = doc["addresses"]
        world.boot_node()
        return world

    def step(self) -> list[JobRun]:
        """Advance one tick and let the node poll and fire cron jobs."""
        self.clock.advance()
        return self.node.run_once()

    def audit_once(self) -> JobRun:
        return self.node.trigger(AUDIT_JOB)

    def snapshot(self) -> JobRun:
        rid = request_snapshot(self.ledger, self.book)
        self.clock.advance()
        runs = [r for r in self.node.poll_and_dispatch() if r.request_id == rid]
        if not runs:
            raise SliceguardError(f"node did not pick up request {rid}")
        return runs[0]


def _audit_report(run: JobRun) -> IntegrityReport:
    if run.status != "success":
        raise SliceguardError(f"audit run {run.run_id} {run.status}: {run.error}")
    return IntegrityReport.from_dict(run.data)


def _run_deterministic(config: ScenarioConfig, state_dir: str | os.PathLike | None) -> Transcript:
    transcript = Transcript()
    stage = _Stages(transcript)
    with stage("boot"):
        if state_dir is not None:
            state_dir = Path(state_dir)
            if state_dir.exists() and any(state_dir.iterdir()):
                raise ValidationError(f"state directory {state_dir} is not empty")
        world = World(config, state_dir)
        now = world.clock.now
        transcript.record(now(), "harness", "boot", mode="deterministic", api_path=config.api_path)
    with stage("provision"):
        world.book = provision(world.controller, world.ledger, config, transcript, now)
    with stage("register_jobs"):
        node = world.boot_node()
        transcript.record(now(), "node", "jobs_registered", jobs=sorted(node.jobs))
    with stage("request_snapshot"):
        rid = request_snapshot(world.ledger, world.book)
        transcript.record(now(), "validator", "snapshot_requested", request_id=rid)
    with stage("fulfill"):
        _drive_until(world, transcript, lambda run: run.request_id == rid)
        stored = world.ledger.call_view(world.book["validator"], "get_stored_hash")
        expected = cid_of(world.controller.get_path(config.api_path)).text
        if stored != expected:
            raise SliceguardError(f"anchored {stored}, document hashes to {expected}")
        transcript.record(now(), "validator", "hash_stored", cid=stored)
    with stage("first_audit"):
        run = _drive_until(world, transcript, lambda r: r.job_id == AUDIT_JOB)
        transcript.add_report(now(), _audit_report(run))
    with stage("tamper"):
        for _ in range(config.cron_interval_ticks // 2):
            world.step()
        world.controller.update_quantum(config.tenant_id, config.slice_id, config.quantum_tampered)
        transcript.record(now(), "controller", "quantum_changed", quantum_ms=config.quantum_tampered)
    with stage("second_audit"):
        run = _drive_until(world, transcript, lambda r: r.job_id == AUDIT_JOB)
        transcript.add_report(now(), _audit_report(run))
    with stage("shutdown"):
        world.save()
        transcript.record(now(), "harness", "shutdown", height=world.ledger.height)
    return transcript


def _drive_until(world: World, transcript: Transcript, wanted: Callable[[JobRun], bool]) -> JobRun:
    """Step the clock until a run matching ``wanted`` finishes.

    Runs finished in the same tick after the match stay queued for the next call.
    """
    limit = world.clock.now() + world.config.max_ticks
    while True:
        while world.backlog:
            run = world.backlog.pop(0)
            if wanted(run):
                return run
        if world.clock.now() >= limit:
            raise SliceguardError(f"nothing happened within {world.config.max_ticks} ticks")
        for run in world.step():
            transcript.record(world.clock.now(), "node", "run", job_id=run.job_id, run_id=run.run_id, status=run.status)
            world.backlog.append(run)


# -- live mode -----------------------------------------------------------


def free_port() -> int:
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


def wait_for_port(port: int, timeout: float = 15.0) -> None:
    deadline = time.monotonic() + timeout
    while time.monotonic() < deadline:
        try:
            with socket.create_connection(("127.0.0.1", port), timeout=0.2):
                return
        except OSError:
            time.sleep(0.05)
    raise SliceguardError(f"nothing listening on port {port} after {timeout}s")


class _Processes:
    def __init__(self, workdir: Path):
        self.workdir = workdir
        self.procs: dict[str, subprocess.Popen] = {}

    def start(self, component: str, port: int, *extra: str, env: dict | None = None) -> str:
        log = open(self.workdir / f"{component}.log", "wb")
        cmd = [sys.executable, "-m", "sliceguard", "serve", component, "--port", str(port), *extra]
        self.procs[component] = subprocess.Popen(cmd, stdout=log, stderr=subprocess.STDOUT, env={**os.environ, **(env or {})})
        wait_for_port(port)
        return f"http://127.0.0.1:{port}"

    def stop_all(self) -> None:
        for proc in self.procs.values():
            proc.terminate()
        for proc in self.procs.values():
            try:
                proc.wait(timeout=10)
            except subprocess.TimeoutExpired:
                proc.kill()


def _run_live(config: ScenarioConfig, workdir: str | os.PathLike | None) -> Transcript:
    from sliceguard.clients import ControllerClient, LedgerClient, NodeClient

    transcript = Transcript()
    stage = _Stages(transcript)
    cleanup = workdir is None
    workdir = Path(workdir or tempfile.mkdtemp(prefix="sliceguard-live-"))
    workdir.mkdir(parents=True, exist_ok=True)
    clock = WallClock(config.tick_seconds)
    procs = _Processes(workdir)
    timeout = config.max_ticks * config.tick_seconds
    try:
        with stage("boot"):
            urls = {}
            for name in ("controller", "store", "ledger"):
                urls[name] = procs.start(name, free_port(), "--state-dir", str(workdir / name))
            urls["adapters"] = procs.start(
                "adapters",
                free_port(),
                env={"SLICEGUARD_CONTROLLER_URL": urls["controller"], "SLICEGUARD_STORE_URL": urls["store"]},
            )
            transcript.record(clock.now(), "harness", "boot", mode="live", api_path=config.api_path)
        controller = ControllerClient(urls["controller"])
        ledger = LedgerClient(urls["ledger"])
        with stage("provision"):
            book = provision(controller, ledger, config, transcript, clock.now)
        with stage("register_jobs"):
            node_config = {
                "ledger": urls["ledger"],
                "controller": urls["controller"],
                "node_address": book["node"],
                "oracle": book["oracle"],
                "adapters": {"ipfs_pin": urls["adapters"] + "/pin", "auditor": urls["adapters"] + "/validate"},
                "jobs": [j.to_dict() for j in node_jobs(config, book["validator"])],
                "tick_seconds": config.tick_seconds,
                "cursor_path": str(workdir / "node_cursor.json"),
            }
            (workdir / "node.json").write_bytes(canonical_json(node_config))
            urls["node"] = procs.start("node", free_port(), "--config", str(workdir / "node.json"))
            node = NodeClient(urls["node"])
            (workdir / "world.json").write_bytes(
                canonical_json({"config": config.to_dict(), "addresses": book, "endpoints": urls})
            )
            transcript.record(clock.now(), "node", "jobs_registered", jobs=sorted(j["job_id"] for j in node.jobs()))
        with stage("request_snapshot"):
            rid = request_snapshot(ledger, book)
            transcript.record(clock.now(), "validator", "snapshot_requested", request_id=rid)
        with stage("fulfill"):
            _poll(lambda: any(r["request_id"] == rid and r["status"] != "pending" for r in node.runs()), timeout)
            stored = ledger.call_view(book["validator"], "get_stored_hash")
            if stored != cid_of(controller.get_path(config.api_path)).text:
                raise SliceguardError(f"anchored {stored} does not match the live document")
            transcript.record(clock.now(), "validator", "hash_stored", cid=stored)
        with stage("first_audit"):
            first = _poll(lambda: _next_audit(node, after_run=0, after_fulfill=True), timeout)
            transcript.add_report(clock.now(), first[1])
        with stage("tamper"):
            controller.update_quantum(config.tenant_id, config.slice_id, config.quantum_tampered)
            transcript.record(clock.now(), "controller", "quantum_changed", quantum_ms=config.quantum_tampered)
        with stage("second_audit"):
            second = _poll(lambda: _next_audit(node, after_run=first[0]), timeout)
            transcript.add_report(clock.now(), second[1])
        with stage("shutdown"):
            transcript.record(clock.now(), "harness", "shutdown", height=ledger.height)
    finally:
        procs.stop_all()
        if cleanup:
            shutil.rmtree(workdir, ignore_errors=True)
    return transcript


def _next_audit(node, after_run: int, after_fulfill: bool = False):
    runs = node.runs()
    if after_fulfill:
        fulfilled = [r["run_id"] for r in runs if r["job_id"] != AUDIT_JOB and r["status"] == "success"]
        if not fulfilled:
            return None
        after_run = max(after_run, fulfilled[0])
    for r in runs:
        if r["job_id"] == AUDIT_JOB and r["run_id"] > after_run and r["status"] == "success":
            return r["run_id"], IntegrityReport.from_dict(r["data"])
    return None


def _poll(fn: Callable[[], Any], timeout: float, interval: float = 0.05) -> Any:
    deadline = time.monotonic() + timeout
    while time.monotonic() < deadline:
        result = fn()
        if result:
            return result
        time.sleep(interval)
    raise SliceguardError(f"timed out after {timeout:.1f}s")


def run_scenario(config: ScenarioConfig | None = None, state_dir: str | os.PathLike | None = None) -> Transcript:
    """Run the snapshot-audit-tamper-audit experiment and return its transcript.

    Raises :class:`ScenarioError` (with the partial transcript) if any stage fails.
    """
    config = (config or ScenarioConfig()).validate()
    if config.mode == "live":
        return _run_live(config, state_dir)
    return _run_deterministic(config, state_dir)


EXIT_CODES = {Verdict.VERIFIED: 0, Verdict.CORRUPTED: 2, Verdict.UNAVAILABLE: 3}
