"""Off-chain oracle node: job registry, event polling, cron and task pipelines.

Event-triggered jobs are matched against ``OracleRequest`` events read from
the ledger with a persisted ``(block, index)`` cursor. The cursor moves
past an event only after its run has reached a terminal state, so a crash
mid-run replays the event on restart; the oracle contract then rejects the
duplicate fulfill, which keeps fulfillment exactly-once.

A pipeline is an ordered list of :class:`TaskStep`. Each step reads the
run's accumulated ``data`` dict and merges its own output into it.

=============  ===========================================================
kind           config
=============  ===========================================================
http_get       ``path_key`` (default ``api_path``); outputs ``body``
bridge         ``adapter`` name, ``fields`` {adapter field: data key},
               ``require_cid`` output keys that must hold a well-formed CID
ledger_call    ``contract`` or ``contract_key``, ``fn``, ``args``, ``output``
compare        ``left``, ``right``, ``output`` (default ``equal``)
submit_fulfill ``fields`` copied into the fulfill result (default ``cid``)
=============  ===========================================================
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Callable, Mapping

from sliceguard.contracts import ORACLE_REQUEST
from sliceguard.content_store import is_cid_text
from sliceguard.errors import AdapterError, SliceguardError, Unavailable, ValidationError

logger = logging.getLogger(__name__)

TASK_KINDS = ("http_get", "bridge", "ledger_call", "compare", "submit_fulfill")
MAX_BACKOFF = 32

PENDING, SUCCESS, ERRORED = "pending", "success", "errored"


@dataclass
class TaskStep:
    kind: str
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in TASK_KINDS:
            raise ValidationError(f"unknown task kind {self.kind!r}")


@dataclass
class JobSpec:
    """``trigger`` is ``{"type": "event", "topic": ...}`` or ``{"type": "cron", "interval_ticks": n}``."""

    job_id: str
    trigger: dict
    tasks: list[TaskStep]
    params: dict = field(default_factory=dict)

    @property
    def is_cron(self) -> bool:
        return self.trigger.get("type") == "cron"

    def validate(self) -> None:
        if not isinstance(self.job_id, str) or not self.job_id:
            raise ValidationError("job_id must be non-empty")
        kind = self.trigger.get("type")
        if kind == "cron":
            interval = self.trigger.get("interval_ticks")
            if not isinstance(interval, int) or isinstance(interval, bool) or interval < 1:
                raise ValidationError("cron interval_ticks must be an integer >= 1")
        elif kind == "event":
            self.trigger.setdefault("topic", ORACLE_REQUEST)
        else:
            raise ValidationError(f"unknown trigger type {kind!r}")
        if not self.tasks:
            raise ValidationError("job needs at least one task")
        fulfills = [i for i, t in enumerate(self.tasks) if t.kind == "submit_fulfill"]
        if fulfills and (self.is_cron or fulfills != [len(self.tasks) - 1]):
            raise ValidationError("submit_fulfill may only be the last step of an event job")

    def to_dict(self) -> dict:
        return {
            "job_id": self.job_id,
            "trigger": dict(self.trigger),
            "tasks": [asdict(t) for t in self.tasks],
            "params": dict(self.params),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> JobSpec:
        try:
            tasks = [TaskStep(t["kind"], dict(t.get("config") or {})) for t in d["tasks"]]
            return cls(d["job_id"], dict(d["trigger"]), tasks, dict(d.get("params") or {}))
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"malformed job spec: {exc}") from None


@dataclass
class JobRun:
    run_id: int
    job_id: str
    request_id: str | None
    started_at: int
    status: str = PENDING
    step_outputs: list[dict] = field(default_factory=list)
    data: dict = field(default_factory=dict)
    error: str | None = None

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class CronSchedule:
    """Fires on the grid ``start + k*interval``; a late tick coalesces missed slots into one run."""

    interval_ticks: int
    last_fired: int

    def due(self, now: int) -> bool:
        if now < self.last_fired + self.interval_ticks:
            return False
        self.last_fired = now - (now - self.last_fired) % self.interval_ticks
        return True


class OracleNode:
    """One oracle node bound to a ledger and a set of adapters.

    Parameters
    ----------
    ledger:
        A :class:`~sliceguard.ledger.Ledger` or anything with the same
        ``get_events`` / ``call`` / ``call_view`` surface (the HTTP client).
    address:
        The node's EOA; must be authorized on the oracle contract.
    adapters:
        Bridge name -> callable taking and returning a JSON-able dict.
    oracle:
        If given, only events emitted by this oracle contract are served.
    source:
        Anything with ``get_path``; used by ``http_get`` steps.
    cursor_path:
        File holding the last handled event position.
    """

    def __init__(
        self,
        ledger: Any,
        address: str,
        adapters: Mapping[str, Callable[[dict], dict]],
        clock: Callable[[], int],
        oracle: str | None = None,
        source: Any = None,
        cursor_path: str | os.PathLike | None = None,
    ):
        self.ledger = ledger
        self.address = str(address)
        self.adapters = dict(adapters)
        self.clock = clock
        self.oracle = oracle
        self.source = source
        self.jobs: dict[str, JobSpec] = {}
        self.schedules: dict[str, CronSchedule] = {}
        self.runs: list[JobRun] = []
        self._cursor_path = Path(cursor_path) if cursor_path is not None else None
        self.cursor: tuple[int, int] = self._load_cursor()
        self._last_tick: int | None = None
        self._backoff = 0
        self._retry_at: int | None = None

    # -- cursor --------------------------------------------------------

    def _load_cursor(self) -> tuple[int, int]:
        if self._cursor_path is None or not self._cursor_path.exists():
            return (-1, -1)
        d = json.loads(self._cursor_path.read_text())
        return (d["block"], d["index"])

    def _commit_cursor(self, position: tuple[int, int]) -> None:
        self.cursor = position
        if self._cursor_path is not None:
            tmp = self._cursor_path.with_suffix(".tmp")
            tmp.write_text(json.dumps({"block": position[0], "index": position[1]}))
            os.replace(tmp, self._cursor_path)

    # -- jobs ----------------------------------------------------------

    def register_job(self, spec: JobSpec | Mapping) -> str:
        if not isinstance(spec, JobSpec):
            spec = JobSpec.from_dict(spec)
        spec.validate()
        if spec.job_id in self.jobs:
            raise ValidationError(f"job {spec.job_id!r} already registered")
        self.jobs[spec.job_id] = spec
        if spec.is_cron:
            self.schedules[spec.job_id] = CronSchedule(spec.trigger["interval_ticks"], self.clock())
        logger.info("registered job %s", spec.job_id)
        return spec.job_id

    # -- event path ----------------------------------------------------

    def poll_and_dispatch(self, from_block: int | None = None) -> list[JobRun]:
        """Run every unhandled request event whose job is registered here.

        A ledger outage backs off exponentially (in ticks) and leaves the
        cursor untouched, so nothing is skipped.
        """
        now = self.clock()
        if self._retry_at is not None and now < self._retry_at:
            return []
        start = self.cursor[0] if from_block is None else from_block
        try:
            events = self.ledger.get_events(max(start, 0), ORACLE_REQUEST)
        except Unavailable as exc:
            self._backoff = min(max(1, self._backoff * 2), MAX_BACKOFF)
            self._retry_at = now + self._backoff
            logger.warning("ledger unreachable (%s); retrying in %d ticks", exc, self._backoff)
            return []
        self._backoff, self._retry_at = 0, None

        started = []
        for ev in events:
            if ev.position <= self.cursor:
                continue
            if self.oracle is not None and ev.emitter != self.oracle:
                continue
            job = self.jobs.get(ev.data.get("job_id"))
            if job is None or job.is_cron:
                logger.warning("no job %r for request %s", ev.data.get("job_id"), ev.data.get("request_id"))
                self._commit_cursor(ev.position)
                continue
            data = dict(job.params)
            data.update(ev.data)
            data.update(oracle=ev.emitter, event_block=ev.block_number)
            run = self._new_run(job, data, ev.data.get("request_id"))
            started.append(self.execute_run(run))
            self._commit_cursor(ev.position)
        return started

    def _new_run(self, job: JobSpec, data: dict, request_id: str | None) -> JobRun:
        run = JobRun(len(self.runs) + 1, job.job_id, request_id, self.clock(), data=data)
        self.runs.append(run)
        return run

    # -- cron path -----------------------------------------------------

    def tick(self, now: int | None = None) -> list[JobRun]:
        """Fire every cron job due at ``now``. Ticks that go backwards are ignored."""
        now = self.clock() if now is None else now
        if self._last_tick is not None and now < self._last_tick:
            logger.debug("ignoring backwards tick %d < %d", now, self._last_tick)
            return []
        self._last_tick = now
        fired = []
        for job_id, sched in self.schedules.items():
            if sched.due(now):
                fired.append(self.trigger(job_id))
        return fired

    def trigger(self, job_id: str) -> JobRun:
        """Run a job once, now, outside its schedule."""
        job = self.jobs[job_id]
        return self.execute_run(self._new_run(job, dict(job.params), None))

    def run_once(self, now: int | None = None) -> list[JobRun]:
        return self.poll_and_dispatch() + self.tick(now)

    # -- execution -----------------------------------------------------

    def execute_run(self, run: JobRun) -> JobRun:
        if run.status != PENDING:
            raise ValueError(f"run {run.run_id} already {run.status}")
        job = self.jobs[run.job_id]
        for step in job.tasks:
            try:
                out = self._step(step, run)
            except (SliceguardError, KeyError, TypeError, ValueError) as exc:
                run.status, run.error = ERRORED, f"{step.kind}: {exc}"
                logger.warning("run %d (%s) errored at %s: %s", run.run_id, run.job_id, step.kind, exc)
                return run
            run.step_outputs.append(out)
            run.data.update(out)
        run.status = SUCCESS
        return run

    def _step(self, step: TaskStep, run: JobRun) -> dict:
        cfg, data = step.config, run.data
        if step.kind == "http_get":
            if self.source is None:
                raise ValidationError("node has no HTTP source configured")
            body = self.source.get_path(data[cfg.get("path_key", "api_path")])
            return {"body": body.decode("utf-8")}
        if step.kind == "bridge":
            name = cfg["adapter"]
            if name not in self.adapters:
                raise ValidationError(f"unknown adapter {name!r}")
            fields = cfg.get("fields") or {"api_path": "api_path"}
            request = {"id": str(run.run_id), "data": {k: data.get(v) for k, v in fields.items()}, "meta": {}}
            out = self.adapters[name](request)
            if not isinstance(out, Mapping):
                raise AdapterError(f"adapter {name!r} returned {type(out).__name__}")
            for key in cfg.get("require_cid", ()):
                if not is_cid_text(out.get(key)):
                    raise AdapterError(f"adapter {name!r} returned no valid CID in {key!r}")
            return dict(out)
        if step.kind == "ledger_call":
            contract = cfg.get("contract") or data[cfg["contract_key"]]
            value = self.ledger.call_view(contract, cfg["fn"], cfg.get("args") or {})
            return {cfg.get("output", "value"): value}
        if step.kind == "compare":
            return {cfg.get("output", "equal"): data[cfg["left"]] == data[cfg["right"]]}
        if step.kind == "submit_fulfill":
            result = {k: data[k] for k in cfg.get("fields", ["cid"])}
            receipt = self.ledger.call(
                self.address, data["oracle"], "fulfill", {"request_id": data["request_id"], "result": result}
            )
            if not receipt.ok:
                raise SliceguardError(f"fulfill reverted: {receipt.error}")
            return {"tx_hash": receipt.tx_hash, "block_number": receipt.block_number}
        raise ValidationError(step.kind)

    def runs_as_dicts(self) -> list[dict]:
        return [r.to_dict() for r in self.runs]


def snapshot_job(job_id: str = "my-bridge-task") -> JobSpec:
    """Event job: pin the requested document, then fulfill with its CID."""
    return JobSpec(
        job_id,
        {"type": "event", "topic": ORACLE_REQUEST},
        [TaskStep("bridge", {"adapter": "ipfs_pin", "require_cid": ["cid"]}), TaskStep("submit_fulfill", {"fields": ["cid"]})],
    )


def audit_job(validator: str, api_path: str, interval_ticks: int = 10, job_id: str = "integrity-audit") -> JobSpec:
    """Cron job: read the anchored CID from the validator and hand it to the auditor."""
    return JobSpec(
        job_id,
        {"type": "cron", "interval_ticks": interval_ticks},
        [
            TaskStep("ledger_call", {"contract": validator, "fn": "get_stored_hash", "output": "stored_cid"}),
            TaskStep("bridge", {"adapter": "auditor", "fields": {"api_path": "api_path", "hashIpfs": "stored_cid"}}),
        ],
        {"api_path": api_path, "validator": validator},
    )
