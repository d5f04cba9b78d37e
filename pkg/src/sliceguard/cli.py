"""Command line entry point.

    sliceguard serve <controller|store|ledger|adapters|node> [--port N]
    sliceguard scenario run [--config FILE] [--mode M] [--transcript OUT] [--state-dir DIR]
    sliceguard snapshot request --state-dir DIR
    sliceguard audit once --state-dir DIR
    sliceguard inspect <chain|store|slices> --state-dir DIR

``audit once`` exits 0 on VERIFIED, 2 on CORRUPTED and 3 on UNAVAILABLE.
Usage errors exit 64. With ``--remote``, the commands talk to running
services at the endpoints found in ``SLICEGUARD_*_URL`` (falling back to
the endpoints recorded by a live scenario in ``DIR/world.json``).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import threading
import time
from pathlib import Path

from sliceguard.adapters import IntegrityReport
from sliceguard.content_store import cid_of
from sliceguard.errors import SliceguardError

EX_USAGE = 64
EX_FAILURE = 1
COMPONENTS = ("controller", "store", "ledger", "adapters", "node")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EX_USAGE)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sliceguard", description=__doc__.split("\n\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    serve = sub.add_parser("serve", help="run one service over HTTP")
    serve.add_argument("component", choices=COMPONENTS)
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8000)
    serve.add_argument("--state-dir", type=Path)
    serve.add_argument("--config", type=Path, help="node config (JSON); required for `serve node`")
    serve.add_argument("--seal-delay", type=float, default=0.0, help="ledger: seconds to wait before sealing")

    scenario = sub.add_parser("scenario", help="run the tamper-detection scenario")
    scenario.add_argument("action", choices=("run",))
    scenario.add_argument("--config", type=Path, help="ScenarioConfig as JSON")
    scenario.add_argument("--mode", choices=("deterministic", "live"))
    scenario.add_argument("--seed", type=int)
    scenario.add_argument("--cron-interval", type=int, dest="cron_interval_ticks")
    scenario.add_argument("--tick-seconds", type=float, help="live mode: seconds per tick")
    scenario.add_argument("--transcript", type=Path, help="write the JSON-lines transcript here")
    scenario.add_argument("--state-dir", type=Path, help="persist the final world here")

    for name, actions, help_ in (
        ("snapshot", ("request",), "anchor the current configuration on chain"),
        ("audit", ("once",), "run a single integrity audit now"),
        ("inspect", ("chain", "store", "slices"), "dump chain, store or slice state"),
    ):
        p = sub.add_parser(name, help=help_)
        p.add_argument("action", choices=actions)
        p.add_argument("--state-dir", type=Path, required=True)
        p.add_argument("--remote", action="store_true", help="talk to running services instead")
    return parser


def _print(obj) -> None:
    sys.stdout.write(json.dumps(obj, indent=2, sort_keys=True) + "\n")


# -- serve -------------------------------------------------------------


def _env_url(name: str) -> str:
    url = os.environ.get(f"SLICEGUARD_{name.upper()}_URL")
    if not url:
        raise UsageError(f"SLICEGUARD_{name.upper()}_URL is not set")
    return url


def _configure_service_logging(verbose: bool) -> None:
    handler = logging.StreamHandler(sys.stdout)
    handler.setFormatter(logging.Formatter("%(message)s"))
    audit = logging.getLogger("sliceguard.audit")
    audit.addHandler(handler)
    audit.setLevel(logging.DEBUG if verbose else logging.INFO)
    audit.propagate = False


def build_node_from_config(config: dict):
    """Build an :class:`OracleNode` from a declarative node config."""
    from sliceguard.clients import ControllerClient, LedgerClient, _Client
    from sliceguard.clock import WallClock
    from sliceguard.oracle_node import JobSpec, OracleNode

    class Bridge(_Client):
        def __init__(self, url: str):
            super().__init__()
            self.url = url

        def __call__(self, body: dict) -> dict:
            return self._request("POST", self.url, json=body).json()

    clock = WallClock(float(config.get("tick_seconds", 1.0)))
    node = OracleNode(
        LedgerClient(config["ledger"]),
        config["node_address"],
        {name: Bridge(url) for name, url in config.get("adapters", {}).items()},
        clock,
        oracle=config.get("oracle"),
        source=ControllerClient(config["controller"]) if config.get("controller") else None,
        cursor_path=config.get("cursor_path"),
    )
    for job in config.get("jobs", []):
        node.register_job(JobSpec.from_dict(job))
    return node


def cmd_serve(args) -> int:
    import uvicorn

    from sliceguard import web

    _configure_service_logging(args.verbose)
    state = args.state_dir
    if args.component == "controller":
        from sliceguard.slicing import SlicingController

        app = web.controller_app(SlicingController(state))
    elif args.component == "store":
        from sliceguard.content_store import ContentStore

        app = web.store_app(ContentStore(state))
    elif args.component == "ledger":
        from sliceguard.ledger import Ledger

        journal = state / "ledger.jsonl" if state is not None else None
        app = web.ledger_app(Ledger(journal=journal, seal_delay=args.seal_delay))
    elif args.component == "adapters":
        from sliceguard.adapters import AdapterService
        from sliceguard.clients import ControllerClient, StoreClient

        service = AdapterService(ControllerClient(_env_url("controller")), StoreClient(_env_url("store")))
        app = web.adapters_app(service)
    else:
        if args.config is None:
            raise UsageError("`serve node` needs --config")
        node = build_node_from_config(json.loads(args.config.read_text()))
        lock = threading.Lock()
        app = web.node_app(node, lock)
        tick_seconds = node.clock.tick_seconds

        def loop():
            while True:
                with lock:
                    try:
                        node.run_once()
                    except Exception:  # keep the dispatcher alive; the run log has details
                        logging.getLogger("sliceguard.node").exception("dispatch failed")
                time.sleep(tick_seconds / 4)

        threading.Thread(target=loop, daemon=True, name="dispatcher").start()
    access_log = args.component == "adapters"
    uvicorn.run(app, host=args.host, port=args.port, log_level="info" if access_log else "warning", access_log=access_log)
    return 0


# -- scenario ----------------------------------------------------------


def cmd_scenario(args) -> int:
    from sliceguard.harness import ScenarioConfig, ScenarioError, run_scenario

    config = ScenarioConfig.load(args.config) if args.config else ScenarioConfig()
    for name in ("mode", "seed", "cron_interval_ticks", "tick_seconds"):
        value = getattr(args, name)
        if value is not None:
            setattr(config, name, value)
    try:
        transcript = run_scenario(config, args.state_dir)
    except ScenarioError as exc:
        print(f"scenario failed at stage {exc.stage}: {exc}", file=sys.stderr)
        if args.transcript:
            exc.transcript.write(args.transcript)
        return EX_FAILURE
    if args.transcript:
        transcript.write(args.transcript)
    for line in transcript.log_lines:
        print(line)
    print("verdicts:", " ".join(transcript.verdicts))
    return 0


# -- world commands --------------------------------------------------------


def _remote(state_dir: Path) -> dict:
    try:
        doc = json.loads((state_dir / "world.json").read_text())
    except FileNotFoundError:
        doc = {}
    endpoints = dict(doc.get("endpoints", {}))
    for name in COMPONENTS:
        url = os.environ.get(f"SLICEGUARD_{name.upper()}_URL")
        if url:
            endpoints[name] = url
    return {"addresses": doc.get("addresses", {}), "endpoints": endpoints}


def _report_exit(report: IntegrityReport) -> int:
    from sliceguard.harness import EXIT_CODES

    print(report.log_line)
    _print(report.to_dict())
    return EXIT_CODES[report.verdict]


def cmd_audit(args) -> int:
    from sliceguard.harness import AUDIT_JOB, World

    if args.remote:
        from sliceguard.clients import NodeClient

        run = NodeClient(_endpoint(args.state_dir, "node")).trigger(AUDIT_JOB)
        status, error, data = run["status"], run["error"], run["data"]
    else:
        run = World.open(args.state_dir).audit_once()
        status, error, data = run.status, run.error, run.data
    if status != "success":
        print(f"audit run {status}: {error}", file=sys.stderr)
        return EX_FAILURE
    return _report_exit(IntegrityReport.from_dict(data))


def _endpoint(state_dir: Path, name: str) -> str:
    url = _remote(state_dir)["endpoints"].get(name)
    if not url:
        raise UsageError(f"no endpoint for {name}; set SLICEGUARD_{name.upper()}_URL")
    return url


def cmd_snapshot(args) -> int:
    from sliceguard.harness import World, request_snapshot

    if args.remote:
        from sliceguard.clients import LedgerClient

        remote = _remote(args.state_dir)
        rid = request_snapshot(LedgerClient(_endpoint(args.state_dir, "ledger")), remote["addresses"])
        _print({"request_id": rid})
        return 0
    world = World.open(args.state_dir)
    run = world.snapshot()
    world.save()
    if run.status != "success":
        print(f"snapshot run {run.status}: {run.error}", file=sys.stderr)
        return EX_FAILURE
    _print({"request_id": run.request_id, "cid": run.data["cid"], "tick": world.clock.now()})
    return 0


def cmd_inspect(args) -> int:
    from sliceguard.harness import World

    if args.remote:
        from sliceguard.clients import ControllerClient, LedgerClient, StoreClient

        ledger = LedgerClient(_endpoint(args.state_dir, "ledger"))
        store = StoreClient(_endpoint(args.state_dir, "store"))
        controller = ControllerClient(_endpoint(args.state_dir, "controller"))
    else:
        world = World.open(args.state_dir)
        ledger, store, controller = world.ledger, world.store, world.controller

    if args.action == "chain":
        blocks = ledger.blocks()
        requests = [e.to_dict() for b in blocks for e in b.events if e.topic == "OracleRequest"]
        fulfills = [
            {"block": b.number, "tx": tx, "status": r.status}
            for b in blocks
            for tx, r in zip(b.transactions, b.receipts)
            if (tx.get("call") or {}).get("fn") == "fulfill"
        ]
        _print(
            {
                "height": len(blocks) - 1,
                "oracle_requests": requests,
                "fulfill_transactions": fulfills,
                "hashes_stored": [e.data for b in blocks for e in b.events if e.topic == "HashStored"],
            }
        )
    elif args.action == "store":
        pinned = store.pinned()
        _print({"objects": [{"cid": c, "pinned": c in pinned} for c in store.cids()]})
    else:
        rows = []
        for path in controller.slice_paths():
            body = controller.get_path(path)
            rows.append({"api_path": path, "document": json.loads(body), "cid": cid_of(body).text})
        _print({"slices": rows})
    return 0


HANDLERS = {
    "serve": cmd_serve,
    "scenario": cmd_scenario,
    "audit": cmd_audit,
    "snapshot": cmd_snapshot,
    "inspect": cmd_inspect,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    if args.command != "serve":
        # commands echo audit lines themselves; keep them off stderr too
        audit = logging.getLogger("sliceguard.audit")
        audit.propagate = args.verbose
        audit.addHandler(logging.NullHandler())
    try:
        return HANDLERS[args.command](args)
    except UsageError as exc:
        print(f"sliceguard: {exc}", file=sys.stderr)
        return EX_USAGE
    except SliceguardError as exc:
        print(f"sliceguard: {exc}", file=sys.stderr)
        return EX_FAILURE


if __name__ == "__main__":
    sys.exit(main())
