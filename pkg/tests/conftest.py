from dataclasses import dataclass

import pytest

from sliceguard.ledger import Ledger

SUPPLY = 1_000_000
DEFAULT_PATH = "/api/v1/tenants/f7257cce-d05e-4f43-a0a6-f19236948f2f/slices/0x00"
DEFAULT_TENANT = "f7257cce-d05e-4f43-a0a6-f19236948f2f"


@dataclass
class Chain:
    ledger: Ledger
    owner: str
    node: str
    stranger: str
    link: str
    oracle: str
    validator: str


def deploy_chain(ledger: Ledger, api_path: str = DEFAULT_PATH, fund: int = 10, min_payment: int = 1) -> Chain:
    owner = ledger.create_eoa(1).text
    node = ledger.create_eoa(2).text
    stranger = ledger.create_eoa(3).text
    link = ledger.deploy_contract(owner, "link_token", {"initial_supply": SUPPLY}).contract_address
    oracle = ledger.deploy_contract(owner, "oracle", {"link_token": link, "min_payment": min_payment}).contract_address
    assert ledger.call(owner, oracle, "set_authorization", {"node": node, "allowed": True}).ok
    validator = ledger.deploy_contract(
        owner, "validator", {"api_path": api_path, "job_id": "my-bridge-task", "oracle": oracle}
    ).contract_address
    if fund:
        assert ledger.call(owner, link, "transfer", {"to": validator, "amount": fund}).ok
    return Chain(ledger, owner, node, stranger, link, oracle, validator)


@pytest.fixture
def chain() -> Chain:
    return deploy_chain(Ledger())


# -- acceptance reporting ------------------------------------------------------

_criteria: dict[str, list[str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(label): acceptance criterion covered by this test")


def pytest_runtest_logreport(report):
    marker = dict(report.user_properties).get("criterion")
    if marker is None:
        return
    if report.when == "call" or report.outcome != "passed":
        _criteria.setdefault(marker, []).append(report.outcome)


def pytest_collection_modifyitems(items):
    for item in items:
        mark = item.get_closest_marker("criterion")
        if mark is not None:
            item.user_properties.append(("criterion", mark.args[0]))


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for label in sorted(_criteria, key=lambda s: int(s.split(".")[0])):
        ok = all(o == "passed" for o in _criteria[label])
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {label}")
