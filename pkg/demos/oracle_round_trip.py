"""
One oracle round trip
=====================

A validator contract asks for a snapshot, the node pins the slice document
and answers, and the escrowed LINK moves to the node.
"""
from sliceguard.adapters import AdapterService
from sliceguard.clock import VirtualClock
from sliceguard.content_store import ContentStore
from sliceguard.ledger import Ledger
from sliceguard.oracle_node import OracleNode, snapshot_job
from sliceguard.slicing import SlicingController, slice_path

clock = VirtualClock()
controller = SlicingController(clock=clock)
tenant = controller.create_tenant("empower-admin")
controller.create_slice(tenant.tenant_id, "0x00", quantum_ms=100)
api_path = slice_path(tenant.tenant_id, "0x00")

# Chain: token, oracle gateway, validator.
ledger = Ledger(clock=clock)
admin, node_eoa = ledger.create_eoa(1).text, ledger.create_eoa(2).text
link = ledger.deploy_contract(admin, "link_token", {"initial_supply": 1000}).contract_address
oracle = ledger.deploy_contract(admin, "oracle", {"link_token": link, "min_payment": 1}).contract_address
ledger.call(admin, oracle, "set_authorization", {"node": node_eoa, "allowed": True})
validator = ledger.deploy_contract(
    admin, "validator", {"api_path": api_path, "job_id": "my-bridge-task", "oracle": oracle}
).contract_address
ledger.call(admin, link, "transfer", {"to": validator, "amount": 10})

store = ContentStore()
adapters = AdapterService(controller, store, clock)
node = OracleNode(ledger, node_eoa, adapters.by_name(), clock, oracle=oracle, source=controller)
node.register_job(snapshot_job())

request_id = ledger.call(admin, validator, "request_snapshot").return_value
print("requested:", request_id)

clock.advance()
(run,) = node.run_once()
print("run:", run.status, run.data["cid"])
print("anchored:", ledger.call_view(validator, "get_stored_hash"))
print("node earned:", ledger.balance(node_eoa), "LINK")
