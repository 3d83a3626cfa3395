#!/usr/bin/env python3
"""Walk the core clinical exchange end to end, printing each step.

An admin onboards a patient and a provider; the patient grants access; the
provider writes an observation (registry query -> off-chain put -> on-chain
append) and reads the record list back through digest-verified proxies.
"""

from medledger.config import Config
from medledger.service import ServiceCore

cfg = Config(difficulty=4, fixed_clock=True, record_backend="memory", admin_api_key="demo-admin")
core = ServiceCore(cfg, persist=False)
admin = core.authenticate("demo-admin")

print("== onboarding ==")
patient = core.onboard_patient(
    admin,
    "p-001",
    {"name": "Ada Lovelace", "birthDate": "1990-12-10"},
    {"payerName": "Analytical Mutual", "planCode": "AM-1", "coverageTier": "gold"},
)
print(f"patient account {patient['accountAddress']}  (plan ref {patient['planRef'][:16]}...)")
provider = core.onboard_provider(admin, "Dr. Byron")
print(f"provider EOA {provider['address']}")

pat = core.authenticate(patient["apiKey"])
doc = core.authenticate(provider["apiKey"])

print("\n== provider write before any grant ==")
observation = {
    "resourceType": "Observation",
    "id": "obs-1",
    "subjectPatientId": "p-001",
    "attributes": {"code": "heart-rate", "value": 72},
    "authoredAt": 1,
}
try:
    core.write_record(doc, "p-001", observation)
except Exception as err:
    print(f"rejected as expected: {err}")

print("\n== grant, then write ==")
core.change_permission(pat, "p-001", provider["address"], "grant")
result = core.write_record(doc, "p-001", observation)
print(f"appended at entry {result['entryIndex']}, record hash {result['recordHash'][:16]}...")

print("\n== patient reads own records ==")
for row in core.read_records(pat, "p-001"):
    entry, resource = row["entry"], row["resource"]
    print(f"  [{entry['entryIndex']}] {resource['resourceType']:<12} {resource['attributes']}")

report = core.validate_chain()
print(f"\nchain height {core.node.height}, valid={report['valid']}")
print("note: the chain stores only hashes and pointers; attribute values live off-chain")
