#!/usr/bin/env python3
"""Prescription round trip with subscribed providers.

Two providers subscribe to the same patient account; a third subscribes to a
topic. A prescription request fans out to the matching feeds exactly once,
and fulfillment by a permissioned provider appends the medication record.
"""

from medledger.config import Config
from medledger.service import ServiceCore

cfg = Config(difficulty=0, fixed_clock=True, record_backend="memory", admin_api_key="demo-admin")
core = ServiceCore(cfg, persist=False)
admin = core.authenticate("demo-admin")

patient = core.onboard_patient(
    admin, "p-007",
    {"name": "James B", "birthDate": "1970-04-13"},
    {"payerName": "Crown Health", "planCode": "C-7", "coverageTier": "platinum"},
)
pat = core.authenticate(patient["apiKey"])
docs = {name: core.onboard_provider(admin, name) for name in ("Dr. M", "Dr. Q", "Dr. R")}
idents = {name: core.authenticate(d["apiKey"]) for name, d in docs.items()}

core.change_permission(pat, "p-007", docs["Dr. M"]["address"], "grant")

core.subscribe(idents["Dr. M"], patient["accountAddress"], None, False)
core.subscribe(idents["Dr. Q"], patient["accountAddress"], None, False)
core.subscribe(idents["Dr. R"], None, "PrescriptionFulfilled", False)

print("== patient requests a prescription ==")
rx = core.request_prescription(pat, "p-007", "med-0042")
print(f"request {rx['requestId']} is {rx['status']}")

for name in docs:
    feed = core.notifications(idents[name], -1)
    topics = [n["event"]["topic"] for n in feed]
    print(f"{name:>6} feed: {topics}")

print("\n== permissioned subscriber fulfills ==")
core.fulfill_prescription(idents["Dr. M"], "p-007", rx["requestId"], {"medicationCode": "med-0042"})
for name in docs:
    feed = core.notifications(idents[name], -1)
    topics = [n["event"]["topic"] for n in feed]
    print(f"{name:>6} feed: {topics}")

print(f"\ndispatch work counter: {core.dispatcher.work_counter} (one unit per matched delivery)")
