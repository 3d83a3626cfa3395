"""Benchmark harnesses quantifying the two scalability claims.

``flyweight``: onboarding N patients over K distinct insurance plans with the
interning store keeps plan-attributable storage proportional to K; the inline
baseline duplicates the descriptor per patient.  Both modes run on a fresh
in-memory chain at difficulty 0 and report exact storage bytes and gas.

``pubsub``: with subscriptions, per-block dispatch work equals the number of
(event, matching subscriber) pairs; the polling baseline scans every watched
account for every provider on every block.  Both consume the same mined chain
so the counters are directly comparable.
"""

from __future__ import annotations

import time

from .canonical import canonical_size
from .config import Config
from .contracts import SYS_FACTORY, SYS_PLAN_STORE, SYS_REGISTRY, plan_ref_of
from .node import ChainNode
from .pubsub import Dispatcher, PollingWatcher, SubscriptionFilter


def _bench_config() -> Config:
    return Config(
        difficulty=0,
        fixed_clock=True,
        auto_mine_threshold=0,
        allow_empty_blocks=True,
        block_max_txs=100_000,
        record_backend="memory",
    )


def _plan_descriptor(i: int) -> dict:
    return {"payerName": f"payer-{i}", "planCode": f"PLAN-{i:04d}", "coverageTier": "standard"}


def _mine_all(node: ChainNode) -> list:
    receipts = []
    while len(node.mempool):
        block = node.mine()
        receipts.extend(node.receipts[tx.id] for tx in block.transactions)
    return receipts


def run_flyweight_bench(patients: int, plans: int, use_flyweight: bool) -> dict:
    node = ChainNode.bootstrap(_bench_config(), persist=False)
    cfg = node.config
    registry = cfg.system_addresses[SYS_REGISTRY]
    plan_store = cfg.system_addresses[SYS_PLAN_STORE]
    descriptors = [_plan_descriptor(i) for i in range(plans)]
    started = time.monotonic()
    gas_total = 0

    if use_flyweight:
        for d in descriptors:
            node.submit_call(cfg.admin_label, plan_store, "intern", {"descriptor": d})
        gas_total += sum(r.gas_used for r in _mine_all(node))

    # phase 1: create all patient accounts through the registry
    for i in range(patients):
        node.submit_call(cfg.admin_label, registry, "lookupOrCreate", {"patientId": f"p-{i:05d}"})
    receipts = _mine_all(node)
    assert all(r.success for r in receipts)
    gas_total += sum(r.gas_used for r in receipts)
    accounts = [r.return_value for r in receipts]

    # phase 2: bind owners, then attach the plan (shared ref vs inline copy)
    owners = []
    for i, account in enumerate(accounts):
        label = f"patient:p-{i:05d}"
        owners.append(node.create_eoa(label))
        node.submit_call(cfg.admin_label, account, "bindOwner", {"owner": owners[i]})
    gas_total += sum(r.gas_used for r in _mine_all(node))

    for i, account in enumerate(accounts):
        descriptor = descriptors[i % plans]
        extrinsic = {"memberNumber": f"M-{i:05d}", "groupCode": f"G-{i % 7}"}
        if use_flyweight:
            args = {"planRef": plan_ref_of(descriptor), "extrinsic": extrinsic}
            node.submit_call(f"patient:p-{i:05d}", account, "setInsurancePlan", args)
        else:
            args = {"descriptor": descriptor, "extrinsic": extrinsic}
            node.submit_call(f"patient:p-{i:05d}", account, "setInsurancePlanInline", args)
    receipts = _mine_all(node)
    assert all(r.success for r in receipts)
    gas_total += sum(r.gas_used for r in receipts)

    # Plan-attributable bytes = canonical size of every stored descriptor
    # (refCount bookkeeping excluded so the metric is exact in both modes).
    if use_flyweight:
        store_storage = node.world.accounts[plan_store].storage
        plan_entries = [v for k, v in store_storage.items() if k.startswith("plan:")]
        plan_bytes = sum(canonical_size(v["descriptor"]) for v in plan_entries)
        stored_descriptors = len(plan_entries)
    else:
        inline = [
            node.world.accounts[a].storage["plan_inline"]
            for a in accounts
            if "plan_inline" in node.world.accounts[a].storage
        ]
        plan_bytes = sum(canonical_size(v) for v in inline)
        stored_descriptors = len(inline)

    return {
        "mode": "flyweight" if use_flyweight else "no-flyweight",
        "patients": patients,
        "plans": plans,
        "storedDescriptors": stored_descriptors,
        "planBytes": plan_bytes,
        "gasTotal": gas_total,
        "blocks": len(node.blocks),
        "wallSeconds": round(time.monotonic() - started, 3),
    }


def run_pubsub_bench(providers: int, blocks: int, events: int, mode: str = "both") -> dict:
    """mode: "both" | "pubsub" | "polling"."""
    node = ChainNode.bootstrap(_bench_config(), persist=False)
    cfg = node.config
    registry = cfg.system_addresses[SYS_REGISTRY]
    factory = cfg.system_addresses[SYS_FACTORY]

    provider_eoas = []
    for i in range(providers):
        eoa = node.create_eoa(f"provider:bench-{i:04d}")
        provider_eoas.append(eoa)
        node.submit_call(
            cfg.admin_label, factory, "create",
            {"userType": "provider", "params": {"name": f"bench-{i:04d}", "eoa": eoa}},
        )
    _mine_all(node)

    for i in range(providers):
        node.submit_call(cfg.admin_label, registry, "lookupOrCreate", {"patientId": f"watched-{i:04d}"})
    receipts = _mine_all(node)
    accounts = [r.return_value for r in receipts]
    patient_labels = []
    for i, account in enumerate(accounts):
        label = f"patient:watched-{i:04d}"
        patient_labels.append(label)
        owner = node.create_eoa(label)
        node.submit_call(cfg.admin_label, account, "bindOwner", {"owner": owner})
    _mine_all(node)

    # provider i watches exactly patient i, in both dispatch models
    dispatcher = Dispatcher()
    watcher = PollingWatcher()
    for i, account in enumerate(accounts):
        dispatcher.register_subscriber(provider_eoas[i])
        dispatcher.subscribe(provider_eoas[i], SubscriptionFilter(account_address=account), node.height)
        watcher.watch(provider_eoas[i], account)
    dispatcher.cursor = node.height  # setup blocks predate every subscription

    # mine exactly `blocks` blocks carrying `events` prescription requests
    base, extra = divmod(events, blocks)
    request_no = 0
    height_receipts = []
    for b in range(blocks):
        for _ in range(base + (1 if b < extra else 0)):
            i = request_no % providers
            node.submit_call(
                patient_labels[i], accounts[i], "requestPrescription",
                {"medicationCode": f"med-{request_no:05d}"},
            )
            request_no += 1
        block = node.mine()
        height_receipts.append((block.height, [node.receipts[tx.id] for tx in block.transactions]))

    result = {
        "providers": providers,
        "blocks": blocks,
        "events": events,
        "pubsubWork": None,
        "pubsubSeconds": None,
        "deliveries": None,
        "pollingScans": None,
        "pollingSeconds": None,
        "ratio": None,
    }

    if mode in ("both", "pubsub"):
        started = time.monotonic()
        delivered = 0
        for height, receipts in height_receipts:
            delivered += dispatcher.dispatch_block(height, receipts)
        result["pubsubSeconds"] = round(time.monotonic() - started, 4)
        result["pubsubWork"] = dispatcher.work_counter
        result["deliveries"] = delivered

    if mode in ("both", "polling"):
        started = time.monotonic()
        for _height, receipts in height_receipts:
            watcher.poll_block(receipts)
        result["pollingSeconds"] = round(time.monotonic() - started, 4)
        result["pollingScans"] = watcher.scan_counter

    if mode == "both" and result["pubsubWork"]:
        result["ratio"] = round(result["pollingScans"] / result["pubsubWork"], 2)
    return result


def write_csv(path: str, rows: list[dict]) -> None:
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)


def format_table(rows: list[dict]) -> str:
    if not rows:
        return "(no rows)"
    columns = list(rows[0].keys())
    widths = {c: max(len(c), *(len(str(r.get(c))) for r in rows)) for c in columns}
    lines = ["  ".join(c.ljust(widths[c]) for c in columns)]
    lines.append("  ".join("-" * widths[c] for c in columns))
    for r in rows:
        lines.append("  ".join(str(r.get(c)).ljust(widths[c]) for c in columns))
    return "\n".join(lines)
