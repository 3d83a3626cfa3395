import copy
import hashlib
import random

import pytest

from medledger.canonical import canonical_json
from medledger.errors import DuplicateLabelError, OutOfGasError, RevertError
from medledger.ledger import make_call_contract, make_create_contract, make_transfer
from medledger.node import ChainNode
from medledger.runtime import GasMeter, GasSchedule, contract_address, eoa_address

from conftest import fast_config


class ScratchContract:
    """Fixture contract: stores values, emits events, reverts on demand."""

    type_id = "scratch"
    version = 1

    def constructor(self, ctx, args):
        if args.get("value") is not None:
            ctx.put("seed", args["value"])
        if args.get("fail"):
            ctx.revert("CtorBoom")

    def store(self, ctx, args):
        ctx.put(args["key"], args["value"])
        return args["key"]

    def store_then_fail(self, ctx, args):
        ctx.put(args["key"], args["value"])
        ctx.revert("Boom")

    def emit_two(self, ctx, args):
        first = ctx.emit("Ping", {"n": 1})
        second = ctx.emit("Ping", {"n": 2})
        return [first.sequence, second.sequence]

    def emit_then_fail(self, ctx, args):
        ctx.emit("Ghost", {})
        ctx.revert("Boom")

    def read(self, ctx, args):
        return ctx.get(args["key"])

    def outer_keep(self, ctx, args):
        # inner frame reverts; this frame catches and keeps its own write
        ctx.put("outer", "kept")
        try:
            ctx.call(args["target"], "storeThenFail", {"key": "inner", "value": "lost"})
        except RevertError:
            pass
        return ctx.get("outer")

    def outer_propagate(self, ctx, args):
        ctx.put("outer", "doomed")
        ctx.call(args["target"], "storeThenFail", {"key": "inner", "value": "lost"})

    def spin(self, ctx, args):
        for _ in range(args["steps"]):
            ctx.get("nothing")

    functions = {
        "store": store,
        "storeThenFail": store_then_fail,
        "emitTwo": emit_two,
        "emitThenFail": emit_then_fail,
        "read": read,
        "outerKeep": outer_keep,
        "outerPropagate": outer_propagate,
        "spin": spin,
    }


@pytest.fixture
def scratch_node():
    return ChainNode.bootstrap(fast_config(), persist=False, extra_contracts=[ScratchContract()])


def deploy(node, label="alice", ctor=None):
    node.create_eoa(label) if label not in node.world.eoa_labels else None
    tx = node.submit_payload(label, make_create_contract("scratch", 1, ctor or {}))
    node.mine()
    receipt = node.receipts[tx]
    assert receipt.success, receipt.revert_reason
    return receipt.return_value


def call(node, label, target, fn, args, gas_limit=None):
    tx = node.submit_payload(label, make_call_contract(target, fn, args), gas_limit=gas_limit)
    node.mine()
    return node.receipts[tx]


# --- EOAs -------------------------------------------------------------------

def test_eoa_duplicate_label(node):
    node.create_eoa("alice")
    with pytest.raises(DuplicateLabelError):
        node.create_eoa("alice")


def test_eoa_distinct_addresses(node):
    assert node.create_eoa("alice") != node.create_eoa("bob")


def test_eoa_address_matches_reference_hash(node):
    # oracle: first 20 bytes of SHA-256("eoa" || label), computed directly
    expected = "0x" + hashlib.sha256(b"eoa" + b"alice").digest()[:20].hex()
    assert node.create_eoa("alice") == expected
    assert eoa_address("alice") == expected


def test_eoa_gets_faucet_and_zero_nonce(node):
    addr = node.create_eoa("alice")
    acct = node.world.get(addr)
    assert acct.balance == node.config.faucet
    assert acct.nonce == 0


# --- instantiateContract ---------------------------------------------------------

def test_consecutive_nonces_distinct_addresses(scratch_node):
    a = deploy(scratch_node)
    b = deploy(scratch_node)
    assert a != b
    alice = scratch_node.world.eoa_labels["alice"]
    assert a == contract_address(alice, 0)
    assert b == contract_address(alice, 1)


def test_unregistered_type_reverts(scratch_node):
    scratch_node.create_eoa("alice")
    tx = scratch_node.submit_payload("alice", make_create_contract("nope", 9, {}))
    scratch_node.mine()
    receipt = scratch_node.receipts[tx]
    assert not receipt.success
    assert receipt.revert_reason.startswith("UnknownContractType")


def test_constructor_revert(scratch_node):
    scratch_node.create_eoa("alice")
    tx = scratch_node.submit_payload("alice", make_create_contract("scratch", 1, {"fail": True}))
    scratch_node.mine()
    receipt = scratch_node.receipts[tx]
    assert receipt.revert_reason == "ConstructorRevert:CtorBoom"
    assert receipt.return_value is None
    # the account creation itself rolled back with the transaction
    alice = scratch_node.world.eoa_labels["alice"]
    assert scratch_node.world.get(contract_address(alice, 0)) is None


def test_constructor_gas_is_exact(scratch_node):
    # metering: ctor invocation step + one put (step + bytes); txBase on top
    value = "x" * 100
    scratch_node.create_eoa("alice")
    tx = scratch_node.submit_payload("alice", make_create_contract("scratch", 1, {"value": value}))
    scratch_node.mine()
    receipt = scratch_node.receipts[tx]
    schedule = scratch_node.config.gas_schedule
    stored = len(canonical_json(value))
    assert receipt.gas_used == schedule.tx_base + 2 * schedule.per_step + stored * schedule.per_stored_byte


# --- callContract ------------------------------------------------------------------

def test_call_to_eoa_is_not_a_contract(scratch_node):
    bob = scratch_node.create_eoa("bob")
    scratch_node.create_eoa("alice")
    receipt = call(scratch_node, "alice", bob, "store", {"key": "k", "value": 1})
    assert receipt.revert_reason == "NotAContract"


def test_unknown_function(scratch_node):
    target = deploy(scratch_node)
    receipt = call(scratch_node, "alice", target, "moonwalk", {})
    assert receipt.revert_reason.startswith("UnknownFunction")


def test_revert_rolls_back_storage_but_charges_gas(scratch_node):
    target = deploy(scratch_node)
    receipt = call(scratch_node, "alice", target, "storeThenFail", {"key": "k", "value": "v"})
    assert receipt.status == "reverted"
    assert receipt.gas_used > 0
    assert "k" not in scratch_node.world.get(target).storage


def test_nested_inner_revert_outer_kept(scratch_node):
    outer = deploy(scratch_node)
    inner = deploy(scratch_node)
    receipt = call(scratch_node, "alice", outer, "outerKeep", {"target": inner})
    assert receipt.success
    assert receipt.return_value == "kept"
    assert scratch_node.world.get(outer).storage["outer"] == "kept"
    assert "inner" not in scratch_node.world.get(inner).storage


def test_nested_revert_propagates_when_uncaught(scratch_node):
    outer = deploy(scratch_node)
    inner = deploy(scratch_node)
    receipt = call(scratch_node, "alice", outer, "outerPropagate", {"target": inner})
    assert receipt.revert_reason == "Boom"
    assert "outer" not in scratch_node.world.get(outer).storage
    assert "inner" not in scratch_node.world.get(inner).storage


def test_reverted_tx_leaves_state_unchanged_except_nonce_and_gas(scratch_node):
    target = deploy(scratch_node)
    alice = scratch_node.world.eoa_labels["alice"]
    before = copy.deepcopy(scratch_node.world.accounts)
    receipt = call(scratch_node, "alice", target, "storeThenFail", {"key": "k", "value": "v"})
    after = scratch_node.world.accounts
    miner = scratch_node.world.eoa_labels[scratch_node.config.miner_label]
    for addr, acct in before.items():
        if addr == alice:
            assert after[addr].nonce == acct.nonce + 1
            assert after[addr].balance == acct.balance - receipt.gas_used
        elif addr == miner:
            assert after[addr].balance == acct.balance + receipt.gas_used
        else:
            assert after[addr].balance == acct.balance
        assert after[addr].storage == acct.storage


# --- gas -------------------------------------------------------------------------------

def test_charge_gas_identity():
    meter = GasMeter(10_000, GasSchedule(per_step=2, per_stored_byte=3, per_event=5, tx_base=7))
    assert meter.used == 0
    meter.charge_steps(0)
    meter.charge_stored_bytes(0)
    assert meter.used == 0


def test_charge_gas_arithmetic():
    meter = GasMeter(10_000, GasSchedule(per_step=2, per_stored_byte=3, per_event=5, tx_base=7))
    meter.charge_steps(4)
    meter.charge_stored_bytes(10)
    meter.charge_event()
    assert meter.used == 8 + 30 + 5


def test_gas_limit_boundary_out_of_gas(scratch_node):
    target = deploy(scratch_node)
    schedule = scratch_node.config.gas_schedule
    receipt = call(
        scratch_node, "alice", target, "read", {"key": "k"}, gas_limit=schedule.tx_base
    )
    assert receipt.revert_reason == "OutOfGas"
    assert receipt.gas_used == schedule.tx_base  # capped at the limit


def test_out_of_gas_mid_execution_consumes_full_limit(scratch_node):
    target = deploy(scratch_node)
    limit = scratch_node.config.gas_schedule.tx_base + 10
    receipt = call(scratch_node, "alice", target, "spin", {"steps": 100}, gas_limit=limit)
    assert receipt.revert_reason == "OutOfGas"
    assert receipt.gas_used == limit
    assert "k" not in scratch_node.world.get(target).storage


def test_meter_rejects_exceeding_but_allows_exact():
    meter = GasMeter(10, GasSchedule(per_step=1, per_stored_byte=1, per_event=1, tx_base=0))
    meter.charge_steps(10)
    assert meter.used == 10
    with pytest.raises(OutOfGasError):
        meter.charge_steps(1)


# --- events -----------------------------------------------------------------------------

def test_two_emissions_sequence_zero_then_one(scratch_node):
    target = deploy(scratch_node)
    receipt = call(scratch_node, "alice", target, "emitTwo", {})
    assert [e.sequence for e in receipt.events] == [0, 1]
    assert receipt.return_value == [0, 1]


def test_emission_in_reverted_frame_absent(scratch_node):
    target = deploy(scratch_node)
    receipt = call(scratch_node, "alice", target, "emitThenFail", {})
    assert receipt.events == []


def test_event_sequences_are_per_block(scratch_node):
    target = deploy(scratch_node)
    scratch_node.submit_call("alice", target, "emitTwo", {})
    scratch_node.submit_call("alice", target, "emitTwo", {})
    block = scratch_node.mine()
    sequences = [
        e.sequence for tx in block.transactions for e in scratch_node.receipts[tx.id].events
    ]
    assert sequences == [0, 1, 2, 3]


# --- transfers and fee conservation ----------------------------------------------------------

def test_transfer_moves_balance(node):
    bob = node.create_eoa("bob")
    alice = node.create_eoa("alice")
    node.submit_payload("alice", make_transfer(bob, 250))
    node.mine()
    faucet = node.config.faucet
    receipt = list(node.receipts.values())[-1]
    assert node.world.get(bob).balance == faucet + 250
    assert node.world.get(alice).balance == faucet - 250 - receipt.gas_used


def test_transfer_insufficient_balance_reverts(node):
    bob = node.create_eoa("bob")
    node.create_eoa("alice")
    tx = node.submit_payload("alice", make_transfer(bob, node.config.faucet * 2))
    node.mine()
    receipt = node.receipts[tx]
    assert receipt.revert_reason == "InsufficientBalance"
    assert node.world.get(bob).balance == node.config.faucet


def test_fee_conservation_random_workload(scratch_node):
    rng = random.Random(7)
    target = deploy(scratch_node)
    bob = scratch_node.create_eoa("bob")
    miner = scratch_node.world.eoa_labels[scratch_node.config.miner_label]
    miner_before = scratch_node.world.get(miner).balance
    tx_ids = []
    for _ in range(60):
        kind = rng.choice(["store", "fail", "transfer"])
        if kind == "store":
            tx_ids.append(
                scratch_node.submit_call("alice", target, "store", {"key": f"k{rng.random()}", "value": "v"})
            )
        elif kind == "fail":
            tx_ids.append(scratch_node.submit_call("alice", target, "storeThenFail", {"key": "x", "value": "y"}))
        else:
            tx_ids.append(scratch_node.submit_payload("alice", make_transfer(bob, 1)))
        if rng.random() < 0.3:
            scratch_node.mine()
    if len(scratch_node.mempool):
        scratch_node.mine()
    total_gas = sum(scratch_node.receipts[t].gas_used for t in tx_ids)
    assert scratch_node.world.get(miner).balance - miner_before == total_gas
    assert all(a.balance >= 0 for a in scratch_node.world.accounts.values())


def test_address_injectivity(scratch_node):
    for i in range(30):
        scratch_node.create_eoa(f"user-{i}")
    for _ in range(10):
        deploy(scratch_node, "user-0")
    addresses = list(scratch_node.world.accounts.keys())
    assert len(addresses) == len(set(addresses))
    assert all(len(a) == 42 and a.startswith("0x") for a in addresses)


def test_identical_state_and_tx_give_identical_receipts(scratch_node):
    def build():
        n = ChainNode.bootstrap(fast_config(), persist=False, extra_contracts=[ScratchContract()])
        t = deploy(n)
        r = call(n, "alice", t, "emitTwo", {})
        return r.to_dict()

    assert build() == build()
