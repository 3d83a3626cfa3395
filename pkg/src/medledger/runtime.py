"""World state and contract execution.

Accounts are EOAs (user-controlled, balance + nonce) or SCAs (typed contract
state).  Contracts are native state machines registered by (typeId, version);
there is no bytecode VM.  Gas metering is exact and documented:

* ``txBase`` is charged once per transaction,
* one step per contract function (or constructor) invocation,
* one step per storage access (read, write, or existence check),
* ``perStoredByte`` times the canonical-encoded length of every value written
  (overwrites charge the new value's full length),
* ``perEvent`` per emitted event.

A transaction whose charges would exceed its gasLimit aborts with OutOfGas and
a gasUsed equal to the full limit.  Reverts roll back storage, balances and
events of the failed frame but never the gas already consumed.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Any, Callable, Optional

from .canonical import canonical_json
from .errors import (
    DuplicateLabelError,
    OutOfGasError,
    RevertError,
    UnknownContractTypeError,
)
from .ledger import Event, Receipt, Transaction


def eoa_address(label: str) -> str:
    return "0x" + hashlib.sha256(b"eoa" + label.encode("utf-8")).digest()[:20].hex()


def contract_address(creator: str, creator_nonce: int) -> str:
    preimage = b"sca" + bytes.fromhex(creator[2:]) + str(creator_nonce).encode("ascii")
    return "0x" + hashlib.sha256(preimage).digest()[:20].hex()


@dataclass(frozen=True)
class GasSchedule:
    per_step: int = 1
    per_stored_byte: int = 1
    per_event: int = 5
    tx_base: int = 100

    def to_dict(self) -> dict:
        return {
            "perStep": self.per_step,
            "perStoredByte": self.per_stored_byte,
            "perEvent": self.per_event,
            "txBase": self.tx_base,
        }

    @staticmethod
    def from_dict(d: dict) -> "GasSchedule":
        return GasSchedule(d["perStep"], d["perStoredByte"], d["perEvent"], d["txBase"])


@dataclass
class Account:
    address: str
    kind: str  # "eoa" | "sca"
    balance: int = 0
    nonce: int = 0
    contract_type: Optional[tuple[str, int]] = None
    storage: dict[str, Any] = field(default_factory=dict)

    @property
    def is_contract(self) -> bool:
        return self.kind == "sca"


class ContractTypeRegistry:
    """Immutable after startup: (typeId, version) -> native implementation."""

    def __init__(self):
        self._types: dict[tuple[str, int], Any] = {}
        self._frozen = False

    def register(self, impl) -> None:
        key = (impl.type_id, impl.version)
        if self._frozen:
            raise RuntimeError("contract type registry is frozen")
        if key in self._types:
            raise ValueError(f"contract type {key} already registered")
        self._types[key] = impl

    def freeze(self) -> None:
        self._frozen = True

    def contains(self, type_id: str, version: int) -> bool:
        return (type_id, version) in self._types

    def get(self, type_id: str, version: int):
        try:
            return self._types[(type_id, version)]
        except KeyError:
            raise UnknownContractTypeError(f"no contract type ({type_id}, v{version})") from None


class WorldState:
    def __init__(self):
        self.accounts: dict[str, Account] = {}
        self.eoa_labels: dict[str, str] = {}

    def create_eoa(self, label: str, faucet: int) -> str:
        if label in self.eoa_labels:
            raise DuplicateLabelError(f"EOA label {label!r} already exists")
        address = eoa_address(label)
        if address in self.accounts:
            raise DuplicateLabelError(f"address collision for label {label!r}")
        self.accounts[address] = Account(address=address, kind="eoa", balance=faucet)
        self.eoa_labels[label] = address
        return address

    def get(self, address: str) -> Optional[Account]:
        return self.accounts.get(address)

    def nonce_of(self, address: str) -> Optional[int]:
        acct = self.accounts.get(address)
        return acct.nonce if acct else None

    def storage_bytes(self, address: str, key_prefix: str = "") -> int:
        """Canonical-encoded size of all stored values under a key prefix."""
        acct = self.accounts[address]
        return sum(
            len(canonical_json(v)) for k, v in acct.storage.items() if k.startswith(key_prefix)
        )


class GasMeter:
    def __init__(self, limit: int, schedule: GasSchedule):
        self.limit = limit
        self.schedule = schedule
        self.used = 0

    def _charge(self, fee: int) -> None:
        if self.used + fee > self.limit:
            self.used = self.limit
            raise OutOfGasError(f"gas limit {self.limit} exceeded")
        self.used += fee

    def charge_base(self) -> None:
        self._charge(self.schedule.tx_base)

    def charge_steps(self, steps: int) -> None:
        self._charge(steps * self.schedule.per_step)

    def charge_stored_bytes(self, nbytes: int) -> None:
        self._charge(nbytes * self.schedule.per_stored_byte)

    def charge_event(self) -> None:
        self._charge(self.schedule.per_event)


class Journal:
    """Undo log: frame checkpoints are indices, revert pops and runs undos."""

    def __init__(self):
        self._undos: list[Callable[[], None]] = []

    def record(self, undo: Callable[[], None]) -> None:
        self._undos.append(undo)

    def checkpoint(self) -> int:
        return len(self._undos)

    def revert_to(self, checkpoint: int) -> None:
        while len(self._undos) > checkpoint:
            self._undos.pop()()

    def revert_all(self) -> None:
        self.revert_to(0)


class TxContext:
    """Shared, mutable state of one executing transaction."""

    def __init__(
        self,
        world: WorldState,
        registry: ContractTypeRegistry,
        meter: GasMeter,
        system_addresses: dict[str, str],
        block_height: int,
        tx: Transaction,
        event_seq_start: int,
    ):
        self.world = world
        self.registry = registry
        self.meter = meter
        self.system_addresses = system_addresses
        self.block_height = block_height
        self.tx = tx
        self.journal = Journal()
        self.events: list[Event] = []
        self.event_seq = event_seq_start

    # -- journaled world mutations --

    def set_storage(self, address: str, key: str, value: Any) -> None:
        storage = self.world.accounts[address].storage
        if key in storage:
            old = storage[key]
            self.journal.record(lambda: storage.__setitem__(key, old))
        else:
            self.journal.record(lambda: storage.pop(key, None))
        storage[key] = value

    def delete_storage(self, address: str, key: str) -> None:
        storage = self.world.accounts[address].storage
        if key in storage:
            old = storage[key]
            self.journal.record(lambda: storage.__setitem__(key, old))
            del storage[key]

    def add_balance(self, address: str, delta: int) -> None:
        acct = self.world.accounts[address]
        if acct.balance + delta < 0:
            raise RevertError("InsufficientBalance")
        acct.balance += delta
        self.journal.record(lambda: setattr(acct, "balance", acct.balance - delta))

    def bump_nonce(self, address: str) -> int:
        acct = self.world.accounts[address]
        value = acct.nonce
        acct.nonce = value + 1
        self.journal.record(lambda: setattr(acct, "nonce", value))
        return value

    def create_account(self, account: Account) -> None:
        if account.address in self.world.accounts:
            raise RevertError("AddressCollision")
        self.world.accounts[account.address] = account
        self.journal.record(lambda: self.world.accounts.pop(account.address, None))

    def append_event(self, event: Event) -> None:
        self.events.append(event)
        seq_before = self.event_seq
        self.event_seq += 1

        def undo():
            self.events.pop()
            self.event_seq = seq_before

        self.journal.record(undo)


class CallContext:
    """The view contract code gets: caller identity, own storage, runtime services."""

    def __init__(self, tx_ctx: TxContext, caller: str, self_address: str):
        self._tx = tx_ctx
        self.caller = caller
        self.self_address = self_address

    @property
    def block_height(self) -> int:
        return self._tx.block_height

    def system_address(self, name: str) -> str:
        return self._tx.system_addresses[name]

    def revert(self, reason: str) -> None:
        raise RevertError(reason)

    # -- own storage, gas-metered --

    def get(self, key: str, default: Any = None) -> Any:
        self._tx.meter.charge_steps(1)
        return self._tx.world.accounts[self.self_address].storage.get(key, default)

    def has(self, key: str) -> bool:
        self._tx.meter.charge_steps(1)
        return key in self._tx.world.accounts[self.self_address].storage

    def put(self, key: str, value: Any) -> None:
        self._tx.meter.charge_steps(1)
        self._tx.meter.charge_stored_bytes(len(canonical_json(value)))
        self._tx.set_storage(self.self_address, key, value)

    # -- events --

    def emit(self, topic: str, payload: Any) -> Event:
        self._tx.meter.charge_event()
        event = Event(self.self_address, topic, payload, self._tx.event_seq)
        self._tx.append_event(event)
        return event

    # -- account introspection (one step, like a storage access) --

    def contract_type_of(self, address: str) -> Optional[tuple[str, int]]:
        self._tx.meter.charge_steps(1)
        acct = self._tx.world.get(address)
        return acct.contract_type if acct and acct.is_contract else None

    def account_exists(self, address: str) -> bool:
        self._tx.meter.charge_steps(1)
        return address in self._tx.world.accounts

    def type_registered(self, type_id: str, version: int) -> bool:
        self._tx.meter.charge_steps(1)
        return self._tx.registry.contains(type_id, version)

    # -- nested frames --

    def call(self, target: str, function: str, args: dict) -> Any:
        return execute_call(self._tx, self.self_address, target, function, args)

    def instantiate(self, type_id: str, version: int, ctor_args: dict) -> str:
        return execute_instantiate(self._tx, self.self_address, type_id, version, ctor_args)


def execute_call(tx_ctx: TxContext, caller: str, target: str, function: str, args: dict) -> Any:
    account = tx_ctx.world.get(target)
    if account is None or not account.is_contract:
        raise RevertError("NotAContract")
    impl = tx_ctx.registry.get(*account.contract_type)
    fn = impl.functions.get(function)
    if fn is None:
        raise RevertError(f"UnknownFunction:{function}")
    tx_ctx.meter.charge_steps(1)
    checkpoint = tx_ctx.journal.checkpoint()
    ctx = CallContext(tx_ctx, caller, target)
    try:
        return fn(impl, ctx, args or {})
    except RevertError:
        tx_ctx.journal.revert_to(checkpoint)
        raise


def execute_instantiate(
    tx_ctx: TxContext,
    creator: str,
    type_id: str,
    version: int,
    ctor_args: dict,
    creator_nonce: Optional[int] = None,
) -> str:
    if not tx_ctx.registry.contains(type_id, version):
        raise RevertError(f"UnknownContractType:{type_id}/v{version}")
    impl = tx_ctx.registry.get(type_id, version)
    if creator_nonce is None:
        creator_nonce = tx_ctx.bump_nonce(creator)
    address = contract_address(creator, creator_nonce)
    tx_ctx.create_account(
        Account(address=address, kind="sca", contract_type=(type_id, version))
    )
    tx_ctx.meter.charge_steps(1)  # constructor invocation
    checkpoint = tx_ctx.journal.checkpoint()
    ctx = CallContext(tx_ctx, creator, address)
    try:
        impl.constructor(ctx, ctor_args or {})
    except RevertError as exc:
        tx_ctx.journal.revert_to(checkpoint)
        raise RevertError(f"ConstructorRevert:{exc.reason}") from exc
    return address


def apply_transaction(
    world: WorldState,
    registry: ContractTypeRegistry,
    schedule: GasSchedule,
    system_addresses: dict[str, str],
    tx: Transaction,
    block_height: int,
    index_in_block: int,
    event_seq_start: int,
) -> tuple[Receipt, int]:
    """Execute one mined transaction; returns (receipt, next block event sequence).

    The caller (the miner) guarantees sender existence and nonce order; both
    are asserted here because a violation would commit an invalid block.
    """
    sender = world.accounts.get(tx.sender)
    if sender is None or tx.sender_nonce != sender.nonce:
        raise AssertionError("mempool discipline violated: unknown sender or nonce gap")

    meter = GasMeter(tx.gas_limit, schedule)
    tx_ctx = TxContext(world, registry, meter, system_addresses, block_height, tx, event_seq_start)

    status, reason, return_value = "success", None, None
    escrowed = False
    if sender.balance >= tx.gas_limit:
        sender.balance -= tx.gas_limit  # gas escrow survives reverts
        escrowed = True
        try:
            meter.charge_base()
            payload = tx.payload
            kind = payload["kind"]
            if kind == "createContract":
                return_value = execute_instantiate(
                    tx_ctx, tx.sender, payload["typeId"], payload["version"],
                    payload["ctorArgs"], creator_nonce=tx.sender_nonce,
                )
            elif kind == "callContract":
                return_value = execute_call(
                    tx_ctx, tx.sender, payload["target"], payload["function"], payload["args"]
                )
            elif kind == "transfer":
                meter.charge_steps(1)
                target = world.accounts.get(payload["target"])
                if target is None:
                    raise RevertError("UnknownTarget")
                amount = payload["amount"]
                if not isinstance(amount, int) or amount < 0:
                    raise RevertError("InvalidAmount")
                tx_ctx.add_balance(tx.sender, -amount)
                tx_ctx.add_balance(payload["target"], amount)
            else:  # unreachable behind mempool checks
                raise RevertError("UnknownPayloadKind")
        except RevertError as exc:
            tx_ctx.journal.revert_all()
            status, reason, return_value = "reverted", exc.reason, None
        except OutOfGasError:
            tx_ctx.journal.revert_all()
            status, reason, return_value = "reverted", "OutOfGas", None
    else:
        # Cannot escrow the gas limit: reject without charging anything.
        status, reason = "reverted", "InsufficientBalanceForGas"
        meter.used = 0

    if escrowed:
        sender.balance += tx.gas_limit - meter.used  # refund the unused escrow
    sender.nonce += 1  # a reverted transaction still occupies its nonce

    events = [] if status == "reverted" else list(tx_ctx.events)
    receipt = Receipt(
        tx_id=tx.id,
        status=status,
        revert_reason=reason,
        gas_used=meter.used,
        return_value=return_value,
        events=events,
        block_height=block_height,
        index_in_block=index_in_block,
    )
    next_seq = event_seq_start if status == "reverted" else tx_ctx.event_seq
    return receipt, next_seq
