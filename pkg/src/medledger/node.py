"""The single-node chain: mempool + miner + world state + durable files.

Mining and every state mutation serialize through one lock; reads of committed
data are safe concurrently.  The chain persists as newline-delimited canonical
JSON blocks plus a receipts file; on startup the chain is re-validated and
replayed from genesis to rebuild world state and receipts.

EOA registration is not a transaction (the payload set is closed), so labels
persist in their own append-only file and are re-created with the configured
faucet before block replay.
"""

from __future__ import annotations

import json
import threading
from pathlib import Path
from typing import Any, Optional

from .canonical import ZERO_DIGEST, canonical_json
from .clock import ManualClock, SystemClock
from .config import Config
from .contracts import (
    ACCOUNT_FACTORY,
    INSURANCE_PLAN_STORE,
    PATIENT_ACCOUNT,
    PATIENT_REGISTRY,
    PROVIDER_ACCOUNT,
    SYS_FACTORY,
    SYS_PLAN_STORE,
    SYS_REGISTRY,
    register_contract_suite,
)
from .errors import NotFoundError
from .ledger import (
    Block,
    Mempool,
    Receipt,
    Transaction,
    ValidationReport,
    make_call_contract,
    make_create_contract,
    seal_block,
    validate_chain,
)
from .runtime import (
    ContractTypeRegistry,
    GasMeter,
    TxContext,
    WorldState,
    apply_transaction,
    contract_address,
    eoa_address,
    execute_call,
)


class ChainNode:
    def __init__(self, config: Config, clock=None, persist: bool = True, extra_contracts=()):
        self.config = config
        self.clock = clock or (ManualClock() if config.fixed_clock else SystemClock())
        self.persist = persist
        self.lock = threading.RLock()
        self.world = WorldState()
        self.registry = ContractTypeRegistry()
        register_contract_suite(self.registry)
        for impl in extra_contracts:
            self.registry.register(impl)
        self.registry.freeze()
        self.mempool = Mempool()
        self.blocks: list[Block] = []
        self.receipts: dict[str, Receipt] = {}
        self.last_mine_attempts = 0

    # -- bootstrap / load ----------------------------------------------------

    @staticmethod
    def bootstrap(config: Config, clock=None, persist: bool = True, extra_contracts=()) -> "ChainNode":
        """Create a fresh chain: admin + miner EOAs and the genesis block that
        instantiates the three system singletons."""
        node = ChainNode(config, clock=clock, persist=persist, extra_contracts=extra_contracts)
        if persist:
            Path(config.data_dir).mkdir(parents=True, exist_ok=True)
            for path in (config.blocks_path, config.receipts_path, config.eoas_path):
                if path.exists():
                    raise FileExistsError(f"{path} already exists; refusing to re-init")
        admin = node.create_eoa(config.admin_label)
        node.create_eoa(config.miner_label)

        # Factory address is needed inside the registry's constructor args, and
        # all three must be known to execution: precompute from admin nonces.
        factory_addr = contract_address(admin, 0)
        plan_store_addr = contract_address(admin, 1)
        registry_addr = contract_address(admin, 2)
        config.system_addresses = {
            SYS_FACTORY: factory_addr,
            SYS_PLAN_STORE: plan_store_addr,
            SYS_REGISTRY: registry_addr,
        }

        versions = {
            "patient": {"typeId": PATIENT_ACCOUNT, "version": 1},
            "provider": {"typeId": PROVIDER_ACCOUNT, "version": 1},
        }
        payloads = [
            make_create_contract(ACCOUNT_FACTORY, 1, {"admin": admin, "versions": versions}),
            make_create_contract(INSURANCE_PLAN_STORE, 1, {}),
            make_create_contract(PATIENT_REGISTRY, 1, {"factory": factory_addr, "admin": admin}),
        ]
        for payload in payloads:
            node.submit_payload(config.admin_label, payload)
        block = node.mine()
        for i, (name, expected) in enumerate(
            [(SYS_FACTORY, factory_addr), (SYS_PLAN_STORE, plan_store_addr), (SYS_REGISTRY, registry_addr)]
        ):
            receipt = node.receipts[block.transactions[i].id]
            if not receipt.success or receipt.return_value != expected:
                raise RuntimeError(f"genesis bootstrap failed for {name}: {receipt.to_dict()}")
        if persist:
            config.save(config.genesis_path)
        return node

    @staticmethod
    def load(config: Config, clock=None) -> "ChainNode":
        """Re-open an initialized data dir: recreate EOAs, re-validate the
        chain, replay every block to rebuild world state and receipts."""
        node = ChainNode(config, clock=clock, persist=True)
        with open(config.eoas_path, "r", encoding="utf-8") as fh:
            labels = [json.loads(line)["label"] for line in fh if line.strip()]
        for label in labels:
            node.world.create_eoa(label, config.faucet)

        with open(config.blocks_path, "r", encoding="utf-8") as fh:
            block_dicts = [json.loads(line) for line in fh if line.strip()]
        report = validate_chain(block_dicts, config.difficulty)
        if not report.valid:
            raise RuntimeError(f"persisted chain failed validation: {report.first_failure}")
        for d in block_dicts:
            block = Block.from_dict(d)
            node._execute_block_txs(block.height, block.transactions)
            node.blocks.append(block)
        return node

    # -- EOAs ------------------------------------------------------------------

    def create_eoa(self, label: str) -> str:
        with self.lock:
            address = self.world.create_eoa(label, self.config.faucet)
            if self.persist:
                self._append_jsonl(self.config.eoas_path, {"label": label, "address": address})
            return address

    def address_of_label(self, label: str) -> Optional[str]:
        return self.world.eoa_labels.get(label)

    # -- mempool -----------------------------------------------------------------

    def next_nonce(self, sender: str) -> int:
        with self.lock:
            nonce = self.world.nonce_of(sender)
            if nonce is None:
                raise NotFoundError(f"no account at {sender}")
            return nonce + self.mempool.pending_count(sender)

    def submit(self, tx: Transaction) -> str:
        with self.lock:
            return self.mempool.submit(tx, self.world.nonce_of(tx.sender))

    def submit_payload(self, sender_label: str, payload: dict, gas_limit: Optional[int] = None) -> str:
        """Convenience wrapper building a well-formed transaction for a label."""
        with self.lock:
            sender = self.world.eoa_labels[sender_label]
            tx = Transaction.create(
                sender=sender,
                sender_nonce=self.next_nonce(sender),
                payload=payload,
                gas_limit=self.config.default_gas_limit if gas_limit is None else gas_limit,
                timestamp=self.clock.now(),
            )
            return self.submit(tx)

    def submit_call(self, sender_label: str, target: str, function: str, args: dict) -> str:
        return self.submit_payload(sender_label, make_call_contract(target, function, args))

    # -- mining ---------------------------------------------------------------------

    def _execute_block_txs(self, height: int, txs: list[Transaction]) -> list[Receipt]:
        receipts = []
        event_seq = 0
        for index, tx in enumerate(txs):
            receipt, event_seq = apply_transaction(
                self.world,
                self.registry,
                self.config.gas_schedule,
                self.config.system_addresses,
                tx,
                height,
                index,
                event_seq,
            )
            receipts.append(receipt)
            self.receipts[tx.id] = receipt
        fees = sum(r.gas_used for r in receipts)
        miner = self.world.eoa_labels[self.config.miner_label]
        self.world.accounts[miner].balance += fees + self.config.block_reward
        return receipts

    def mine(self, max_txs: Optional[int] = None) -> Block:
        with self.lock:
            if max_txs is None:
                max_txs = self.config.block_max_txs
            txs = self.mempool.drain(max_txs, allow_empty=self.config.allow_empty_blocks)
            height = len(self.blocks)
            prev_hash = self.blocks[-1].header_hash if self.blocks else ZERO_DIGEST
            timestamp = self.clock.now()
            if self.blocks:
                timestamp = max(timestamp, self.blocks[-1].timestamp)

            # Execute, then search for the proof-of-work nonce.
            receipts = self._execute_block_txs(height, txs)
            block, attempts = seal_block(height, prev_hash, txs, self.config.difficulty, timestamp)
            self.last_mine_attempts = attempts
            self.blocks.append(block)
            if self.persist:
                self._append_jsonl(self.config.blocks_path, block.to_dict())
                for receipt in receipts:
                    self._append_jsonl(self.config.receipts_path, receipt.to_dict())
            return block

    # -- reads -------------------------------------------------------------------------

    def validate(self) -> ValidationReport:
        return validate_chain([b.to_dict() for b in self.blocks], self.config.difficulty)

    def get_block(self, height: int) -> Block:
        if 0 <= height < len(self.blocks):
            return self.blocks[height]
        raise NotFoundError(f"no block at height {height}")

    def get_receipt(self, tx_id: str) -> Receipt:
        receipt = self.receipts.get(tx_id)
        if receipt is None:
            raise NotFoundError(f"no committed transaction {tx_id}")
        return receipt

    @property
    def height(self) -> int:
        return len(self.blocks) - 1

    def simulate_call(self, caller: str, target: str, function: str, args: dict) -> Any:
        """Run a contract function against the committed state and roll back
        every effect: a free read (reverts still raise RevertError)."""
        with self.lock:
            tx_ctx = TxContext(
                self.world,
                self.registry,
                GasMeter(self.config.default_gas_limit, self.config.gas_schedule),
                self.config.system_addresses,
                len(self.blocks),
                tx=None,
                event_seq_start=0,
            )
            try:
                return execute_call(tx_ctx, caller, target, function, args)
            finally:
                tx_ctx.journal.revert_all()

    # -- persistence -----------------------------------------------------------------------

    @staticmethod
    def _append_jsonl(path: Path, value: dict) -> None:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "ab") as fh:
            fh.write(canonical_json(value) + b"\n")


def open_node(config: Config, clock=None, persist: bool = True) -> ChainNode:
    """Load an existing data dir or bootstrap a fresh one."""
    if persist and config.blocks_path.exists():
        return ChainNode.load(config, clock=clock)
    return ChainNode.bootstrap(config, clock=clock, persist=persist)
