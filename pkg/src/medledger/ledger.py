"""Hash-linked block ledger: transactions, blocks, receipts, mempool, validation.

Execution of transactions lives in :mod:`medledger.runtime`; this module owns
the ordered data structures and the cryptographic consistency rules.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Any, Iterable, Optional

from .canonical import ZERO_DIGEST, canonical_json, hash_canonical, is_digest
from .errors import (
    EmptyMempoolError,
    MalformedTransactionError,
    NonceMismatchError,
    UnknownSenderError,
)

PAYLOAD_KINDS = ("createContract", "callContract", "transfer")


# --- transactions -------------------------------------------------------------

@dataclass(frozen=True)
class Transaction:
    sender: str
    sender_nonce: int
    payload: dict
    gas_limit: int
    timestamp: int
    id: str = ""

    @staticmethod
    def create(sender: str, sender_nonce: int, payload: dict, gas_limit: int, timestamp: int) -> "Transaction":
        body = {
            "sender": sender,
            "senderNonce": sender_nonce,
            "payload": payload,
            "gasLimit": gas_limit,
            "timestamp": timestamp,
        }
        return Transaction(sender, sender_nonce, payload, gas_limit, timestamp, hash_canonical(body))

    def body(self) -> dict:
        """The id preimage: every field except the id itself."""
        return {
            "sender": self.sender,
            "senderNonce": self.sender_nonce,
            "payload": self.payload,
            "gasLimit": self.gas_limit,
            "timestamp": self.timestamp,
        }

    def computed_id(self) -> str:
        return hash_canonical(self.body())

    def to_dict(self) -> dict:
        d = self.body()
        d["id"] = self.id
        return d

    @staticmethod
    def from_dict(d: dict) -> "Transaction":
        return Transaction(
            sender=d["sender"],
            sender_nonce=d["senderNonce"],
            payload=d["payload"],
            gas_limit=d["gasLimit"],
            timestamp=d["timestamp"],
            id=d["id"],
        )


def make_create_contract(type_id: str, version: int, ctor_args: dict) -> dict:
    return {"kind": "createContract", "typeId": type_id, "version": version, "ctorArgs": ctor_args}


def make_call_contract(target: str, function: str, args: dict) -> dict:
    return {"kind": "callContract", "target": target, "function": function, "args": args}


def make_transfer(target: str, amount: int) -> dict:
    return {"kind": "transfer", "target": target, "amount": amount}


def check_well_formed(tx: Transaction) -> None:
    """Structural checks plus the id-recomputation check, raising MalformedTransaction."""
    if not isinstance(tx.sender, str) or not tx.sender.startswith("0x") or len(tx.sender) != 42:
        raise MalformedTransactionError(f"bad sender address {tx.sender!r}")
    if not isinstance(tx.sender_nonce, int) or isinstance(tx.sender_nonce, bool) or tx.sender_nonce < 0:
        raise MalformedTransactionError("senderNonce must be a non-negative integer")
    if not isinstance(tx.gas_limit, int) or isinstance(tx.gas_limit, bool) or tx.gas_limit < 0:
        raise MalformedTransactionError("gasLimit must be a non-negative integer")
    if not isinstance(tx.timestamp, int) or isinstance(tx.timestamp, bool) or tx.timestamp < 0:
        raise MalformedTransactionError("timestamp must be a non-negative integer")
    if not isinstance(tx.payload, dict) or tx.payload.get("kind") not in PAYLOAD_KINDS:
        raise MalformedTransactionError("payload kind must be one of " + ", ".join(PAYLOAD_KINDS))
    try:
        canonical_json(tx.payload)
    except Exception as exc:
        raise MalformedTransactionError(f"payload not canonical-encodable: {exc}") from exc
    if tx.id != tx.computed_id():
        raise MalformedTransactionError("transaction id does not match its canonical digest")


# --- events and receipts -------------------------------------------------------

@dataclass
class Event:
    emitter: str
    topic: str
    payload: Any
    sequence: int

    def to_dict(self) -> dict:
        return {"emitter": self.emitter, "topic": self.topic, "payload": self.payload, "sequence": self.sequence}

    @staticmethod
    def from_dict(d: dict) -> "Event":
        return Event(d["emitter"], d["topic"], d["payload"], d["sequence"])


@dataclass
class Receipt:
    tx_id: str
    status: str  # "success" | "reverted"
    revert_reason: Optional[str]
    gas_used: int
    return_value: Any
    events: list[Event]
    block_height: int
    index_in_block: int

    @property
    def success(self) -> bool:
        return self.status == "success"

    def to_dict(self) -> dict:
        return {
            "txId": self.tx_id,
            "status": self.status,
            "revertReason": self.revert_reason,
            "gasUsed": self.gas_used,
            "returnValue": self.return_value,
            "events": [e.to_dict() for e in self.events],
            "blockHeight": self.block_height,
            "indexInBlock": self.index_in_block,
        }

    @staticmethod
    def from_dict(d: dict) -> "Receipt":
        return Receipt(
            tx_id=d["txId"],
            status=d["status"],
            revert_reason=d.get("revertReason"),
            gas_used=d["gasUsed"],
            return_value=d.get("returnValue"),
            events=[Event.from_dict(e) for e in d["events"]],
            block_height=d["blockHeight"],
            index_in_block=d["indexInBlock"],
        )


# --- blocks --------------------------------------------------------------------

def tx_root(tx_ids: Iterable[str]) -> str:
    """Digest of the concatenated ordered tx ids (flat hash, not a Merkle tree)."""
    h = hashlib.sha256()
    for tx_id in tx_ids:
        h.update(bytes.fromhex(tx_id))
    return h.hexdigest()


def header_hash(height: int, prev_hash: str, root: str, pow_nonce: int, difficulty: int, timestamp: int) -> str:
    return hash_canonical(
        {
            "height": height,
            "prevHash": prev_hash,
            "txRoot": root,
            "powNonce": pow_nonce,
            "difficulty": difficulty,
            "timestamp": timestamp,
        }
    )


def leading_zero_bits(hex_digest: str) -> int:
    raw = bytes.fromhex(hex_digest)
    bits = 0
    for byte in raw:
        if byte == 0:
            bits += 8
            continue
        for shift in range(7, -1, -1):
            if byte >> shift:
                return bits + (7 - shift)
        break
    return bits


def meets_difficulty(hex_digest: str, difficulty: int) -> bool:
    return leading_zero_bits(hex_digest) >= difficulty


@dataclass
class Block:
    height: int
    prev_hash: str
    tx_root: str
    pow_nonce: int
    difficulty: int
    timestamp: int
    transactions: list[Transaction]
    header_hash: str

    def to_dict(self) -> dict:
        return {
            "height": self.height,
            "prevHash": self.prev_hash,
            "txRoot": self.tx_root,
            "powNonce": self.pow_nonce,
            "difficulty": self.difficulty,
            "timestamp": self.timestamp,
            "headerHash": self.header_hash,
            "transactions": [tx.to_dict() for tx in self.transactions],
        }

    @staticmethod
    def from_dict(d: dict) -> "Block":
        return Block(
            height=d["height"],
            prev_hash=d["prevHash"],
            tx_root=d["txRoot"],
            pow_nonce=d["powNonce"],
            difficulty=d["difficulty"],
            timestamp=d["timestamp"],
            transactions=[Transaction.from_dict(t) for t in d["transactions"]],
            header_hash=d["headerHash"],
        )


def seal_block(
    height: int,
    prev_hash: str,
    transactions: list[Transaction],
    difficulty: int,
    timestamp: int,
) -> tuple[Block, int]:
    """Find a powNonce satisfying the difficulty predicate; returns (block, attempts)."""
    root = tx_root(tx.id for tx in transactions)
    pow_nonce = 0
    while True:
        digest = header_hash(height, prev_hash, root, pow_nonce, difficulty, timestamp)
        if meets_difficulty(digest, difficulty):
            return (
                Block(height, prev_hash, root, pow_nonce, difficulty, timestamp, list(transactions), digest),
                pow_nonce + 1,
            )
        pow_nonce += 1


# --- mempool -------------------------------------------------------------------

class Mempool:
    """FIFO queue of submitted, not-yet-mined transactions.

    Per-sender nonces must arrive in sequence: the next acceptable nonce is the
    sender's committed account nonce plus their pending entry count.
    """

    def __init__(self):
        self._entries: list[Transaction] = []
        self._pending_by_sender: dict[str, int] = {}

    def __len__(self) -> int:
        return len(self._entries)

    def pending_count(self, sender: str) -> int:
        return self._pending_by_sender.get(sender, 0)

    def submit(self, tx: Transaction, account_nonce: Optional[int]) -> str:
        check_well_formed(tx)
        if account_nonce is None:
            raise UnknownSenderError(f"sender {tx.sender} has no account")
        expected = account_nonce + self.pending_count(tx.sender)
        if tx.sender_nonce != expected:
            raise NonceMismatchError(f"expected nonce {expected} for {tx.sender}, got {tx.sender_nonce}")
        self._entries.append(tx)
        self._pending_by_sender[tx.sender] = self.pending_count(tx.sender) + 1
        return tx.id

    def drain(self, max_txs: int, allow_empty: bool = False) -> list[Transaction]:
        if not self._entries and not allow_empty:
            raise EmptyMempoolError("mempool is empty and empty-block mining is disabled")
        taken = self._entries[:max_txs]
        self._entries = self._entries[len(taken):]
        for tx in taken:
            remaining = self._pending_by_sender[tx.sender] - 1
            if remaining:
                self._pending_by_sender[tx.sender] = remaining
            else:
                del self._pending_by_sender[tx.sender]
        return taken


# --- chain validation ------------------------------------------------------------

@dataclass
class ValidationReport:
    valid: bool
    first_failure: Optional[dict] = None

    def to_dict(self) -> dict:
        return {"valid": self.valid, "firstFailure": self.first_failure}


def _fail(height: int, rule: str, detail: str) -> ValidationReport:
    return ValidationReport(False, {"height": height, "rule": rule, "detail": detail})


_INT_FIELDS = ("height", "powNonce", "difficulty", "timestamp")


def validate_chain(block_dicts: list[dict], difficulty: int) -> ValidationReport:
    """Re-check every cryptographic consistency rule over serialized blocks.

    Works on wire-form dicts so that tampering anywhere in the persisted form
    (including values that no longer round-trip through our own types) is
    reported rather than raised.
    """
    prev_digest = ZERO_DIGEST
    prev_timestamp: Optional[int] = None
    expected_nonces: dict[str, int] = {}

    for i, b in enumerate(block_dicts):
        try:
            for fname in _INT_FIELDS:
                if not isinstance(b.get(fname), int) or isinstance(b.get(fname), bool):
                    return _fail(i, "malformed", f"block field {fname} is not an integer")
            height = b["height"]
            if height != i:
                return _fail(i, "genesis" if i == 0 else "linkage", f"expected height {i}, found {height}")
            if i == 0 and b["prevHash"] != ZERO_DIGEST:
                return _fail(0, "genesis", "genesis prevHash must be all zero bytes")
            if i > 0 and b["prevHash"] != prev_digest:
                return _fail(i, "linkage", "prevHash does not match the predecessor's header digest")

            if not is_digest(b.get("txRoot", "")) or not is_digest(b.get("headerHash", "")):
                return _fail(i, "malformed", "txRoot/headerHash is not a 32-byte hex digest")

            digest = header_hash(height, b["prevHash"], b["txRoot"], b["powNonce"], b["difficulty"], b["timestamp"])
            if digest != b["headerHash"]:
                return _fail(i, "headerHash", "stored header hash does not match the recomputed digest")
            if b["difficulty"] != difficulty:
                return _fail(i, "difficulty", f"block difficulty {b['difficulty']} != chain difficulty {difficulty}")
            if not meets_difficulty(digest, difficulty):
                return _fail(i, "difficulty", f"header digest has {leading_zero_bits(digest)} leading zero bits, needs {difficulty}")

            if prev_timestamp is not None and b["timestamp"] < prev_timestamp:
                return _fail(i, "timestamp", "block timestamps must be non-decreasing")

            txs = b.get("transactions")
            if not isinstance(txs, list):
                return _fail(i, "malformed", "transactions is not a list")
            recomputed_ids = []
            for t in txs:
                recomputed_ids.append(
                    hash_canonical(
                        {
                            "sender": t["sender"],
                            "senderNonce": t["senderNonce"],
                            "payload": t["payload"],
                            "gasLimit": t["gasLimit"],
                            "timestamp": t["timestamp"],
                        }
                    )
                )
            if tx_root(recomputed_ids) != b["txRoot"]:
                return _fail(i, "txRoot", "header txRoot does not match the root over recomputed tx ids")
            for j, t in enumerate(txs):
                if t.get("id") != recomputed_ids[j]:
                    return _fail(i, "txId", f"transaction {j} id does not match its canonical digest")
                expected = expected_nonces.get(t["sender"], 0)
                if t["senderNonce"] != expected:
                    return _fail(i, "nonce", f"sender {t['sender']} nonce {t['senderNonce']} != expected {expected}")
                expected_nonces[t["sender"]] = expected + 1
        except Exception as exc:  # tampered structure: report, never raise
            return _fail(i, "malformed", f"{type(exc).__name__}: {exc}")

        prev_digest = b["headerHash"]
        prev_timestamp = b["timestamp"]

    return ValidationReport(True)
