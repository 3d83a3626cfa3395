from __future__ import annotations

import pytest

from medledger.config import Config
from medledger.node import ChainNode
from medledger.service import ServiceCore


def fast_config(**overrides) -> Config:
    cfg = Config(
        difficulty=0,
        fixed_clock=True,
        record_backend="memory",
        admin_api_key="admin-test-key",
        block_max_txs=100_000,
    )
    for key, value in overrides.items():
        setattr(cfg, key, value)
    return cfg


@pytest.fixture
def node() -> ChainNode:
    return ChainNode.bootstrap(fast_config(), persist=False)


@pytest.fixture
def core() -> ServiceCore:
    return ServiceCore(fast_config(), persist=False)


def mine_all(node: ChainNode) -> list:
    receipts = []
    while len(node.mempool):
        block = node.mine()
        receipts.extend(node.receipts[tx.id] for tx in block.transactions)
    return receipts


def call_mined(node: ChainNode, sender_label: str, target: str, function: str, args: dict):
    tx_id = node.submit_call(sender_label, target, function, args)
    node.mine()
    return node.receipts[tx_id]
