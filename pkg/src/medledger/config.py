"""Chain + service configuration, and the genesis file written at init."""

from __future__ import annotations

import json
import os
import secrets
from dataclasses import dataclass, field, replace
from pathlib import Path

from .canonical import canonical_json
from .runtime import GasSchedule


@dataclass
class Config:
    data_dir: str = "./medledger-data"
    listen_host: str = "127.0.0.1"
    listen_port: int = 8640
    difficulty: int = 12
    faucet: int = 10**12
    gas_schedule: GasSchedule = field(default_factory=GasSchedule)
    default_gas_limit: int = 5_000_000
    miner_label: str = "miner"
    admin_label: str = "admin"
    admin_api_key: str = ""
    allow_empty_blocks: bool = False
    auto_mine_threshold: int = 1
    block_max_txs: int = 1000
    block_reward: int = 0
    record_backend: str = "file"  # "file" | "memory"
    fixed_clock: bool = False
    dedup_notifications: bool = True
    ui_dir: str = ""
    system_addresses: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "dataDir": self.data_dir,
            "listenHost": self.listen_host,
            "listenPort": self.listen_port,
            "difficulty": self.difficulty,
            "faucet": self.faucet,
            "gasSchedule": self.gas_schedule.to_dict(),
            "defaultGasLimit": self.default_gas_limit,
            "minerLabel": self.miner_label,
            "adminLabel": self.admin_label,
            "adminApiKey": self.admin_api_key,
            "allowEmptyBlocks": self.allow_empty_blocks,
            "autoMineThreshold": self.auto_mine_threshold,
            "blockMaxTxs": self.block_max_txs,
            "blockReward": self.block_reward,
            "recordBackend": self.record_backend,
            "fixedClock": self.fixed_clock,
            "dedupNotifications": self.dedup_notifications,
            "uiDir": self.ui_dir,
            "systemAddresses": self.system_addresses,
        }

    @staticmethod
    def from_dict(d: dict) -> "Config":
        cfg = Config()
        mapping = {
            "dataDir": "data_dir",
            "listenHost": "listen_host",
            "listenPort": "listen_port",
            "difficulty": "difficulty",
            "faucet": "faucet",
            "defaultGasLimit": "default_gas_limit",
            "minerLabel": "miner_label",
            "adminLabel": "admin_label",
            "adminApiKey": "admin_api_key",
            "allowEmptyBlocks": "allow_empty_blocks",
            "autoMineThreshold": "auto_mine_threshold",
            "blockMaxTxs": "block_max_txs",
            "blockReward": "block_reward",
            "recordBackend": "record_backend",
            "fixedClock": "fixed_clock",
            "dedupNotifications": "dedup_notifications",
            "uiDir": "ui_dir",
            "systemAddresses": "system_addresses",
        }
        for wire, attr in mapping.items():
            if wire in d:
                setattr(cfg, attr, d[wire])
        if "gasSchedule" in d:
            cfg.gas_schedule = GasSchedule.from_dict(d["gasSchedule"])
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if self.difficulty < 0:
            raise ValueError("difficulty must be >= 0")
        if self.faucet < 0 or self.block_reward < 0 or self.default_gas_limit < 0:
            raise ValueError("faucet, blockReward and defaultGasLimit must be >= 0")
        schedule = self.gas_schedule
        if min(schedule.per_step, schedule.per_stored_byte, schedule.per_event, schedule.tx_base) < 0:
            raise ValueError("gas schedule entries must be >= 0")
        if self.record_backend not in ("file", "memory"):
            raise ValueError("recordBackend must be 'file' or 'memory'")

    @staticmethod
    def load(path: str | Path) -> "Config":
        with open(path, "r", encoding="utf-8") as fh:
            cfg = Config.from_dict(json.load(fh))
        return apply_env_overrides(cfg)

    def save(self, path: str | Path) -> None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_bytes(canonical_json(self.to_dict()) + b"\n")

    # -- data-dir layout ---------------------------------------------------

    @property
    def genesis_path(self) -> Path:
        return Path(self.data_dir) / "genesis.json"

    @property
    def blocks_path(self) -> Path:
        return Path(self.data_dir) / "blocks.jsonl"

    @property
    def receipts_path(self) -> Path:
        return Path(self.data_dir) / "receipts.jsonl"

    @property
    def eoas_path(self) -> Path:
        return Path(self.data_dir) / "eoas.jsonl"

    @property
    def identities_path(self) -> Path:
        return Path(self.data_dir) / "identities.json"

    @property
    def records_dir(self) -> Path:
        return Path(self.data_dir) / "records"

    @property
    def audit_path(self) -> Path:
        return Path(self.data_dir) / "audit.jsonl"

    @property
    def feeds_dir(self) -> Path:
        return Path(self.data_dir) / "feeds"

    @property
    def subscriptions_path(self) -> Path:
        return Path(self.data_dir) / "subscriptions.json"

    @property
    def cursor_path(self) -> Path:
        return Path(self.data_dir) / "pubsub_cursor.json"

    def with_admin_key(self) -> "Config":
        if self.admin_api_key:
            return self
        return replace(self, admin_api_key="admin-" + secrets.token_hex(16))


def apply_env_overrides(cfg: Config) -> Config:
    port = os.environ.get("MEDLEDGER_PORT")
    data_dir = os.environ.get("MEDLEDGER_DATA_DIR")
    if port:
        cfg.listen_port = int(port)
    if data_dir:
        cfg.data_dir = data_dir
    return cfg


def load_effective_config(path: str | Path) -> Config:
    """Load a config file, preferring the effective genesis copy in its data dir."""
    cfg = Config.load(path)
    if cfg.genesis_path.exists():
        genesis = Config.load(cfg.genesis_path)
        genesis.data_dir = cfg.data_dir
        return genesis
    return cfg
