"""medledger: a single-node proof-of-work ledger hosting a native contract
runtime, on which permissioned health-record exchange is built — patient
registry, per-patient accounts with provider access lists, versioned account
factory, interned insurance plans, digest-verified off-chain records, and
server-side event dispatch to subscribed providers."""

from .canonical import canonical_json, hash_canonical
from .config import Config
from .node import ChainNode, open_node
from .service import ServiceCore

__all__ = ["Config", "ChainNode", "ServiceCore", "open_node", "canonical_json", "hash_canonical"]

__version__ = "0.1.0"
