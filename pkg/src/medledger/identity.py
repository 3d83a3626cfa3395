"""API-key identities bound to EOAs.

Keys stand in for wallets: the service maps each key to exactly one EOA and
signs nothing (a documented simulation boundary).  The store persists as one
JSON file so identities survive restarts alongside the chain.
"""

from __future__ import annotations

import hashlib
import json
import secrets
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .canonical import canonical_json
from .errors import UnknownIdentityError

ROLES = ("patient", "provider", "admin")


@dataclass
class Identity:
    api_key: str
    role: str
    eoa_label: str
    address: str
    patient_id: Optional[str] = None
    name: Optional[str] = None
    account_address: Optional[str] = None  # patient/provider SCA, when known

    def to_dict(self) -> dict:
        return {
            "apiKey": self.api_key,
            "role": self.role,
            "eoaLabel": self.eoa_label,
            "address": self.address,
            "patientId": self.patient_id,
            "name": self.name,
            "accountAddress": self.account_address,
        }

    @staticmethod
    def from_dict(d: dict) -> "Identity":
        return Identity(
            api_key=d["apiKey"],
            role=d["role"],
            eoa_label=d["eoaLabel"],
            address=d["address"],
            patient_id=d.get("patientId"),
            name=d.get("name"),
            account_address=d.get("accountAddress"),
        )


class IdentityStore:
    def __init__(self, path: Optional[str | Path] = None, deterministic_keys: bool = False):
        self.path = Path(path) if path else None
        self.deterministic_keys = deterministic_keys
        self.by_key: dict[str, Identity] = {}
        if self.path and self.path.exists():
            data = json.loads(self.path.read_text("utf-8"))
            for d in data["identities"]:
                identity = Identity.from_dict(d)
                self.by_key[identity.api_key] = identity

    def make_key(self, role: str, label: str) -> str:
        if self.deterministic_keys:
            return "k-" + hashlib.sha256(f"{role}:{label}".encode()).hexdigest()[:32]
        return "k-" + secrets.token_hex(16)

    def add(self, identity: Identity) -> Identity:
        self.by_key[identity.api_key] = identity
        self._save()
        return identity

    def update(self, identity: Identity) -> None:
        self.by_key[identity.api_key] = identity
        self._save()

    def authenticate(self, api_key: str) -> Identity:
        identity = self.by_key.get(api_key)
        if identity is None:
            raise UnknownIdentityError("unrecognized API key")
        return identity

    def patient_identity(self, patient_id: str) -> Optional[Identity]:
        for identity in self.by_key.values():
            if identity.role == "patient" and identity.patient_id == patient_id:
                return identity
        return None

    def _save(self) -> None:
        if self.path is None:
            return
        state = {"identities": [i.to_dict() for i in self.by_key.values()]}
        tmp = self.path.with_suffix(".tmp")
        tmp.parent.mkdir(parents=True, exist_ok=True)
        tmp.write_bytes(canonical_json(state) + b"\n")
        tmp.rename(self.path)
