"""Off-chain health-record storage behind a lazy, digest-verified proxy.

Resources are small flat documents in four types; the chain never sees their
contents, only the canonical digest and a backend pointer.  Backends are
pluggable (in-memory for tests, content-addressed flat files for durability)
and instrumented so tests can assert that proxies touch them lazily and at
most once.  Every materialization is appended to an audit trail.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

from .canonical import canonical_json, hash_canonical
from .errors import (
    BackendUnavailableError,
    IntegrityMismatchError,
    NotFoundError,
    SchemaViolationError,
    UnserializableError,
)

RESOURCE_TYPES = ("Patient", "MedicationRequest", "Observation", "Coverage")

# required attribute name -> allowed python types, per resource type
REQUIRED_ATTRIBUTES: dict[str, dict[str, tuple]] = {
    "Patient": {"name": (str,), "birthDate": (str,)},
    "MedicationRequest": {"medicationCode": (str,), "status": (str,)},
    "Observation": {"code": (str,), "value": (str, int, bool)},
    "Coverage": {"payerName": (str,), "planCode": (str,)},
}


@dataclass(frozen=True)
class Resource:
    resource_type: str
    id: str
    subject_patient_id: str
    attributes: dict
    authored_at: int

    def to_dict(self) -> dict:
        return {
            "resourceType": self.resource_type,
            "id": self.id,
            "subjectPatientId": self.subject_patient_id,
            "attributes": self.attributes,
            "authoredAt": self.authored_at,
        }

    @staticmethod
    def from_dict(d: dict) -> "Resource":
        return Resource(
            resource_type=d["resourceType"],
            id=d["id"],
            subject_patient_id=d["subjectPatientId"],
            attributes=d["attributes"],
            authored_at=d["authoredAt"],
        )

    def digest(self) -> str:
        return hash_canonical(self.to_dict())


def validate_resource(resource: Resource) -> None:
    errors = []
    if resource.resource_type not in RESOURCE_TYPES:
        errors.append(f"resourceType {resource.resource_type!r} not in {RESOURCE_TYPES}")
        raise SchemaViolationError(errors)
    if not isinstance(resource.id, str) or not resource.id:
        errors.append("id must be a non-empty string")
    if not isinstance(resource.subject_patient_id, str) or not resource.subject_patient_id:
        errors.append("subjectPatientId must be a non-empty string")
    elif resource.resource_type == "Patient" and resource.subject_patient_id != resource.id:
        errors.append("Patient resources must have subjectPatientId equal to id")
    if not isinstance(resource.authored_at, int) or isinstance(resource.authored_at, bool) or resource.authored_at < 0:
        errors.append("authoredAt must be a non-negative integer")
    if not isinstance(resource.attributes, dict):
        errors.append("attributes must be an object")
        raise SchemaViolationError(errors)
    for name, value in resource.attributes.items():
        if not isinstance(name, str):
            errors.append(f"attribute name {name!r} must be a string")
        elif not isinstance(value, (str, int, bool)):
            errors.append(f"attribute {name} must be a string, integer or boolean")
    for name, types in REQUIRED_ATTRIBUTES[resource.resource_type].items():
        value = resource.attributes.get(name)
        if value is None:
            errors.append(f"{resource.resource_type} requires attribute {name!r}")
        elif not isinstance(value, types) or (bool not in types and isinstance(value, bool)):
            errors.append(f"attribute {name} has the wrong type")
    if errors:
        raise SchemaViolationError(errors)


@dataclass(frozen=True)
class StoragePointer:
    backend: str
    locator: str

    def to_dict(self) -> dict:
        return {"backend": self.backend, "locator": self.locator}

    @staticmethod
    def from_dict(d: dict) -> "StoragePointer":
        return StoragePointer(d["backend"], d["locator"])

    def encode(self) -> str:
        return f"{self.backend}:{self.locator}"

    @staticmethod
    def decode(text: str) -> "StoragePointer":
        backend, _, locator = text.partition(":")
        return StoragePointer(backend, locator)


class MemoryBackend:
    name = "memory"

    def __init__(self):
        self._objects: dict[str, bytes] = {}
        self.read_count = 0

    def put(self, locator: str, data: bytes) -> bool:
        """Store bytes; returns True when the object is new."""
        if locator in self._objects:
            return False
        self._objects[locator] = data
        return True

    def get(self, locator: str) -> bytes:
        self.read_count += 1
        try:
            return self._objects[locator]
        except KeyError:
            raise NotFoundError(f"no object {locator}") from None

    def delete(self, locator: str) -> None:
        self._objects.pop(locator, None)

    def count(self) -> int:
        return len(self._objects)


class FileBackend:
    """One file per record, named by the hex digest of its canonical bytes."""

    name = "file"

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.read_count = 0

    def put(self, locator: str, data: bytes) -> bool:
        self.root.mkdir(parents=True, exist_ok=True)
        path = self.root / locator
        if path.exists():
            return False
        tmp = path.with_suffix(".tmp")
        tmp.write_bytes(data)
        tmp.rename(path)
        return True

    def get(self, locator: str) -> bytes:
        self.read_count += 1
        path = self.root / locator
        if not path.exists():
            raise NotFoundError(f"no object {locator}")
        return path.read_bytes()

    def delete(self, locator: str) -> None:
        path = self.root / locator
        if path.exists():
            path.unlink()

    def count(self) -> int:
        if not self.root.exists():
            return 0
        return sum(1 for p in self.root.iterdir() if not p.name.endswith(".tmp"))


class AuditLog:
    """Serialized appender for record-access audit entries (JSON lines)."""

    def __init__(self, path: Optional[str | Path] = None):
        self.path = Path(path) if path else None
        self.entries: list[dict] = []
        self._lock = threading.Lock()

    def append(self, accessor_id: str, record_hash: str, timestamp: int) -> None:
        entry = {"accessorId": accessor_id, "recordHash": record_hash, "timestamp": timestamp}
        with self._lock:
            self.entries.append(entry)
            if self.path:
                self.path.parent.mkdir(parents=True, exist_ok=True)
                with open(self.path, "ab") as fh:
                    fh.write(canonical_json(entry) + b"\n")


class RecordProxy:
    """Lazy handle to one stored record: resolves on demand, verifies the
    digest against the on-chain hash, caches, and audits every access."""

    def __init__(self, store: "RecordStore", pointer: StoragePointer, expected_hash: str):
        self.store = store
        self.pointer = pointer
        self.expected_hash = expected_hash
        self.cached: Optional[Resource] = None
        self.audit: list[dict] = []

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, RecordProxy)
            and self.pointer == other.pointer
            and self.expected_hash == other.expected_hash
        )

    def __hash__(self) -> int:
        return hash((self.pointer, self.expected_hash))

    def resolve(self, accessor_id: str) -> Resource:
        if self.cached is None:
            data = self.store.backend_for(self.pointer.backend).get(self.pointer.locator)
            try:
                obj = json.loads(data.decode("utf-8"))
                digest = hash_canonical(obj)
            except (ValueError, UnicodeDecodeError, UnserializableError) as exc:
                raise IntegrityMismatchError(f"stored bytes are not canonical JSON: {exc}") from exc
            if digest != self.expected_hash:
                raise IntegrityMismatchError(
                    f"stored bytes hash to {digest}, chain expects {self.expected_hash}"
                )
            self.cached = Resource.from_dict(obj)
        stamp = {"accessorId": accessor_id, "timestamp": self.store.clock.now()}
        self.audit.append(stamp)
        self.store.audit_log.append(accessor_id, self.expected_hash, stamp["timestamp"])
        return self.cached


class RecordStore:
    def __init__(
        self,
        default_backend: str = "memory",
        file_root: Optional[str | Path] = None,
        audit_log: Optional[AuditLog] = None,
        clock=None,
    ):
        from .clock import SystemClock

        self.backends: dict[str, Any] = {"memory": MemoryBackend()}
        if file_root is not None:
            self.backends["file"] = FileBackend(file_root)
        if default_backend not in self.backends:
            raise BackendUnavailableError(f"backend {default_backend!r} is not configured")
        self.default_backend = default_backend
        self.audit_log = audit_log or AuditLog()
        self.clock = clock or SystemClock()

    def backend_for(self, name: str):
        backend = self.backends.get(name)
        if backend is None:
            raise BackendUnavailableError(f"backend {name!r} is not configured")
        return backend

    def put(self, resource: Resource) -> tuple[str, StoragePointer, bool]:
        """Validate and store; returns (recordHash, pointer, newly_stored).

        Content addressing makes identical puts idempotent: the hash (and
        locator) depend only on the canonical resource bytes.
        """
        validate_resource(resource)
        data = canonical_json(resource.to_dict())
        record_hash = hash_canonical(resource.to_dict())
        newly_stored = self.backend_for(self.default_backend).put(record_hash, data)
        return record_hash, StoragePointer(self.default_backend, record_hash), newly_stored

    def make_proxy(self, pointer: StoragePointer, expected_hash: str) -> RecordProxy:
        return RecordProxy(self, pointer, expected_hash)

    def delete_if_unreferenced(self, pointer: StoragePointer) -> None:
        self.backend_for(pointer.backend).delete(pointer.locator)

    def object_count(self) -> int:
        return self.backend_for(self.default_backend).count()

    @property
    def read_count(self) -> int:
        return self.backend_for(self.default_backend).read_count
