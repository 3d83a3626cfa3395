"""Canonical JSON encoding and SHA-256 digests.

Every identifier in the system (transaction ids, block hashes, account
addresses, record digests, plan refs) is a SHA-256 over this one encoding:
UTF-8 JSON with object keys sorted bytewise ascending, no insignificant
whitespace, and no floats.  Floats are excluded outright (NaN/Infinity have
no JSON form and float formatting is a serialization ambiguity); consensus
data is integers, strings, booleans, null, lists and objects.
"""

from __future__ import annotations

import hashlib
import json
from typing import Any

from .errors import UnserializableError

DIGEST_SIZE = 32
ZERO_DIGEST = "00" * DIGEST_SIZE


def _check(value: Any, path: str) -> None:
    if value is None or isinstance(value, (bool, int, str)):
        return
    if isinstance(value, float):
        raise UnserializableError(f"float at {path} is outside the canonical profile")
    if isinstance(value, (list, tuple)):
        for i, item in enumerate(value):
            _check(item, f"{path}[{i}]")
        return
    if isinstance(value, dict):
        for key, item in value.items():
            if not isinstance(key, str):
                raise UnserializableError(f"non-string key at {path}")
            _check(item, f"{path}.{key}")
        return
    raise UnserializableError(f"{type(value).__name__} at {path} is not canonical-encodable")


def canonical_json(value: Any) -> bytes:
    """Encode ``value`` into canonical JSON bytes, or raise Unserializable."""
    _check(value, "$")
    # sort_keys compares code points, which matches bytewise order of UTF-8.
    return json.dumps(
        value, sort_keys=True, separators=(",", ":"), ensure_ascii=False, allow_nan=False
    ).encode("utf-8")


def canonical_size(value: Any) -> int:
    return len(canonical_json(value))


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def hash_canonical(value: Any) -> str:
    """Hex digest of the canonical encoding of ``value`` (32 bytes / 64 hex chars)."""
    return sha256_bytes(canonical_json(value))


def is_digest(value: Any) -> bool:
    if not isinstance(value, str) or len(value) != DIGEST_SIZE * 2:
        return False
    try:
        bytes.fromhex(value)
    except ValueError:
        return False
    return True
