import hashlib
import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from medledger.clock import ManualClock
from medledger.errors import (
    BackendUnavailableError,
    IntegrityMismatchError,
    NotFoundError,
    SchemaViolationError,
)
from medledger.records import (
    RecordStore,
    Resource,
    StoragePointer,
    validate_resource,
)


def make_store(backend: str, tmp_path) -> RecordStore:
    return RecordStore(
        default_backend=backend,
        file_root=tmp_path / "records",
        clock=ManualClock(),
    )


@pytest.fixture(params=["memory", "file"])
def store(request, tmp_path) -> RecordStore:
    return make_store(request.param, tmp_path)


def observation(value="120/80", rid="obs-1") -> Resource:
    return Resource("Observation", rid, "p-001", {"code": "bp", "value": value}, 100)


# --- schema validation ----------------------------------------------------------

def test_medication_request_requires_code():
    resource = Resource("MedicationRequest", "rx-1", "p-001", {"status": "active"}, 1)
    with pytest.raises(SchemaViolationError) as err:
        validate_resource(resource)
    assert any("medicationCode" in e for e in err.value.field_errors)


def test_well_formed_observation_passes():
    validate_resource(observation())


def test_unknown_resource_type_rejected():
    with pytest.raises(SchemaViolationError):
        validate_resource(Resource("Claim", "c-1", "p-001", {}, 1))


def test_patient_subject_must_equal_id():
    bad = Resource("Patient", "p-001", "p-002", {"name": "A", "birthDate": "1990"}, 1)
    with pytest.raises(SchemaViolationError):
        validate_resource(bad)


def test_attribute_types_checked():
    bad = Resource("Observation", "o", "p", {"code": "c", "value": [1, 2]}, 1)
    with pytest.raises(SchemaViolationError):
        validate_resource(bad)


def test_float_attributes_rejected():
    bad = Resource("Observation", "o", "p", {"code": "c", "value": 1.5}, 1)
    with pytest.raises(SchemaViolationError):
        validate_resource(bad)


# --- put -------------------------------------------------------------------------

def test_put_is_content_addressed(store):
    h1, p1, new1 = store.put(observation())
    h2, p2, new2 = store.put(observation())
    assert h1 == h2 and p1 == p2
    assert new1 and not new2
    assert store.object_count() == 1


def test_put_differs_on_one_attribute(store):
    h1, _, _ = store.put(observation("120/80"))
    h2, _, _ = store.put(observation("130/85"))
    assert h1 != h2
    assert store.object_count() == 2


def test_put_rejects_invalid(store):
    with pytest.raises(SchemaViolationError):
        store.put(Resource("Observation", "o", "p", {}, 1))
    assert store.object_count() == 0


def test_file_backend_locator_is_hex_hash_and_round_trips(tmp_path):
    store = make_store("file", tmp_path)
    record_hash, pointer, _ = store.put(observation())
    assert pointer.backend == "file"
    assert pointer.locator == record_hash
    raw = (tmp_path / "records" / pointer.locator).read_bytes()
    # the stored bytes re-digest to the on-chain hash (reference sha256)
    assert hashlib.sha256(raw).hexdigest() == record_hash
    assert json.loads(raw) == observation().to_dict()


def test_unconfigured_backend_unavailable(tmp_path):
    store = RecordStore(default_backend="memory")
    with pytest.raises(BackendUnavailableError):
        store.backend_for("file")
    with pytest.raises(BackendUnavailableError):
        RecordStore(default_backend="file")  # no file_root configured


# --- proxy ----------------------------------------------------------------------------

def test_proxies_are_lazy(store):
    record_hash, pointer, _ = store.put(observation())
    before = store.read_count
    proxies = [store.make_proxy(pointer, record_hash) for _ in range(1000)]
    assert store.read_count == before
    assert all(p.cached is None for p in proxies)


def test_proxy_for_unknown_pointer_fails_only_on_resolve(store):
    proxy = store.make_proxy(StoragePointer(store.default_backend, "ff" * 32), "ff" * 32)
    with pytest.raises(NotFoundError):
        proxy.resolve("reader-1")


def test_proxy_equality_on_pointer_and_hash(store):
    record_hash, pointer, _ = store.put(observation())
    assert store.make_proxy(pointer, record_hash) == store.make_proxy(pointer, record_hash)
    assert store.make_proxy(pointer, record_hash) != store.make_proxy(pointer, "aa" * 32)


def test_resolve_caches_and_audits(store):
    record_hash, pointer, _ = store.put(observation())
    proxy = store.make_proxy(pointer, record_hash)
    before = store.read_count
    first = proxy.resolve("reader-1")
    second = proxy.resolve("reader-2")
    assert first == second == observation()
    assert store.read_count == before + 1  # one backend read, served from cache after
    assert [a["accessorId"] for a in proxy.audit] == ["reader-1", "reader-2"]
    assert len(store.audit_log.entries) == 2


def test_resolve_verifies_digest_from_chain_entry(store):
    record_hash, pointer, _ = store.put(observation())
    resolved = store.make_proxy(pointer, record_hash).resolve("r")
    assert resolved.digest() == record_hash


def test_corrupted_file_backend_detected(tmp_path):
    store = make_store("file", tmp_path)
    record_hash, pointer, _ = store.put(observation())
    path = tmp_path / "records" / pointer.locator
    raw = bytearray(path.read_bytes())
    raw[5] ^= 0x01
    path.write_bytes(bytes(raw))
    proxy = store.make_proxy(pointer, record_hash)
    with pytest.raises(IntegrityMismatchError):
        proxy.resolve("reader-1")


def test_corrupted_memory_backend_detected():
    store = RecordStore(default_backend="memory")
    record_hash, pointer, _ = store.put(observation())
    store.backends["memory"]._objects[pointer.locator] = b'{"not":"the same"}'
    with pytest.raises(IntegrityMismatchError):
        store.make_proxy(pointer, record_hash).resolve("r")


def test_audit_entries_equal_resolve_calls(store):
    record_hash, pointer, _ = store.put(observation())
    proxy = store.make_proxy(pointer, record_hash)
    for i in range(7):
        proxy.resolve(f"reader-{i}")
    assert len(proxy.audit) == 7


def test_delete_if_unreferenced(store):
    _, pointer, _ = store.put(observation())
    assert store.object_count() == 1
    store.delete_if_unreferenced(pointer)
    assert store.object_count() == 0


# --- round-trip property ------------------------------------------------------------------

attribute_values = st.text(max_size=16) | st.integers(min_value=-10**9, max_value=10**9) | st.booleans()


@given(
    rtype=st.sampled_from(["Observation", "Coverage"]),
    extra=st.dictionaries(st.text(min_size=1, max_size=8), attribute_values, max_size=4),
    authored=st.integers(min_value=0, max_value=2**31),
)
def test_round_trip_integrity(rtype, extra, authored):
    required = {
        "Observation": {"code": "c", "value": "v"},
        "Coverage": {"payerName": "p", "planCode": "pc"},
    }[rtype]
    resource = Resource(rtype, "r-1", "p-1", {**extra, **required}, authored)
    store = RecordStore(default_backend="memory", clock=ManualClock())
    record_hash, pointer, _ = store.put(resource)
    resolved = store.make_proxy(pointer, record_hash).resolve("prop")
    assert resolved == resource
    assert resolved.digest() == record_hash
