"""The health-record contract suite.

Five native contract types run on the runtime:

* ``patient_registry`` — singleton mapping patient ids to patient accounts,
  creating missing accounts through the factory.
* ``account_factory`` — versioned creation seam for typed user accounts; the
  admin can switch the active version per user type without touching existing
  accounts.  Also the directory of registered provider EOAs.
* ``patient_account`` (v1 and v2) — per-patient state: owner EOA, provider
  access list, append-only record entries (hash + pointer, no content),
  prescription requests, insurance plan reference.
* ``provider_account`` — provider profile bound to the provider's EOA.
* ``insurance_plan_store`` — content-addressed interning of plan descriptors
  shared across patients; per-plan refCount tracks current references.

Callers are addresses: the transaction sender for top-level calls, the calling
contract for nested ones.  Access lists hold provider EOA addresses, which is
what contracts observe as the caller of provider-initiated transactions.
"""

from __future__ import annotations

from typing import Any, Optional

from .canonical import hash_canonical, is_digest
from .errors import RevertError
from .runtime import CallContext, ContractTypeRegistry

PATIENT_REGISTRY = "patient_registry"
ACCOUNT_FACTORY = "account_factory"
PATIENT_ACCOUNT = "patient_account"
PROVIDER_ACCOUNT = "provider_account"
INSURANCE_PLAN_STORE = "insurance_plan_store"

# ctx.system_address keys, recorded in the genesis config
SYS_REGISTRY = "patientRegistry"
SYS_FACTORY = "accountFactory"
SYS_PLAN_STORE = "insurancePlanStore"


def _require_str(args: dict, key: str, reason: str) -> str:
    value = args.get(key)
    if not isinstance(value, str) or not value:
        raise RevertError(reason)
    return value


class PatientRegistry:
    type_id = PATIENT_REGISTRY
    version = 1

    def constructor(self, ctx: CallContext, args: dict) -> None:
        ctx.put("factory", args["factory"])
        ctx.put("admin", args["admin"])

    def _authorize(self, ctx: CallContext) -> None:
        if ctx.caller == ctx.get("admin"):
            return
        if ctx.call(ctx.get("factory"), "isProvider", {"address": ctx.caller}):
            return
        raise RevertError("Unauthorized")

    def lookup_or_create(self, ctx: CallContext, args: dict) -> str:
        patient_id = _require_str(args, "patientId", "EmptyPatientId")
        self._authorize(ctx)
        existing = ctx.get(f"entry:{patient_id}")
        if existing is not None:
            return existing
        address = ctx.call(
            ctx.get("factory"),
            "create",
            {"userType": "patient", "params": {"patientId": patient_id}},
        )
        ctx.put(f"entry:{patient_id}", address)
        ctx.emit("PatientAccountCreated", {"patientId": patient_id, "address": address})
        return address

    def get(self, ctx: CallContext, args: dict) -> Optional[str]:
        patient_id = _require_str(args, "patientId", "EmptyPatientId")
        return ctx.get(f"entry:{patient_id}")

    functions = {"lookupOrCreate": lookup_or_create, "get": get}


class AccountFactory:
    type_id = ACCOUNT_FACTORY
    version = 1

    def constructor(self, ctx: CallContext, args: dict) -> None:
        ctx.put("admin", args["admin"])
        for user_type, active in args.get("versions", {}).items():
            ctx.put(f"version:{user_type}", {"typeId": active["typeId"], "version": active["version"]})

    def create(self, ctx: CallContext, args: dict) -> str:
        user_type = _require_str(args, "userType", "UnknownUserType")
        active = ctx.get(f"version:{user_type}")
        if active is None:
            raise RevertError("UnknownUserType")
        params = args.get("params") or {}
        if user_type == "patient":
            if ctx.caller != ctx.system_address(SYS_REGISTRY):
                raise RevertError("Unauthorized")
            ctor_args = {"patientId": params["patientId"], "admin": ctx.get("admin")}
            return ctx.instantiate(active["typeId"], active["version"], ctor_args)
        if ctx.caller != ctx.get("admin"):
            raise RevertError("Unauthorized")
        if user_type == "provider":
            name = _require_str(params, "name", "InvalidProviderName")
            eoa = _require_str(params, "eoa", "InvalidProviderEOA")
            if not ctx.account_exists(eoa):
                raise RevertError("UnknownProviderEOA")
            if ctx.get(f"provider_eoa:{eoa}") is not None:
                raise RevertError("DuplicateProvider")
            address = ctx.instantiate(active["typeId"], active["version"], {"name": name, "owner": eoa})
            ctx.put(f"provider_eoa:{eoa}", address)
            return address
        return ctx.instantiate(active["typeId"], active["version"], params)

    def set_active_version(self, ctx: CallContext, args: dict) -> None:
        if ctx.caller != ctx.get("admin"):
            raise RevertError("Unauthorized")
        user_type = _require_str(args, "userType", "UnknownUserType")
        type_id, version = args["typeId"], args["version"]
        if not ctx.type_registered(type_id, version):
            raise RevertError(f"UnknownContractType:{type_id}/v{version}")
        ctx.put(f"version:{user_type}", {"typeId": type_id, "version": version})
        ctx.emit("FactoryVersionChanged", {"userType": user_type, "typeId": type_id, "version": version})

    def is_provider(self, ctx: CallContext, args: dict) -> bool:
        return ctx.get(f"provider_eoa:{args.get('address')}") is not None

    def provider_account_of(self, ctx: CallContext, args: dict) -> Optional[str]:
        return ctx.get(f"provider_eoa:{args.get('address')}")

    def get_admin(self, ctx: CallContext, args: dict) -> str:
        return ctx.get("admin")

    def active_version(self, ctx: CallContext, args: dict) -> Optional[dict]:
        return ctx.get(f"version:{args.get('userType')}")

    functions = {
        "create": create,
        "setActiveVersion": set_active_version,
        "isProvider": is_provider,
        "providerAccountOf": provider_account_of,
        "getAdmin": get_admin,
        "activeVersion": active_version,
    }


class ProviderAccount:
    type_id = PROVIDER_ACCOUNT
    version = 1

    def constructor(self, ctx: CallContext, args: dict) -> None:
        ctx.put("name", args["name"])
        ctx.put("owner", args["owner"])

    def get_profile(self, ctx: CallContext, args: dict) -> dict:
        return {"name": ctx.get("name"), "owner": ctx.get("owner")}

    functions = {"getProfile": get_profile}


class PatientAccount:
    type_id = PATIENT_ACCOUNT
    version = 1

    def constructor(self, ctx: CallContext, args: dict) -> None:
        ctx.put("patient_id", args["patientId"])
        ctx.put("admin", args["admin"])
        ctx.put("owner", "")
        ctx.put("providers", [])
        ctx.put("record_count", 0)
        ctx.put("rx_count", 0)

    # -- authorization ---------------------------------------------------

    def _owner(self, ctx: CallContext) -> str:
        return ctx.get("owner")

    def _check_write(self, ctx: CallContext) -> None:
        owner = self._owner(ctx)
        if ctx.caller == owner and owner:
            return
        if ctx.caller in ctx.get("providers"):
            return
        raise RevertError("Unauthorized")

    def _check_read(self, ctx: CallContext) -> None:
        # An unclaimed (never onboarded) account is readable: it holds no data
        # and the read path may auto-create it before any owner exists.
        owner = self._owner(ctx)
        if not owner:
            return
        if ctx.caller == owner or ctx.caller in ctx.get("providers"):
            return
        raise RevertError("Unauthorized")

    def _check_owner(self, ctx: CallContext) -> str:
        owner = self._owner(ctx)
        if not owner or ctx.caller != owner:
            raise RevertError("Unauthorized")
        return owner

    # -- ownership and access list ----------------------------------------

    def bind_owner(self, ctx: CallContext, args: dict) -> None:
        if ctx.caller != ctx.get("admin"):
            raise RevertError("Unauthorized")
        if self._owner(ctx):
            raise RevertError("OwnerAlreadyBound")
        owner = _require_str(args, "owner", "InvalidOwner")
        if not ctx.account_exists(owner):
            raise RevertError("UnknownOwner")
        ctx.put("owner", owner)

    def grant_access(self, ctx: CallContext, args: dict) -> None:
        self._check_owner(ctx)
        provider = _require_str(args, "provider", "NotAProvider")
        factory = ctx.system_address(SYS_FACTORY)
        if not ctx.call(factory, "isProvider", {"address": provider}):
            raise RevertError("NotAProvider")
        providers = ctx.get("providers")
        if provider in providers:
            return  # idempotent, no event
        ctx.put("providers", sorted(providers + [provider]))
        ctx.emit("AccessGranted", {"patientId": ctx.get("patient_id"), "provider": provider})

    def revoke_access(self, ctx: CallContext, args: dict) -> None:
        self._check_owner(ctx)
        provider = _require_str(args, "provider", "NotAProvider")
        providers = ctx.get("providers")
        if provider not in providers:
            return  # no-op, event suppressed
        ctx.put("providers", [p for p in providers if p != provider])
        ctx.emit("AccessRevoked", {"patientId": ctx.get("patient_id"), "provider": provider})

    def get_access(self, ctx: CallContext, args: dict) -> dict:
        self._check_read(ctx)
        return {
            "patientId": ctx.get("patient_id"),
            "owner": self._owner(ctx),
            "providers": ctx.get("providers"),
        }

    # -- records -----------------------------------------------------------

    def _append_entry(self, ctx: CallContext, record_hash: str, pointer: str, resource_type: str) -> int:
        index = ctx.get("record_count")
        ctx.put(
            f"record:{index}",
            {
                "recordHash": record_hash,
                "pointer": pointer,
                "resourceType": resource_type,
                "addedBy": ctx.caller,
                "blockHeight": ctx.block_height,
            },
        )
        ctx.put("record_count", index + 1)
        ctx.emit(
            "RecordAppended",
            {"patientId": ctx.get("patient_id"), "entryIndex": index, "resourceType": resource_type},
        )
        return index

    def append_record(self, ctx: CallContext, args: dict) -> int:
        self._check_write(ctx)
        record_hash = args.get("recordHash")
        if not is_digest(record_hash):
            raise RevertError("InvalidRecordHash")
        pointer = _require_str(args, "pointer", "InvalidPointer")
        resource_type = _require_str(args, "resourceType", "InvalidResourceType")
        return self._append_entry(ctx, record_hash, pointer, resource_type)

    def list_records(self, ctx: CallContext, args: dict) -> list:
        self._check_read(ctx)
        count = ctx.get("record_count")
        entries = []
        for i in range(count):
            entry = dict(ctx.get(f"record:{i}"))
            entry["entryIndex"] = i
            entries.append(entry)
        return entries

    # -- prescriptions -------------------------------------------------------

    def request_prescription(self, ctx: CallContext, args: dict) -> int:
        self._check_owner(ctx)
        code = _require_str(args, "medicationCode", "InvalidMedicationCode")
        request_id = ctx.get("rx_count")
        ctx.put(
            f"rx:{request_id}",
            {
                "medicationCode": code,
                "status": "open",
                "requestedAtHeight": ctx.block_height,
                "fulfilledBy": None,
            },
        )
        ctx.put("rx_count", request_id + 1)
        ctx.emit(
            "PrescriptionRequested",
            {"patientId": ctx.get("patient_id"), "requestId": request_id, "medicationCode": code},
        )
        return request_id

    def list_prescriptions(self, ctx: CallContext, args: dict) -> list:
        self._check_read(ctx)
        out = []
        for i in range(ctx.get("rx_count")):
            rx = dict(ctx.get(f"rx:{i}"))
            rx["requestId"] = i
            out.append(rx)
        return out

    def fulfill_prescription(self, ctx: CallContext, args: dict) -> int:
        if ctx.caller not in ctx.get("providers"):
            raise RevertError("Unauthorized")
        request_id = args.get("requestId")
        if not isinstance(request_id, int) or isinstance(request_id, bool):
            raise RevertError("UnknownRequest")
        rx = ctx.get(f"rx:{request_id}")
        if rx is None:
            raise RevertError("UnknownRequest")
        if rx["status"] != "open":
            raise RevertError("AlreadyFulfilled")
        record_hash = args.get("recordHash")
        if not is_digest(record_hash):
            raise RevertError("InvalidRecordHash")
        pointer = _require_str(args, "pointer", "InvalidPointer")
        entry_index = self._append_entry(ctx, record_hash, pointer, "MedicationRequest")
        ctx.put(
            f"rx:{request_id}",
            {**rx, "status": "fulfilled", "fulfilledBy": ctx.caller},
        )
        ctx.emit(
            "PrescriptionFulfilled",
            {
                "patientId": ctx.get("patient_id"),
                "requestId": request_id,
                "entryIndex": entry_index,
                "fulfilledBy": ctx.caller,
            },
        )
        return entry_index

    # -- insurance plan -------------------------------------------------------

    def set_insurance_plan(self, ctx: CallContext, args: dict) -> None:
        self._check_owner(ctx)
        plan_ref = args.get("planRef")
        if not is_digest(plan_ref):
            raise RevertError("UnknownPlan")
        extrinsic = args.get("extrinsic") or {}
        member = _require_str(extrinsic, "memberNumber", "InvalidExtrinsic")
        group = _require_str(extrinsic, "groupCode", "InvalidExtrinsic")
        store = ctx.system_address(SYS_PLAN_STORE)
        ctx.call(store, "acquire", {"planRef": plan_ref})
        previous = ctx.get("plan_ref")
        if previous is not None:
            ctx.call(store, "release", {"planRef": previous})
        ctx.put("plan_ref", plan_ref)
        ctx.put("plan_extrinsic", {"memberNumber": member, "groupCode": group})

    def set_insurance_plan_inline(self, ctx: CallContext, args: dict) -> None:
        # Duplicating baseline used by the dedup benchmark: stores the full
        # descriptor in this account instead of referencing the shared store.
        self._check_owner(ctx)
        descriptor = canonical_plan_descriptor(args.get("descriptor"))
        extrinsic = args.get("extrinsic") or {}
        member = _require_str(extrinsic, "memberNumber", "InvalidExtrinsic")
        group = _require_str(extrinsic, "groupCode", "InvalidExtrinsic")
        ctx.put("plan_inline", descriptor)
        ctx.put("plan_extrinsic", {"memberNumber": member, "groupCode": group})

    def get_plan(self, ctx: CallContext, args: dict) -> dict:
        self._check_read(ctx)
        return {
            "planRef": ctx.get("plan_ref"),
            "extrinsic": ctx.get("plan_extrinsic"),
            "inline": ctx.get("plan_inline"),
        }

    functions = {
        "bindOwner": bind_owner,
        "grantAccess": grant_access,
        "revokeAccess": revoke_access,
        "getAccess": get_access,
        "appendRecord": append_record,
        "listRecords": list_records,
        "requestPrescription": request_prescription,
        "listPrescriptions": list_prescriptions,
        "fulfillPrescription": fulfill_prescription,
        "setInsurancePlan": set_insurance_plan,
        "setInsurancePlanInline": set_insurance_plan_inline,
        "getPlan": get_plan,
    }


class PatientAccountV2(PatientAccount):
    """Same public surface as v1 plus a schema marker; proves the factory can
    roll the active version forward without breaking existing accounts."""

    version = 2

    def constructor(self, ctx: CallContext, args: dict) -> None:
        super().constructor(ctx, args)
        ctx.put("schema_version", 2)

    def get_schema_version(self, ctx: CallContext, args: dict) -> int:
        return ctx.get("schema_version", 1)

    functions = {**PatientAccount.functions, "getSchemaVersion": get_schema_version}


def canonical_plan_descriptor(descriptor: Any) -> dict:
    """Trim and validate a plan descriptor; raises InvalidDescriptor."""
    if not isinstance(descriptor, dict):
        raise RevertError("InvalidDescriptor")
    out = {}
    for key in ("payerName", "planCode", "coverageTier"):
        value = descriptor.get(key)
        if not isinstance(value, str) or not value.strip():
            raise RevertError("InvalidDescriptor")
        out[key] = value.strip()
    return out


def plan_ref_of(descriptor: dict) -> str:
    return hash_canonical(canonical_plan_descriptor(descriptor))


class InsurancePlanStore:
    type_id = INSURANCE_PLAN_STORE
    version = 1

    def constructor(self, ctx: CallContext, args: dict) -> None:
        pass

    def _check_patient_account(self, ctx: CallContext) -> None:
        contract_type = ctx.contract_type_of(ctx.caller)
        if contract_type is None or contract_type[0] != PATIENT_ACCOUNT:
            raise RevertError("Unauthorized")

    def intern(self, ctx: CallContext, args: dict) -> str:
        descriptor = canonical_plan_descriptor(args.get("descriptor"))
        plan_ref = hash_canonical(descriptor)
        if not ctx.has(f"plan:{plan_ref}"):
            ctx.put(f"plan:{plan_ref}", {"descriptor": descriptor, "refCount": 0})
        return plan_ref

    def acquire(self, ctx: CallContext, args: dict) -> None:
        self._check_patient_account(ctx)
        plan_ref = args.get("planRef")
        plan = ctx.get(f"plan:{plan_ref}")
        if plan is None:
            raise RevertError("UnknownPlan")
        ctx.put(f"plan:{plan_ref}", {**plan, "refCount": plan["refCount"] + 1})

    def release(self, ctx: CallContext, args: dict) -> None:
        self._check_patient_account(ctx)
        plan_ref = args.get("planRef")
        plan = ctx.get(f"plan:{plan_ref}")
        if plan is None:
            raise RevertError("UnknownPlan")
        if plan["refCount"] <= 0:
            raise RevertError("RefCountUnderflow")
        ctx.put(f"plan:{plan_ref}", {**plan, "refCount": plan["refCount"] - 1})

    def get_plan(self, ctx: CallContext, args: dict) -> Optional[dict]:
        return ctx.get(f"plan:{args.get('planRef')}")

    functions = {"intern": intern, "acquire": acquire, "release": release, "getPlan": get_plan}


def register_contract_suite(registry: ContractTypeRegistry) -> None:
    registry.register(PatientRegistry())
    registry.register(AccountFactory())
    registry.register(ProviderAccount())
    registry.register(PatientAccount())
    registry.register(PatientAccountV2())
    registry.register(InsurancePlanStore())
