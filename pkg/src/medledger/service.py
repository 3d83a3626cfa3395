"""Service core: the full clinical workflows over node + record store + pubsub.

This layer owns identity mapping and composes the on-chain/off-chain flows:

* onboarding puts demographics off-chain and drives registry, plan store and
  patient account in order;
* the write path queries the registry, auto-creates missing accounts, puts the
  resource off-chain and appends (hash, pointer) on-chain — a rejected append
  garbage-collects the freshly stored object so no orphaned PHI remains;
* the read path resolves each on-chain entry through a digest-verifying proxy;
* prescriptions fan out to subscribed providers through the dispatcher after
  every mined block.

The HTTP adapter in :mod:`medledger.api` is a thin translation over this
class, so the CLI and benchmarks can drive the same flows in-process.
"""

from __future__ import annotations

import threading
import time
from typing import Any, Optional

from .clock import ManualClock, SystemClock
from .config import Config
from .contracts import SYS_FACTORY, SYS_PLAN_STORE, SYS_REGISTRY
from .errors import (
    DuplicateLabelError,
    IntegrityMismatchError,
    MedledgerError,
    NotFoundError,
    RevertError,
    SchemaViolationError,
    ServiceError,
    UnknownIdentityError,
)
from .identity import Identity, IdentityStore
from .ledger import Receipt, make_call_contract
from .node import ChainNode, open_node
from .pubsub import Dispatcher, SubscriptionFilter
from .records import AuditLog, RecordStore, Resource, StoragePointer


class ServiceCore:
    def __init__(self, config: Config, node: Optional[ChainNode] = None, persist: bool = True):
        self.config = config
        clock = ManualClock() if config.fixed_clock else SystemClock()
        self.clock = node.clock if node else clock
        self.node = node or open_node(config, clock=clock, persist=persist)
        self.audit_log = AuditLog(config.audit_path if persist else None)
        self.records = RecordStore(
            default_backend=config.record_backend,
            file_root=config.records_dir if persist else None,
            audit_log=self.audit_log,
            clock=self.clock,
        )
        self.dispatcher = Dispatcher(
            feeds_dir=config.feeds_dir if persist else None,
            subscriptions_path=config.subscriptions_path if persist else None,
            cursor_path=config.cursor_path if persist else None,
            dedup_per_subscriber=config.dedup_notifications,
        )
        self.identities = IdentityStore(
            config.identities_path if persist else None,
            deterministic_keys=config.fixed_clock,
        )
        self._proxies: dict[tuple[StoragePointer, str], Any] = {}
        self._notify = threading.Condition()
        self._ensure_admin_identity()
        for identity in self.identities.by_key.values():
            if identity.role == "provider":
                self.dispatcher.register_subscriber(identity.address)
        self.dispatch_committed()  # catch up after restart / crash

    # -- identities -----------------------------------------------------------

    def _ensure_admin_identity(self) -> None:
        key = self.config.admin_api_key
        if not key:
            raise ServiceError("ConfigError", "adminApiKey missing from config", 500)
        if key not in self.identities.by_key:
            address = self.node.address_of_label(self.config.admin_label)
            self.identities.add(
                Identity(api_key=key, role="admin", eoa_label=self.config.admin_label, address=address)
            )

    def authenticate(self, api_key: str) -> Identity:
        try:
            return self.identities.authenticate(api_key)
        except UnknownIdentityError:
            raise ServiceError("Unauthenticated", "unrecognized API key", 401) from None

    @staticmethod
    def _require_role(identity: Identity, *roles: str) -> None:
        if identity.role not in roles:
            raise ServiceError("Forbidden", f"requires role in {roles}", 403)

    # -- mining / dispatch ------------------------------------------------------

    def receipts_of_block(self, height: int) -> list[Receipt]:
        block = self.node.get_block(height)
        return [self.node.receipts[tx.id] for tx in block.transactions]

    def dispatch_committed(self) -> int:
        """Dispatch every committed block past the cursor (startup catch-up)."""
        delivered = 0
        while self.dispatcher.cursor < self.node.height:
            delivered += self.dispatcher.dispatch_block(
                self.dispatcher.cursor + 1, self.receipts_of_block(self.dispatcher.cursor + 1)
            )
        if delivered:
            with self._notify:
                self._notify.notify_all()
        return delivered

    def mine(self, max_txs: Optional[int] = None) -> dict:
        block = self.node.mine(max_txs)
        self.dispatch_committed()
        return {
            "height": block.height,
            "headerHash": block.header_hash,
            "txCount": len(block.transactions),
            "powAttempts": self.node.last_mine_attempts,
        }

    def _maybe_automine(self, force: bool) -> None:
        threshold = self.config.auto_mine_threshold
        if len(self.node.mempool) == 0:
            return
        if force or (threshold > 0 and len(self.node.mempool) >= threshold):
            self.mine()

    def _call_mined(self, sender_label: str, target: str, function: str, args: dict) -> Receipt:
        """Submit one contract call, mine synchronously, return its receipt."""
        tx_id = self.node.submit_payload(sender_label, make_call_contract(target, function, args))
        self._maybe_automine(force=True)
        return self.node.get_receipt(tx_id)

    @staticmethod
    def _revert_error(receipt: Receipt, default_status: int = 400) -> ServiceError:
        reason = receipt.revert_reason or "Reverted"
        status = default_status
        if reason.startswith("Unauthorized"):
            status = 403
        elif reason.startswith(("UnknownRequest", "UnknownPlan", "UnknownUserType", "UnknownOwner")):
            status = 404
        elif reason.startswith(("AlreadyFulfilled", "DuplicateProvider", "OwnerAlreadyBound")):
            status = 409
        elif reason.startswith("NotAProvider"):
            status = 422
        return ServiceError(reason.split(":")[0], f"transaction reverted: {reason}", status, reason)

    # -- registry helpers ----------------------------------------------------------

    def registry_get(self, patient_id: str) -> Optional[str]:
        admin = self.node.address_of_label(self.config.admin_label)
        return self.node.simulate_call(
            admin, self.config.system_addresses[SYS_REGISTRY], "get", {"patientId": patient_id}
        )

    def _lookup_or_create(self, identity: Identity, patient_id: str) -> str:
        """Registry step shared by both flows: query, create the account on a miss."""
        existing = self.registry_get(patient_id)
        if existing is not None:
            return existing
        receipt = self._call_mined(
            identity.eoa_label,
            self.config.system_addresses[SYS_REGISTRY],
            "lookupOrCreate",
            {"patientId": patient_id},
        )
        if not receipt.success:
            raise self._revert_error(receipt, 403)
        return receipt.return_value

    # -- onboarding -------------------------------------------------------------------

    def onboard_patient(
        self, identity: Identity, patient_id: str, demographics: dict, plan_descriptor: dict
    ) -> dict:
        self._require_role(identity, "admin")
        if not patient_id or not isinstance(patient_id, str):
            raise ServiceError("EmptyPatientId", "patientId must be a non-empty string", 422)
        if self.identities.patient_identity(patient_id) is not None:
            raise ServiceError("DuplicatePatient", f"patient {patient_id} already onboarded", 409)

        resource = Resource(
            resource_type="Patient",
            id=patient_id,
            subject_patient_id=patient_id,
            attributes=demographics,
            authored_at=self.clock.now(),
        )
        record_hash, pointer, newly_stored = self._put_resource(resource)

        label = f"patient:{patient_id}"
        try:
            address = self.node.create_eoa(label)
        except DuplicateLabelError:
            raise ServiceError("DuplicatePatient", f"patient {patient_id} already onboarded", 409) from None

        try:
            account = self._lookup_or_create(identity, patient_id)
            bind = self._call_mined(identity.eoa_label, account, "bindOwner", {"owner": address})
            if not bind.success:
                raise self._revert_error(bind, 409)

            intern = self._call_mined(
                identity.eoa_label,
                self.config.system_addresses[SYS_PLAN_STORE],
                "intern",
                {"descriptor": plan_descriptor},
            )
            if not intern.success:
                raise self._revert_error(intern, 422)
            plan_ref = intern.return_value

            self.node.submit_payload(
                label,
                make_call_contract(
                    account,
                    "setInsurancePlan",
                    {"planRef": plan_ref, "extrinsic": {"memberNumber": f"M-{patient_id}", "groupCode": "default"}},
                ),
            )
            append_tx = self.node.submit_payload(
                label,
                make_call_contract(
                    account,
                    "appendRecord",
                    {"recordHash": record_hash, "pointer": pointer.encode(), "resourceType": "Patient"},
                ),
            )
            self._maybe_automine(force=True)
            append_receipt = self.node.get_receipt(append_tx)
            if not append_receipt.success:
                raise self._revert_error(append_receipt)
        except ServiceError:
            if newly_stored:
                self.records.delete_if_unreferenced(pointer)
            raise

        api_key = self.identities.make_key("patient", label)
        self.identities.add(
            Identity(
                api_key=api_key,
                role="patient",
                eoa_label=label,
                address=address,
                patient_id=patient_id,
                account_address=account,
            )
        )
        return {"accountAddress": account, "apiKey": api_key, "address": address, "planRef": plan_ref}

    def onboard_provider(self, identity: Identity, name: str) -> dict:
        self._require_role(identity, "admin")
        if not name or not isinstance(name, str):
            raise ServiceError("InvalidProviderName", "name must be a non-empty string", 422)
        label = f"provider:{name}"
        try:
            address = self.node.create_eoa(label)
        except DuplicateLabelError:
            raise ServiceError("DuplicateProvider", f"provider {name!r} already onboarded", 409) from None
        receipt = self._call_mined(
            identity.eoa_label,
            self.config.system_addresses[SYS_FACTORY],
            "create",
            {"userType": "provider", "params": {"name": name, "eoa": address}},
        )
        if not receipt.success:
            raise self._revert_error(receipt)
        api_key = self.identities.make_key("provider", label)
        self.identities.add(
            Identity(
                api_key=api_key,
                role="provider",
                eoa_label=label,
                address=address,
                name=name,
                account_address=receipt.return_value,
            )
        )
        self.dispatcher.register_subscriber(address)
        return {"apiKey": api_key, "address": address, "accountAddress": receipt.return_value}

    # -- record flows -----------------------------------------------------------------

    def _put_resource(self, resource: Resource) -> tuple[str, StoragePointer, bool]:
        try:
            return self.records.put(resource)
        except SchemaViolationError as exc:
            raise ServiceError("SchemaViolation", exc.message, 422) from exc

    def write_record(self, identity: Identity, patient_id: str, resource_dict: dict) -> dict:
        self._require_role(identity, "provider", "patient")
        if identity.role == "patient" and identity.patient_id != patient_id:
            raise ServiceError("Forbidden", "patients may only write their own records", 403)
        try:
            resource = Resource.from_dict(resource_dict)
        except (KeyError, TypeError) as exc:
            raise ServiceError("SchemaViolation", f"missing resource field: {exc}", 422) from exc
        if resource.subject_patient_id != patient_id:
            raise ServiceError(
                "SchemaViolation", "resource subjectPatientId must match the path patient id", 422
            )
        record_hash, pointer, newly_stored = self._put_resource(resource)
        try:
            account = self._lookup_or_create(identity, patient_id)
            receipt = self._call_mined(
                identity.eoa_label,
                account,
                "appendRecord",
                {
                    "recordHash": record_hash,
                    "pointer": pointer.encode(),
                    "resourceType": resource.resource_type,
                },
            )
            if not receipt.success:
                raise self._revert_error(receipt, 403)
        except ServiceError:
            # No orphaned PHI: a failed write must not leave the object behind.
            if newly_stored:
                self.records.delete_if_unreferenced(pointer)
            raise
        return {
            "entryIndex": receipt.return_value,
            "receipt": receipt.to_dict(),
            "recordHash": record_hash,
        }

    def read_records(self, identity: Identity, patient_id: str) -> list[dict]:
        self._require_role(identity, "provider", "patient")
        if identity.role == "patient" and identity.patient_id != patient_id:
            raise ServiceError("Forbidden", "patients may only read their own records", 403)
        if identity.role == "provider":
            account = self._lookup_or_create(identity, patient_id)
        else:
            account = self.registry_get(patient_id)
            if account is None:
                raise ServiceError("NotFound", f"patient {patient_id} has no account", 404)
        try:
            entries = self.node.simulate_call(identity.address, account, "listRecords", {})
        except RevertError as exc:
            raise ServiceError(exc.reason, f"read rejected: {exc.reason}", 403, exc.reason) from exc
        out = []
        for entry in entries:
            pointer = StoragePointer.decode(entry["pointer"])
            key = (pointer, entry["recordHash"])
            proxy = self._proxies.get(key)
            if proxy is None:
                proxy = self.records.make_proxy(pointer, entry["recordHash"])
                self._proxies[key] = proxy
            try:
                resource = proxy.resolve(identity.address)
            except IntegrityMismatchError as exc:
                raise ServiceError("IntegrityMismatch", str(exc), 500) from exc
            except NotFoundError as exc:
                raise ServiceError("NotFound", f"off-chain object missing: {exc}", 500) from exc
            out.append({"entry": entry, "resource": resource.to_dict()})
        return out

    # -- permissions --------------------------------------------------------------------

    def change_permission(self, identity: Identity, patient_id: str, provider: str, action: str) -> dict:
        self._require_role(identity, "patient")
        if identity.patient_id != patient_id:
            raise ServiceError("Forbidden", "patients may only manage their own access list", 403)
        if action not in ("grant", "revoke"):
            raise ServiceError("InvalidAction", "action must be grant or revoke", 422)
        function = "grantAccess" if action == "grant" else "revokeAccess"
        receipt = self._call_mined(identity.eoa_label, identity.account_address, function, {"provider": provider})
        if not receipt.success:
            raise self._revert_error(receipt, 403)
        return {"receipt": receipt.to_dict()}

    def get_access(self, identity: Identity, patient_id: str) -> dict:
        account = self.registry_get(patient_id)
        if account is None:
            raise ServiceError("NotFound", f"patient {patient_id} has no account", 404)
        try:
            return self.node.simulate_call(identity.address, account, "getAccess", {})
        except RevertError as exc:
            raise ServiceError(exc.reason, "access view rejected", 403, exc.reason) from exc

    # -- prescriptions ---------------------------------------------------------------------

    def request_prescription(self, identity: Identity, patient_id: str, medication_code: str) -> dict:
        self._require_role(identity, "patient")
        if identity.patient_id != patient_id:
            raise ServiceError("Forbidden", "patients may only request for themselves", 403)
        receipt = self._call_mined(
            identity.eoa_label,
            identity.account_address,
            "requestPrescription",
            {"medicationCode": medication_code},
        )
        if not receipt.success:
            raise self._revert_error(receipt, 403)
        return {"requestId": receipt.return_value, "status": "open", "receipt": receipt.to_dict()}

    def fulfill_prescription(
        self, identity: Identity, patient_id: str, request_id: int, attributes: dict
    ) -> dict:
        self._require_role(identity, "provider")
        account = self.registry_get(patient_id)
        if account is None:
            raise ServiceError("NotFound", f"patient {patient_id} has no account", 404)
        attrs = dict(attributes or {})
        attrs.setdefault("status", "completed")
        if "medicationCode" not in attrs:
            raise ServiceError("SchemaViolation", "fulfillment requires a medicationCode attribute", 422)
        resource = Resource(
            resource_type="MedicationRequest",
            id=f"{patient_id}-rx-{request_id}",
            subject_patient_id=patient_id,
            attributes=attrs,
            authored_at=self.clock.now(),
        )
        record_hash, pointer, newly_stored = self._put_resource(resource)
        try:
            receipt = self._call_mined(
                identity.eoa_label,
                account,
                "fulfillPrescription",
                {"requestId": request_id, "recordHash": record_hash, "pointer": pointer.encode()},
            )
            if not receipt.success:
                raise self._revert_error(receipt, 403)
        except ServiceError:
            if newly_stored:
                self.records.delete_if_unreferenced(pointer)
            raise
        return {"entryIndex": receipt.return_value, "receipt": receipt.to_dict()}

    def list_prescriptions(self, identity: Identity, patient_id: str) -> list[dict]:
        account = self.registry_get(patient_id)
        if account is None:
            raise ServiceError("NotFound", f"patient {patient_id} has no account", 404)
        try:
            return self.node.simulate_call(identity.address, account, "listPrescriptions", {})
        except RevertError as exc:
            raise ServiceError(exc.reason, "prescription view rejected", 403, exc.reason) from exc

    # -- subscriptions / notifications --------------------------------------------------------

    def subscribe(self, identity: Identity, account_address: Optional[str], topic: Optional[str], wildcard: bool) -> dict:
        self._require_role(identity, "provider")
        try:
            sub_id = self.dispatcher.subscribe(
                identity.address,
                SubscriptionFilter(account_address, topic, wildcard),
                at_height=self.node.height,
            )
        except MedledgerError as exc:
            raise ServiceError(exc.code, exc.message, 422) from exc
        return {"subscriptionId": sub_id}

    def unsubscribe(self, identity: Identity, subscription_id: str) -> None:
        self._require_role(identity, "provider")
        try:
            sub = self.dispatcher.get_subscription(subscription_id)
        except MedledgerError as exc:
            raise ServiceError(exc.code, exc.message, 404) from exc
        if sub.subscriber_id != identity.address:
            raise ServiceError("Forbidden", "not your subscription", 403)
        self.dispatcher.unsubscribe(subscription_id)

    def notifications(self, identity: Identity, after_seq: int, wait_seconds: float = 0) -> list[dict]:
        self._require_role(identity, "provider")
        deadline = self.clock_time() + min(wait_seconds or 0, 30)
        while True:
            try:
                notes = self.dispatcher.poll(identity.address, after_seq)
            except MedledgerError as exc:
                raise ServiceError(exc.code, exc.message, 404) from exc
            if notes or self.clock_time() >= deadline:
                return [n.to_dict() for n in notes]
            with self._notify:
                self._notify.wait(timeout=min(0.5, max(0.01, deadline - self.clock_time())))

    @staticmethod
    def clock_time() -> float:
        return time.monotonic()

    # -- chain inspection ------------------------------------------------------------------------

    def get_block_dict(self, height: int) -> dict:
        try:
            return self.node.get_block(height).to_dict()
        except NotFoundError as exc:
            raise ServiceError("NotFound", str(exc), 404) from exc

    def get_receipt_dict(self, tx_id: str) -> dict:
        try:
            return self.node.get_receipt(tx_id).to_dict()
        except NotFoundError as exc:
            raise ServiceError("NotFound", str(exc), 404) from exc

    def validate_chain(self) -> dict:
        return self.node.validate().to_dict()

    def whoami(self, identity: Identity) -> dict:
        d = identity.to_dict()
        d.pop("apiKey")
        return d
