"""HTTP JSON API over the service core.

Every endpoint authenticates via the ``Authorization`` header carrying an API
key (a ``Bearer `` prefix is accepted).  Errors return both an HTTP status and
the on-chain revert reason when one exists, so clients can trace rejections
back to the contract decision.
"""

from __future__ import annotations

from pathlib import Path
from typing import Optional

from fastapi import Depends, FastAPI, Header, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from .errors import ServiceError
from .identity import Identity
from .service import ServiceCore


class OnboardPatientBody(BaseModel):
    patientId: str
    demographics: dict
    planDescriptor: dict


class OnboardProviderBody(BaseModel):
    name: str


class MineBody(BaseModel):
    maxTxs: Optional[int] = None


class PermissionBody(BaseModel):
    provider: str
    action: str


class PrescriptionBody(BaseModel):
    medicationCode: str


class FulfillBody(BaseModel):
    attributes: dict = {}


class SubscribeBody(BaseModel):
    accountAddress: Optional[str] = None
    topic: Optional[str] = None
    wildcard: bool = False


def create_app(core: ServiceCore) -> FastAPI:
    app = FastAPI(title="medledger", docs_url=None, redoc_url=None)
    app.state.core = core
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )

    @app.exception_handler(ServiceError)
    async def service_error_handler(_request: Request, exc: ServiceError):
        return JSONResponse(
            status_code=exc.http_status,
            content={
                "error": {
                    "code": exc.code,
                    "message": exc.message,
                    "revertReason": exc.revert_reason,
                }
            },
        )

    def identity(authorization: str = Header(default="")) -> Identity:
        key = authorization.removeprefix("Bearer ").strip()
        return core.authenticate(key)

    # -- admin ------------------------------------------------------------

    @app.post("/admin/patients", status_code=201)
    def onboard_patient(body: OnboardPatientBody, ident: Identity = Depends(identity)):
        return core.onboard_patient(ident, body.patientId, body.demographics, body.planDescriptor)

    @app.post("/admin/providers", status_code=201)
    def onboard_provider(body: OnboardProviderBody, ident: Identity = Depends(identity)):
        return core.onboard_provider(ident, body.name)

    @app.post("/admin/mine")
    def mine(body: MineBody, ident: Identity = Depends(identity)):
        core._require_role(ident, "admin")
        try:
            return core.mine(body.maxTxs)
        except Exception as exc:  # EmptyMempool and friends
            raise ServiceError(getattr(exc, "code", "MineFailed"), str(exc), 409) from exc

    # -- patient records -----------------------------------------------------

    @app.get("/patients/{patient_id}/records")
    def read_records(patient_id: str, ident: Identity = Depends(identity)):
        return {"records": core.read_records(ident, patient_id)}

    @app.post("/patients/{patient_id}/records", status_code=201)
    def write_record(patient_id: str, body: dict, ident: Identity = Depends(identity)):
        return core.write_record(ident, patient_id, body)

    @app.post("/patients/{patient_id}/permissions")
    def change_permission(patient_id: str, body: PermissionBody, ident: Identity = Depends(identity)):
        return core.change_permission(ident, patient_id, body.provider, body.action)

    @app.get("/patients/{patient_id}/access")
    def get_access(patient_id: str, ident: Identity = Depends(identity)):
        return core.get_access(ident, patient_id)

    # -- prescriptions ----------------------------------------------------------

    @app.post("/patients/{patient_id}/prescriptions", status_code=201)
    def request_prescription(patient_id: str, body: PrescriptionBody, ident: Identity = Depends(identity)):
        return core.request_prescription(ident, patient_id, body.medicationCode)

    @app.get("/patients/{patient_id}/prescriptions")
    def list_prescriptions(patient_id: str, ident: Identity = Depends(identity)):
        return {"prescriptions": core.list_prescriptions(ident, patient_id)}

    @app.post("/patients/{patient_id}/prescriptions/{request_id}/fulfill")
    def fulfill_prescription(
        patient_id: str, request_id: int, body: FulfillBody, ident: Identity = Depends(identity)
    ):
        return core.fulfill_prescription(ident, patient_id, request_id, body.attributes)

    # -- provider subscriptions ----------------------------------------------------

    @app.post("/providers/subscriptions", status_code=201)
    def subscribe(body: SubscribeBody, ident: Identity = Depends(identity)):
        return core.subscribe(ident, body.accountAddress, body.topic, body.wildcard)

    @app.delete("/providers/subscriptions/{subscription_id}", status_code=204)
    def unsubscribe(subscription_id: str, ident: Identity = Depends(identity)):
        core.unsubscribe(ident, subscription_id)

    @app.get("/providers/notifications")
    def notifications(
        after: int = -1, wait: float = 0, ident: Identity = Depends(identity)
    ):
        notes = core.notifications(ident, after, wait)
        next_after = notes[-1]["deliverySeq"] if notes else after
        return {"notifications": notes, "nextAfter": next_after}

    # -- chain -------------------------------------------------------------------------

    @app.get("/chain/blocks/{height}")
    def get_block(height: int, ident: Identity = Depends(identity)):
        return core.get_block_dict(height)

    @app.get("/chain/validate")
    def validate(ident: Identity = Depends(identity)):
        return core.validate_chain()

    @app.get("/chain/receipts/{tx_id}")
    def get_receipt(tx_id: str, ident: Identity = Depends(identity)):
        return core.get_receipt_dict(tx_id)

    @app.get("/me")
    def me(ident: Identity = Depends(identity)):
        return core.whoami(ident)

    ui_dir = core.config.ui_dir
    if ui_dir and Path(ui_dir).is_dir():
        app.mount("/ui", StaticFiles(directory=ui_dir, html=True), name="ui")

    return app
