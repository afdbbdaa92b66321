"""HTTP+JSON shell over `BankService`.

Every endpoint except ``POST /token`` requires a bearer token. Errors leave
as JSON problem objects::

    {"type": "about:blank", "title": ..., "status": ..., "code": ..., "detail": ...}

where ``code`` is the stable machine-readable identifier from `errors`.
"""

from __future__ import annotations

import base64
import io
import json

import numpy as np
from fastapi import Depends, FastAPI, File, Form, Query, Request, UploadFile
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse, Response

from .. import netpbm
from ..broker import ShareEnvelope
from ..errors import NotFoundError, ValidationError, VcpayError
from .adapters import PaymentAdapter
from .config import BankConfig
from .service import (
    ApiPrincipal,
    BankService,
    batch_json,
    transaction_json,
)


def _problem(status: int, code: str, detail: str) -> JSONResponse:
    return JSONResponse(
        status_code=status,
        content={
            "type": "about:blank",
            "title": code.replace("_", " "),
            "status": status,
            "code": code,
            "detail": detail,
        },
    )


def create_app(service: BankService) -> FastAPI:
    app = FastAPI(title="vcpay point of service", docs_url=None, redoc_url=None)
    app.state.service = service
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )

    @app.exception_handler(VcpayError)
    async def handle_domain_error(_req: Request, exc: VcpayError) -> JSONResponse:
        return _problem(exc.http_status, exc.code, str(exc))

    @app.exception_handler(RequestValidationError)
    async def handle_request_error(_req: Request, exc: RequestValidationError) -> JSONResponse:
        return _problem(422, "validation", str(exc.errors()))

    def principal(request: Request) -> ApiPrincipal:
        header = request.headers.get("authorization", "")
        token = header[7:] if header.lower().startswith("bearer ") else None
        return service.authenticate(token)

    # -- token ---------------------------------------------------------------

    @app.post("/token")
    async def token(request: Request) -> dict:
        content_type = request.headers.get("content-type", "")
        if content_type.startswith("application/json"):
            body = await request.json()
        else:
            form = await request.form()
            body = dict(form)
        grant = body.get("grant_type", "client_credentials")
        if grant != "client_credentials":
            raise ValidationError(f"unsupported grant_type {grant!r}")
        return service.issue_token(body.get("client_id", ""), body.get("client_secret", ""))

    # -- shares ----------------------------------------------------------------

    @app.post("/shares")
    async def upload_share(
        caller: ApiPrincipal = Depends(principal),
        meta: str = Form(...),
        share: UploadFile = File(...),
    ) -> dict:
        try:
            meta_obj = json.loads(meta)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"meta part is not valid JSON: {exc}") from exc
        payload = await share.read()
        envelope = ShareEnvelope.from_meta_json(meta_obj, payload)
        result = service.upload_share(caller, envelope)
        txn = result.transaction
        return {
            "status": result.status.value,
            "transaction": transaction_json(txn, service.transaction_meta(txn.id)),
        }

    # -- transactions ------------------------------------------------------------

    @app.get("/transactions")
    def list_transactions(
        caller: ApiPrincipal = Depends(principal),
        state: str = Query("All"),
        page: int = Query(1),
    ) -> dict:
        result = service.list_transactions(caller, state, page)
        return {
            "items": [
                transaction_json(txn, service.transaction_meta(txn.id))
                for txn in result.items
            ],
            "page": result.page,
            "pageSize": result.page_size,
            "total": result.total,
        }

    @app.get("/transactions/{txn_id}")
    def get_transaction(txn_id: int, caller: ApiPrincipal = Depends(principal)) -> dict:
        txn = service.get_transaction(caller, txn_id)
        return transaction_json(txn, service.transaction_meta(txn_id))

    @app.post("/transactions/{txn_id}/approve")
    async def approve(
        txn_id: int, request: Request, caller: ApiPrincipal = Depends(principal)
    ) -> dict:
        body = await _optional_json(request)
        txn, batch = service.operator_decide(
            caller, txn_id, "Approve", body.get("note", ""), body.get("source", "human")
        )
        return {
            "transaction": transaction_json(txn, service.transaction_meta(txn_id)),
            "batch": batch_json(batch) if batch else None,
        }

    @app.post("/transactions/{txn_id}/reject")
    async def reject(
        txn_id: int, request: Request, caller: ApiPrincipal = Depends(principal)
    ) -> dict:
        body = await _optional_json(request)
        txn, _ = service.operator_decide(
            caller, txn_id, "Reject", body.get("note", ""), body.get("source", "human")
        )
        return {
            "transaction": transaction_json(txn, service.transaction_meta(txn_id)),
            "batch": None,
        }

    @app.get("/transactions/{txn_id}/reconstruction")
    def reconstruction(
        txn_id: int,
        request: Request,
        caller: ApiPrincipal = Depends(principal),
        which: str = Query("decoded"),
    ):
        detail = service.reconstruction_detail(caller, txn_id)
        accept = request.headers.get("accept", "")
        if "image/png" in accept:
            selected = {
                "share1": detail["share_seller"],
                "share2": detail["share_buyer"],
                "stacked": detail["stacked"],
                "decoded": detail["decoded"],
            }.get(which)
            if selected is None:
                raise NotFoundError(f"image {which!r} not available for transaction {txn_id}")
            return Response(content=_pbm_to_png(selected), media_type="image/png")
        record = detail["record"]
        return {
            "transactionId": txn_id,
            "record": record.to_json() if record else None,
            "shareSeller": _b64(detail["share_seller"]),
            "shareBuyer": _b64(detail["share_buyer"]),
            "stackedPbm": _b64(detail["stacked"]),
            "decodedPbm": _b64(detail["decoded"]),
        }

    # -- batches --------------------------------------------------------------------

    @app.get("/batches")
    def list_batches(caller: ApiPrincipal = Depends(principal)) -> dict:
        return {"items": [batch_json(b) for b in service.list_batches(caller)]}

    @app.get("/batches/{batch_id}")
    def get_batch(batch_id: int, caller: ApiPrincipal = Depends(principal)) -> dict:
        return batch_json(service.get_batch(caller, batch_id))

    @app.post("/batches/{batch_id}/settle")
    async def settle(
        batch_id: int, request: Request, caller: ApiPrincipal = Depends(principal)
    ) -> dict:
        body = await _optional_json(request)
        batch = service.settle_batch(
            caller,
            batch_id,
            mock_outcome=body.get("mockOutcome"),
            mock_reason=body.get("reason"),
        )
        return batch_json(batch)

    # -- export, blacklist, jobs -----------------------------------------------------

    @app.get("/export.csv")
    def export_csv(
        caller: ApiPrincipal = Depends(principal), state: str = Query("All")
    ) -> Response:
        return Response(
            content=service.export_csv(caller, state),
            media_type="text/csv",
            headers={"Content-Disposition": "attachment; filename=transactions.csv"},
        )

    @app.get("/blacklist")
    def blacklist(caller: ApiPrincipal = Depends(principal)) -> dict:
        return {
            "items": [
                {
                    "party": entry.party.identifier,
                    "role": entry.party.role.value,
                    "reason": entry.reason.value,
                    "since": entry.since.isoformat(),
                }
                for entry in service.blacklist_entries(caller)
            ]
        }

    @app.delete("/blacklist/{party}")
    def unblacklist(party: str, caller: ApiPrincipal = Depends(principal)) -> dict:
        service.remove_blacklist_entry(caller, party)
        return {"removed": party}

    @app.get("/notifications")
    def notifications(caller: ApiPrincipal = Depends(principal)) -> dict:
        return {"items": service.notifications(caller)}

    @app.post("/jobs/drain")
    def drain(caller: ApiPrincipal = Depends(principal)) -> dict:
        return {"ran": service.drain_jobs_as(caller)}

    return app


async def _optional_json(request: Request) -> dict:
    raw = await request.body()
    if not raw:
        return {}
    try:
        body = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"body is not valid JSON: {exc}") from exc
    if not isinstance(body, dict):
        raise ValidationError("body must be a JSON object")
    return body


def _b64(payload: bytes | None) -> str | None:
    return base64.b64encode(payload).decode("ascii") if payload else None


def _pbm_to_png(pbm: bytes) -> bytes:
    from PIL import Image

    pixels = netpbm.read_pbm(pbm)
    luminance = ((1 - pixels) * 255).astype(np.uint8)
    image = Image.fromarray(luminance, mode="L")
    buffer = io.BytesIO()
    image.save(buffer, format="PNG")
    return buffer.getvalue()


def build_service(config: BankConfig, adapter: PaymentAdapter | None = None) -> BankService:
    return BankService(config, adapter)
