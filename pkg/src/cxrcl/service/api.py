"""HTTP/JSON surface over the screening service.

Endpoints: POST /auth/login, POST /submissions, GET /submissions/{id},
GET /submissions, POST /submissions/{id}/confirm, GET /metrics, GET /healthz.
Every error body is {code, message}.
"""

from __future__ import annotations

import base64
import binascii

from fastapi import Body, FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse

from .auth import User
from .core import ScreeningService
from .errors import (
    AuthenticationError,
    AuthorizationError,
    NotFoundError,
    ServiceError,
    StateError,
    ValidationError,
)

_STATUS_CODES = {
    AuthenticationError: 401,
    AuthorizationError: 403,
    ValidationError: 400,
    NotFoundError: 404,
    StateError: 409,
}


def _error_response(code: str, message: str, status: int) -> JSONResponse:
    return JSONResponse({"code": code, "message": message}, status_code=status)


def build_app(service: ScreeningService) -> FastAPI:
    app = FastAPI(title="screening-service", docs_url=None, redoc_url=None)

    @app.exception_handler(ServiceError)
    async def handle_service_error(request: Request, exc: ServiceError):
        return _error_response(exc.code, str(exc), _STATUS_CODES.get(type(exc), 500))

    @app.exception_handler(RequestValidationError)
    async def handle_request_error(request: Request, exc: RequestValidationError):
        return _error_response("validation_error", str(exc.errors()), 400)

    def current_user(request: Request) -> User:
        header = request.headers.get("authorization", "")
        token = header[7:] if header.lower().startswith("bearer ") else None
        return service.auth.resolve(token)

    @app.get("/healthz")
    async def healthz():
        return {"status": "ok"}

    @app.post("/auth/login")
    async def login(payload: dict = Body(...)):
        session = service.auth.login(
            payload.get("user_id", ""), payload.get("password", "")
        )
        user = service.auth.users[session.user_id]
        return {
            "token": session.token,
            "role": user.role,
            "patients": list(user.patients),
        }

    @app.post("/submissions")
    async def create_submission(request: Request, payload: dict = Body(...)):
        user = current_user(request)
        encoded = payload.get("image_base64")
        if not isinstance(encoded, str):
            raise ValidationError("image_base64 is required")
        try:
            image_bytes = base64.b64decode(encoded, validate=True)
        except (binascii.Error, ValueError) as exc:
            raise ValidationError(f"invalid base64 image payload: {exc}") from exc
        sid = service.enqueue(
            user,
            payload.get("type", ""),
            image_bytes,
            label=payload.get("label"),
        )
        return {"id": sid}

    @app.get("/submissions/{sid}")
    async def get_submission(sid: int, request: Request):
        user = current_user(request)
        return service.get_submission(user, sid)

    @app.get("/submissions")
    async def list_submissions(
        request: Request,
        status: str | None = None,
        type: str | None = None,
        submitter: str | None = None,
    ):
        user = current_user(request)
        return service.list_submissions(
            user, status=status, sub_type=type, submitter=submitter
        )

    @app.post("/submissions/{sid}/confirm")
    async def confirm(sid: int, request: Request, payload: dict = Body(...)):
        user = current_user(request)
        label = payload.get("label")
        if not isinstance(label, str):
            raise ValidationError("label is required")
        learn_id = service.confirm(user, sid, label)
        return {"learn_id": learn_id}

    @app.get("/metrics")
    async def metrics():
        return service.metrics()

    return app
