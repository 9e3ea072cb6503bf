"""HTTP face of the examination center.

Every endpoint is a thin delegation to one ExamCenter operation; domain
errors surface as a uniform envelope {code, message, retriable}.  Requests
that fail body validation are rejected before any effect (code
MalformedRequest).  Authentication and result-check endpoints are rate
limited per identity.
"""

from __future__ import annotations

import base64
import binascii
import threading
from datetime import datetime
from typing import Any

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse, PlainTextResponse
from pydantic import BaseModel, Field

from .attestation import LockdownReport, glyph_for
from .center import ExamCenter, Unauthorized
from .clock import ManualClock
from .config import ServiceConfig
from .errors import SecurexamError

API_PREFIX = "/v1"


class ServiceError(SecurexamError):
    pass


class MalformedRequest(ServiceError):
    pass


class Throttled(ServiceError):
    retriable = True


# HTTP status per envelope code; the envelope's code field is the contract,
# the status is a transport hint.
_STATUS = {
    "MalformedRequest": 400,
    "BadSignature": 400,
    "Tampered": 400,
    "MalformedAnswer": 400,
    "UnknownCandidate": 401,
    "TokenExpired": 401,
    "BadCredentials": 401,
    "BadPin": 401,
    "Unauthorized": 403,
    "LockdownRejected": 403,
    "EmbargoActive": 403,
    "UnknownSitting": 404,
    "UnknownQuestion": 404,
    "NoScriptOnRecord": 404,
    "NoPackageForExam": 404,
    "Throttled": 429,
}
_DEFAULT_STATUS = 409


def _envelope(code: str, message: str, retriable: bool) -> JSONResponse:
    return JSONResponse(status_code=_STATUS.get(code, _DEFAULT_STATUS),
                        content={"code": code, "message": message,
                                 "retriable": retriable})


class RateLimiter:
    """Sliding-window failure counter per identity.

    After ``limit`` failures inside ``window_seconds`` the identity is
    throttled until the oldest failure leaves the window.
    """

    def __init__(self, limit: int, window_seconds: float):
        self.limit = limit
        self.window = window_seconds
        self._failures: dict[str, list[datetime]] = {}
        self._lock = threading.Lock()

    def check(self, identity: str, now: datetime) -> None:
        with self._lock:
            stamps = self._failures.get(identity, [])
            stamps = [t for t in stamps
                      if (now - t).total_seconds() < self.window]
            self._failures[identity] = stamps
            if len(stamps) >= self.limit:
                raise Throttled("too many failed attempts; try again later")

    def record_failure(self, identity: str, now: datetime) -> None:
        with self._lock:
            self._failures.setdefault(identity, []).append(now)


# -- request bodies ---------------------------------------------------------

class PackageUpload(BaseModel):
    package_b64: str
    author: str = "lecturer"


class AuthRequest(BaseModel):
    reg_no: str
    identity_no: str
    sitting_id: str


class BeginRequest(BaseModel):
    communications_disabled: bool
    external_storage_blocked: bool
    environment_digest: str  # hex
    client_time: str | None = None


class AnswerBody(BaseModel):
    value: str


class ConfirmBody(BaseModel):
    observed_index: int
    observed_code: str


class ResultCheckBody(BaseModel):
    reg_no: str
    identity_no: str
    pin: str


class CardRequest(BaseModel):
    reg_no: str
    sitting_id: str


class EssayMarkBody(BaseModel):
    reg_no: str
    exam_id: str
    question_id: str
    awarded: int
    marker_id: str


class AdvanceBody(BaseModel):
    seconds: float = Field(ge=0)


def create_app(center: ExamCenter,
               config: ServiceConfig | None = None) -> FastAPI:
    config = config or ServiceConfig()
    app = FastAPI(title="exam center service", docs_url=None, redoc_url=None)
    limiter = RateLimiter(config.rate_limit_failures,
                          config.rate_limit_window_seconds)
    app.state.center = center
    app.state.config = config

    @app.exception_handler(SecurexamError)
    async def domain_error(request: Request, exc: SecurexamError):
        return _envelope(exc.public_code, str(exc), exc.retriable)

    @app.exception_handler(RequestValidationError)
    async def malformed(request: Request, exc: RequestValidationError):
        return _envelope("MalformedRequest", "request body does not parse",
                         False)

    def require_admin(request: Request) -> None:
        if not config.admin_token:
            return
        header = request.headers.get("authorization", "")
        if header != f"Bearer {config.admin_token}":
            raise Unauthorized("admin token missing or wrong")

    # -- package intake and sitting control ---------------------------------

    @app.post(API_PREFIX + "/packages")
    async def upload_package(body: PackageUpload, request: Request):
        require_admin(request)
        try:
            blob = base64.b64decode(body.package_b64, validate=True)
        except (binascii.Error, ValueError):
            raise MalformedRequest("package_b64 is not valid base64")
        return center.upload_package(blob, actor=body.author)

    @app.post(API_PREFIX + "/sittings/{sitting_id}/open")
    async def open_sitting(sitting_id: str, request: Request):
        require_admin(request)
        return center.open_sitting(sitting_id)

    @app.get(API_PREFIX + "/sittings/{sitting_id}")
    async def sitting_status(sitting_id: str):
        progress = center.sitting_progress(sitting_id)
        image = center.security_image(sitting_id)
        glyph = glyph_for(image.image_index)
        return {**progress,
                "security_image": {**image.to_json(),
                                   "glyph_name": glyph.name},
                "server_now": center.clock.now().isoformat()}

    # -- candidate session traffic ----------------------------------------

    @app.post(API_PREFIX + "/auth")
    async def auth(body: AuthRequest):
        now = center.clock.now()
        limiter.check(body.reg_no, now)
        try:
            token = center.authenticate(body.reg_no, body.identity_no,
                                        body.sitting_id, now)
        except SecurexamError as exc:
            if exc.public_code in ("UnknownCandidate", "NotAssignedToSitting"):
                limiter.record_failure(body.reg_no, now)
            raise
        view = center.session_view(token.token)
        return {"token": token.token_hex, **view}

    @app.post(API_PREFIX + "/sessions/{token}/begin")
    async def begin(token: str, body: BeginRequest):
        try:
            digest = bytes.fromhex(body.environment_digest)
        except ValueError:
            raise MalformedRequest("environment_digest is not valid hex")
        report = LockdownReport(
            communications_disabled=body.communications_disabled,
            external_storage_blocked=body.external_storage_blocked,
            environment_digest=digest,
            client_time=datetime.fromisoformat(body.client_time)
            if body.client_time else None,
        )
        return center.begin_exam(_token_bytes(token), report)

    @app.get(API_PREFIX + "/sessions/{token}")
    async def session_status(token: str):
        return center.session_view(_token_bytes(token))

    @app.get(API_PREFIX + "/sessions/{token}/paper")
    async def paper(token: str):
        questions = center.paper_view(_token_bytes(token))
        return {"questions": questions,
                "session": center.session_view(_token_bytes(token))}

    @app.put(API_PREFIX + "/sessions/{token}/answers/{question_id}")
    async def record_answer(token: str, question_id: str, body: AnswerBody):
        return center.record_answer(_token_bytes(token), question_id,
                                    body.value)

    @app.post(API_PREFIX + "/sessions/{token}/submit")
    async def submit(token: str):
        script = center.submit(_token_bytes(token))
        return {"state": "submitted",
                "submitted_at": script.submitted_at.isoformat(),
                "termination": script.termination,
                "answered": sum(1 for v in script.answers.values() if v)}

    # -- invigilation -------------------------------------------------------

    @app.post(API_PREFIX + "/invigilator/{sitting_id}/confirm")
    async def confirm(sitting_id: str, body: ConfirmBody):
        return center.invigilator_confirm(sitting_id, body.observed_index,
                                          body.observed_code)

    # -- results ------------------------------------------------------------

    @app.post(API_PREFIX + "/results/check")
    async def results_check(body: ResultCheckBody):
        now = center.clock.now()
        limiter.check(body.reg_no, now)
        try:
            return center.check_result(body.reg_no, body.identity_no,
                                       body.pin, now)
        except SecurexamError as exc:
            if exc.public_code in ("BadCredentials", "BadPin", "CardUsed"):
                limiter.record_failure(body.reg_no, now)
            raise

    @app.post(API_PREFIX + "/cards")
    async def issue_card(body: CardRequest, request: Request):
        require_admin(request)
        return center.issue_card(body.reg_no, body.sitting_id)

    @app.post(API_PREFIX + "/marks")
    async def record_mark(body: EssayMarkBody, request: Request):
        require_admin(request)
        score = center.record_essay_mark(body.reg_no, body.exam_id,
                                         body.question_id, body.awarded,
                                         body.marker_id)
        return {"reg_no": score.reg_no, "exam_id": score.exam_id,
                "status": score.status, "total": score.total}

    @app.get(API_PREFIX + "/exams/{exam_id}/results.csv")
    async def results_csv(exam_id: str, request: Request):
        require_admin(request)
        return PlainTextResponse(center.export_results_csv(exam_id),
                                 media_type="text/csv")

    # -- clock --------------------------------------------------------------

    @app.get(API_PREFIX + "/time")
    async def server_time():
        return {"server_now": center.clock.now().isoformat()}

    if config.test_clock:
        # Simulated-time control for integration tests only.
        @app.post(API_PREFIX + "/test-clock/advance")
        async def advance_clock(body: AdvanceBody):
            clock = center.clock
            if not isinstance(clock, ManualClock):
                raise MalformedRequest("service clock is not adjustable")
            clock.advance(seconds=body.seconds)
            now = clock.now()
            expired = center.engine.expire_due_sessions(now)
            center.stores.candidate_store.audit.append(
                actor="system:test-clock", action="advance-clock",
                outcome="ok",
                detail={"seconds": body.seconds,
                        "expired_sessions": len(expired)},
                at=now)
            return {"server_now": now.isoformat(),
                    "expired_sessions": len(expired)}

    return app


def _token_bytes(token: str) -> bytes:
    try:
        raw = bytes.fromhex(token)
    except ValueError:
        raise MalformedRequest("session token is not valid hex")
    if len(raw) != 32:
        raise MalformedRequest("session token has the wrong length")
    return raw
