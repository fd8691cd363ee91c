"""HTTP JSON facade over the election service."""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time

from fastapi import Depends, FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from . import delivery
from .audit import AuditLog
from .config import ApiConfig, load_config
from .election import ElectionService, ServiceError, Session
from .ratelimit import RateLimiter
from .store import Datastore

request_log = logging.getLogger("votegrid.requests")

# Domain error code -> HTTP status.  Anything unlisted is a 400.
_STATUS_BY_CODE = {
    "unauthorized": 401,
    "invalid_credentials": 401,
    "otp_mismatch": 401,
    "otp_expired": 401,
    "otp_consumed": 401,
    "otp_bad_length": 401,
    "forbidden": 403,
    "not_admin": 403,
    "not_approved": 403,
    "not_eligible": 403,
    "duplicate_employee_id": 409,
    "already_voted": 409,
    "not_pending": 409,
    "election_not_open": 409,
    "illegal_transition": 409,
    "no_challenge": 409,
    "otp_locked": 429,
}


def _route_class(method: str, path: str) -> str:
    if path == "/api/otp/confirm":
        return "otp"
    if path in ("/api/login", "/api/register"):
        return "auth"
    return "default"


def _error_body(code: str, message: str) -> dict:
    return {"error": {"code": code, "message": message}}


class RegisterBody(BaseModel):
    employee_id: str
    password: str
    lastname: str
    firstname: str
    college: str
    position: str
    contact_number: str
    email: str


class LoginBody(BaseModel):
    employee_id: str
    password: str


class OtpRequestBody(BaseModel):
    employee_id: str


class OtpConfirmBody(BaseModel):
    otp: str


class VotesBody(BaseModel):
    selections: dict[str, str]


class ApproveBody(BaseModel):
    employee_id: str
    decision: str


def build_service(config: ApiConfig) -> ElectionService:
    """Wire a service from configuration: datastore, audit log, transports."""
    datastore = Datastore(config.datastore_path)
    audit_log = AuditLog(config.audit_log_path)
    if config.transport == "memory":
        email = delivery.MemoryTransport()
        sms = delivery.MemoryTransport()
    elif config.transport == "spool":
        email = delivery.FileSpoolTransport(config.spool_dir)
        sms = delivery.FileSpoolTransport(config.spool_dir)
    else:
        email = delivery.SmtpTransport(**config.smtp)
        sms = delivery.HttpGatewayTransport(**config.sms_gateway)
    dispatcher = delivery.Dispatcher(email_transport=email, sms_transport=sms,
                                     audit_log=audit_log)
    kwargs = {}
    if config.colleges:
        kwargs["colleges"] = config.colleges
    if config.positions:
        kwargs["positions"] = config.positions
    service = ElectionService(
        datastore, audit_log, dispatcher,
        offices=config.offices,
        otp_ttl=config.otp_ttl_seconds,
        session_ttl=config.session_ttl_seconds,
        lockout_threshold=config.lockout_threshold,
        lockout_seconds=config.lockout_seconds,
        **kwargs,
    )
    for admin in config.admins:
        if datastore.get_voter(admin["employee_id"]) is None:
            service.bootstrap_admin(**admin)
    for entry in config.candidates:
        known = {c.name for c in datastore.list_candidates()}
        if entry["name"] not in known:
            service.add_candidate(**entry)
    return service


def create_app(config: ApiConfig | None = None,
               service: ElectionService | None = None) -> FastAPI:
    config = config or ApiConfig()
    service = service or build_service(config)
    limiter = RateLimiter(config.rate_limits)

    app = FastAPI(title="votegrid", docs_url=None, redoc_url=None,
                  openapi_url=None)
    app.state.service = service
    app.state.limiter = limiter
    app.state.config = config
    app.add_middleware(CORSMiddleware, allow_origins=["*"],
                       allow_methods=["*"], allow_headers=["*"])

    def bearer_token(request: Request) -> str | None:
        header = request.headers.get("authorization", "")
        if header.lower().startswith("bearer "):
            return header[7:].strip()
        return None

    def current_session(request: Request) -> Session:
        return service.validate_session(bearer_token(request))

    def admin_session(request: Request) -> Session:
        return service.require_admin(current_session(request))

    @app.middleware("http")
    async def limit_and_log(request: Request, call_next):
        started = time.perf_counter()
        route_class = _route_class(request.method, request.url.path)
        client_ip = request.client.host if request.client else "unknown"
        keys = [f"ip:{client_ip}"]
        token = request.headers.get("authorization", "")
        if token:
            keys.append(f"session:{token}")
        decision = None
        for key in keys:
            verdict = limiter.check(key, route_class)
            if not verdict.allowed:
                decision = verdict
                break
        if decision is not None:
            response = JSONResponse(
                _error_body("rate_limited", "too many requests"),
                status_code=429,
                headers={"Retry-After": str(max(1, int(decision.retry_after + 0.5)))})
        else:
            response = await call_next(request)
        request_log.info(json.dumps({
            "method": request.method,
            "path": request.url.path,
            "status": response.status_code,
            "client": client_ip,
            "duration_ms": round((time.perf_counter() - started) * 1000, 2),
        }))
        return response

    @app.exception_handler(ServiceError)
    async def service_error_handler(request: Request, exc: ServiceError):
        status = _STATUS_BY_CODE.get(exc.code, 400)
        return JSONResponse(_error_body(exc.code, str(exc)), status_code=status)

    @app.exception_handler(RequestValidationError)
    async def validation_handler(request: Request, exc: RequestValidationError):
        return JSONResponse(_error_body("invalid_request", "request body is invalid"),
                            status_code=400)

    @app.exception_handler(Exception)
    async def unexpected_handler(request: Request, exc: Exception):
        request_log.error("unhandled error on %s %s: %r",
                          request.method, request.url.path, exc)
        return JSONResponse(_error_body("internal_error", "internal error"),
                            status_code=500)

    # -- public ------------------------------------------------------------

    @app.post("/api/register", status_code=201)
    def register(body: RegisterBody):
        record = service.register_voter(**body.model_dump())
        return {"employee_id": record.employee_id, "status": record.status}

    @app.post("/api/login")
    def login(body: LoginBody):
        session = service.authenticate_password(body.employee_id, body.password)
        return {"token": session.token, "level": session.level,
                "is_admin": session.is_admin, "expires_at": session.expires_at}

    @app.get("/api/results")
    def results():
        body = service.tally().as_dict()
        body["candidates"] = [
            {"candidate_id": c.candidate_id, "name": c.name, "office": c.office}
            for c in service.store.list_candidates()]
        body["election_status"] = service.store.get_election().status
        return body

    # -- authenticated voter flow -------------------------------------------

    @app.post("/api/otp/request")
    def otp_request(body: OtpRequestBody, session: Session = Depends(current_session)):
        issued = service.request_otp(session, body.employee_id)
        return {"table_id": issued.table_id, "expires_at": issued.expires_at,
                "warnings": list(issued.warnings)}

    @app.get("/api/otp/table")
    def otp_table(session: Session = Depends(current_session)):
        table = service.get_otp_table(session)
        return {"table_id": table.table_id, "cells": list(table.cells),
                "rows": 4, "cols": 4}

    @app.post("/api/otp/confirm")
    def otp_confirm(body: OtpConfirmBody, session: Session = Depends(current_session)):
        upgraded = service.confirm_otp(session, body.otp)
        return {"level": upgraded.level}

    @app.get("/api/ballot")
    def ballot(session: Session = Depends(current_session)):
        return service.get_ballot_form(session)

    @app.post("/api/votes")
    def votes(body: VotesBody, session: Session = Depends(current_session)):
        receipt_id = service.cast_ballot(session, body.selections)
        return {"receipt_id": receipt_id}

    # -- admin ----------------------------------------------------------------

    @app.post("/api/admin/approve")
    def approve(body: ApproveBody, session: Session = Depends(admin_session)):
        record = service.approve_voter(session, body.employee_id, body.decision)
        return {"employee_id": record.employee_id, "status": record.status}

    @app.post("/api/admin/election/open")
    def election_open(session: Session = Depends(admin_session)):
        state = service.open_election(session)
        return {"status": state.status}

    @app.post("/api/admin/election/close")
    def election_close(session: Session = Depends(admin_session)):
        state = service.close_election(session)
        return {"status": state.status}

    @app.get("/api/admin/audit")
    def audit_tail(session: Session = Depends(admin_session),
                   actor: str | None = None, event_type: str | None = None,
                   since: int | None = None, until: int | None = None):
        events = service.audit.query_events(actor=actor, event_type=event_type,
                                            since=since, until=until)
        verification = service.audit.verify_chain()
        return {
            "events": [{"seq": e.seq, "at": e.at, "actor": e.actor,
                        "event_type": e.event_type,
                        "detail_digest": e.detail_digest,
                        "prev_hash": e.prev_hash, "this_hash": e.this_hash}
                       for e in events],
            "chain_valid": verification.valid,
            "chain_broken_seq": verification.broken_seq,
        }

    return app


def main(argv=None) -> int:
    import uvicorn

    parser = argparse.ArgumentParser(prog="votegrid-server",
                                     description="Run the voting service")
    parser.add_argument("--config", help="path to the JSON configuration file")
    parser.add_argument("--host", help="bind address override")
    parser.add_argument("--port", type=int, help="bind port override")
    args = parser.parse_args(argv)

    config = load_config(args.config)
    if args.host:
        config.host = args.host
    if args.port:
        config.port = args.port

    logging.basicConfig(stream=sys.stdout, level=logging.INFO,
                        format="%(message)s")
    app = create_app(config)
    uvicorn.run(app, host=config.host, port=config.port, log_level="warning")
    return 0


if __name__ == "__main__":
    sys.exit(main())
