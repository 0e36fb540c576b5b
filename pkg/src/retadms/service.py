"""HTTP surface: authentication, system upload, metadata and data routes.

Every response body is an envelope: ``{"ok": true, "data": ...}`` or
``{"ok": false, "error": {"code", "message", "details"}}`` with ``details``
carrying positioned diagnostics where the operation produced any.  Routes
authenticate (bearer token), authorize through the permission engine, then
delegate to the store; the service itself adds no data semantics.
"""

from __future__ import annotations

import dataclasses
import json
import secrets
from pathlib import Path
from typing import Optional

from fastapi import Body, FastAPI, File, Request, UploadFile
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse, Response
from fastapi.staticfiles import StaticFiles
from starlette.exceptions import HTTPException as StarletteHTTPException

from .config import ServiceConfig
from .errors import (
    AuthFailure,
    ParseError,
    PayloadTooLarge,
    RetaError,
    ValidationFailure,
)
from .filters import filter_from_wire
from .model import (
    GroupDef,
    UserDef,
    canonical_permission_string,
    digest_password,
    schema_from_doc,
    schema_to_doc,
    validate_instance,
    values_to_wire,
    verify_password,
)
from .permissions import (
    CROSS_TENANT,
    MISSING_PERMISSION,
    UNAUTHENTICATED,
    UNKNOWN_TARGET,
    Decision,
    Principal,
    authorize,
    effective_permissions,
)
from .reta import (
    instantiate,
    parse_data_exchange_table,
    parse_metadata_table,
    serialize_data_exchange_table,
    validate_reta,
)
from .sessions import SessionManager
from .store import DataStore
from .tabular import read_document, write_csv_bytes

_STATUS_BY_CODE = {
    "parse-error": 400,
    "validation-failure": 400,
    "data-exchange-error": 400,
    "header-mismatch": 400,
    "schema-mismatch": 400,
    "bad-filter": 400,
    "bad-aggregation": 400,
    "invalid-permission": 400,
    "bad-request": 400,
    "auth-failure": 401,
    "duplicate-tenant": 409,
    "unique-violation": 409,
    "unknown-tenant": 404,
    "unknown-schema": 404,
    "unknown-record": 404,
    "unknown-user": 404,
    "payload-too-large": 413,
}

_STATUS_BY_DENY = {
    UNAUTHENTICATED: 401,
    CROSS_TENANT: 403,
    MISSING_PERMISSION: 403,
    UNKNOWN_TARGET: 404,
}


class DenyError(Exception):
    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


class BadRequest(RetaError):
    code = "bad-request"


def _ok(data, status: int = 200) -> JSONResponse:
    return JSONResponse({"ok": True, "data": data}, status_code=status)


def _err(status: int, code: str, message: str, details=None) -> JSONResponse:
    return JSONResponse(
        {"ok": False, "error": {"code": code, "message": message, "details": details or []}},
        status_code=status,
    )


def _diag_to_wire(d) -> dict:
    return {
        "rule": d.rule,
        "message": d.message,
        "row": d.row,
        "col": d.col,
        "severity": d.severity,
    }


def create_app(config: Optional[ServiceConfig] = None, store: Optional[DataStore] = None) -> FastAPI:
    config = config or ServiceConfig()
    store = store or DataStore(config.data_dir)
    sessions = SessionManager(ttl_seconds=config.session_ttl_seconds)
    app = FastAPI(title="retadms", docs_url=None, redoc_url=None, openapi_url=None)
    app.state.store = store
    app.state.sessions = sessions
    app.state.config = config

    # a throwaway digest keeps unknown-id and wrong-password timing alike
    dummy_digest = digest_password(secrets.token_hex(8))

    # -- plumbing -----------------------------------------------------------

    @app.exception_handler(RetaError)
    def handle_domain_error(request: Request, exc: RetaError):
        details = []
        if isinstance(exc, ValidationFailure):
            details = [_diag_to_wire(d) for d in exc.diagnostics]
        elif isinstance(exc, ParseError):
            details = [{"rule": "parse-error", "message": exc.message,
                        "row": exc.row, "col": exc.col, "severity": "error"}]
        return _err(_STATUS_BY_CODE.get(exc.code, 400), exc.code, str(exc), details)

    @app.exception_handler(DenyError)
    def handle_deny(request: Request, exc: DenyError):
        return _err(_STATUS_BY_DENY[exc.reason], exc.reason, f"denied: {exc.reason}")

    @app.exception_handler(RequestValidationError)
    def handle_malformed(request: Request, exc: RequestValidationError):
        return _err(400, "bad-request", "malformed request")

    @app.exception_handler(StarletteHTTPException)
    def handle_http_error(request: Request, exc: StarletteHTTPException):
        return _err(exc.status_code, "bad-request" if exc.status_code < 500 else "internal",
                    str(exc.detail))

    @app.exception_handler(Exception)
    def handle_crash(request: Request, exc: Exception):
        return _err(500, "internal", "internal error")

    def principal_of(request: Request) -> Optional[Principal]:
        header = request.headers.get("authorization", "")
        if not header.lower().startswith("bearer "):
            return None
        token = header[7:].strip()
        if config.admin_token and secrets.compare_digest(token, config.admin_token):
            return Principal(kind="admin")
        return sessions.resolve(token)

    def require(decision: Decision):
        if not decision.allowed:
            raise DenyError(decision.reason)

    def own_system(principal: Optional[Principal]):
        """Resolve the caller's own system; only ever reads the caller's
        tenant namespace."""
        if principal is None:
            raise DenyError(UNAUTHENTICATED)
        if principal.kind == "admin":
            raise DenyError(MISSING_PERMISSION)
        system = store.get_or_none(principal.tenant_id)
        if system is None:
            raise DenyError(UNAUTHENTICATED)
        if principal.kind == "user" and system.get_user(principal.userid) is None:
            raise DenyError(UNAUTHENTICATED)
        return system

    def data_context(request: Request, action: str, schemaid: str):
        principal = principal_of(request)
        system = own_system(principal)
        require(authorize(principal, action, schemaid, system))
        return principal, system

    def parse_filter_param(text: Optional[str]):
        if text in (None, ""):
            return None
        try:
            obj = json.loads(text)
        except ValueError:
            raise BadRequest(f"filter is not valid JSON: {text!r}") from None
        return filter_from_wire(obj)

    def read_upload(upload: UploadFile) -> bytes:
        data = upload.file.read()
        if len(data) > config.max_upload_bytes:
            raise PayloadTooLarge(
                f"upload exceeds {config.max_upload_bytes} bytes"
            )
        return data

    # -- health and auth ----------------------------------------------------

    @app.get("/api/health")
    def health():
        return _ok({"status": "ok", "tenants": len(store.tenant_ids())})

    @app.post("/api/auth/tenant")
    def auth_tenant(payload: dict = Body(...)):
        tenant_id = _require_str(payload, "tenant")
        password = _require_str(payload, "password")
        system = store.get_or_none(tenant_id)
        digest = system.tenant.password_digest if system else dummy_digest
        if not verify_password(password, digest) or system is None:
            raise AuthFailure()
        session = sessions.create(Principal(kind="tenant", tenant_id=tenant_id))
        return _ok(_session_wire(session))

    @app.post("/api/auth/user")
    def auth_user(payload: dict = Body(...)):
        tenant_id = _require_str(payload, "tenant")
        userid = _require_str(payload, "userid")
        password = _require_str(payload, "password")
        system = store.get_or_none(tenant_id)
        user = system.get_user(userid) if system else None
        digest = user.password_digest if user else dummy_digest
        if not verify_password(password, digest) or user is None:
            raise AuthFailure()
        session = sessions.create(
            Principal(kind="user", tenant_id=tenant_id, userid=userid)
        )
        return _ok(_session_wire(session))

    # -- system lifecycle ---------------------------------------------------

    @app.post("/api/systems")
    def upload_system(
        request: Request,
        file: UploadFile = File(...),
        mode: str = "create",
        dry_run: bool = False,
    ):
        if mode not in ("create", "replace"):
            raise BadRequest(f"mode must be create or replace, got {mode!r}")
        data = read_upload(file)
        doc = read_document(data, origin=file.filename or "<upload>")
        reta = parse_metadata_table(doc)
        report = validate_reta(reta)
        if dry_run:
            return _ok(
                {
                    "valid": report.ok,
                    "diagnostics": [_diag_to_wire(d) for d in report.diagnostics],
                    "preview": doc.rows,
                    "summary": _summary(reta) if report.ok else None,
                }
            )
        tenant_id = reta.tenant.id.text
        if mode == "replace":
            principal = principal_of(request)
            if principal is None:
                raise DenyError(UNAUTHENTICATED)
            if principal.kind != "tenant":
                raise DenyError(MISSING_PERMISSION)
            if principal.tenant_id != tenant_id:
                raise DenyError(CROSS_TENANT)
        with store.lock(tenant_id):
            instance = instantiate(reta, store, mode)
        return _ok(
            {
                "tenant": instance.tenant.id,
                "system_name": instance.tenant.system_name,
                "groups": len(instance.groups),
                "users": len(instance.users),
                "schemas": len(instance.schemas),
            }
        )

    @app.delete("/api/systems/{tenant_id}")
    def delete_system(request: Request, tenant_id: str):
        principal = principal_of(request)
        if principal is None:
            raise DenyError(UNAUTHENTICATED)
        require(authorize(principal, "admin", None, None))
        store.delete_system(tenant_id)
        return _ok({"deleted": tenant_id})

    # -- metadata -----------------------------------------------------------

    @app.get("/api/meta/groups")
    def get_groups(request: Request):
        principal = principal_of(request)
        system = own_system(principal)
        require(authorize(principal, "read", None, system))
        return _ok({"groups": system.group_ids()})

    @app.put("/api/meta/groups")
    def put_groups(request: Request, payload: list = Body(...)):
        principal = principal_of(request)
        system = own_system(principal)
        require(authorize(principal, "update", None, system))
        if not all(isinstance(g, str) for g in payload):
            raise BadRequest("groups payload must be a list of group ids")
        try:
            groups = tuple(GroupDef(g) for g in payload)
        except ValueError as exc:
            raise BadRequest(str(exc)) from None
        updated = dataclasses.replace(system, groups=groups)
        _put_checked(store, updated)
        return _ok({"groups": updated.group_ids()})

    @app.get("/api/meta/users")
    def get_users(request: Request):
        principal = principal_of(request)
        system = own_system(principal)
        require(authorize(principal, "read", None, system))
        return _ok(
            {
                "users": [
                    {
                        "userid": u.userid,
                        "username": u.username,
                        "memberships": sorted(u.memberships),
                    }
                    for u in system.users
                ]
            }
        )

    @app.put("/api/meta/users")
    def put_users(request: Request, payload: list = Body(...)):
        principal = principal_of(request)
        system = own_system(principal)
        require(authorize(principal, "update", None, system))
        existing = {u.userid: u for u in system.users}
        users = []
        for i, entry in enumerate(payload):
            if not isinstance(entry, dict):
                raise BadRequest(f"user entry {i} must be an object")
            userid = entry.get("userid")
            if not isinstance(userid, str) or not userid:
                raise BadRequest(f"user entry {i} needs a userid")
            memberships = entry.get("memberships", [])
            if not isinstance(memberships, list) or not all(
                isinstance(m, str) for m in memberships
            ):
                raise BadRequest(f"user entry {i}: memberships must be a list of group ids")
            password = entry.get("password")
            if password:
                digest = digest_password(password)
            elif userid in existing:
                digest = existing[userid].password_digest
            else:
                raise BadRequest(f"new user {userid!r} needs a password")
            try:
                users.append(
                    UserDef(
                        userid=userid,
                        username=entry.get("username", ""),
                        password_digest=digest,
                        memberships=frozenset(memberships),
                    )
                )
            except (ValueError, TypeError) as exc:
                raise BadRequest(f"user entry {i}: {exc}") from None
        updated = dataclasses.replace(system, users=tuple(users))
        _put_checked(store, updated)
        return _ok({"users": [u.userid for u in users]})

    @app.get("/api/meta/schemas")
    def get_schemas(request: Request):
        # tenants see everything; users get the subset they hold any
        # permission on, with their own effective permission string
        principal = principal_of(request)
        system = own_system(principal)
        if principal.kind == "tenant":
            require(authorize(principal, "read", None, system))
        out = []
        for schema in system.schemas:
            if principal.kind == "tenant":
                perms = "CRUD"
            else:
                perms = canonical_permission_string(
                    effective_permissions(principal.userid, schema.schemaid, system)
                )
                if perms == "":
                    continue
            doc = schema_to_doc(schema)
            doc["permissions"] = perms
            out.append(doc)
        return _ok({"schemas": out})

    @app.put("/api/meta/schemas")
    def put_schemas(request: Request, payload: list = Body(...)):
        principal = principal_of(request)
        system = own_system(principal)
        require(authorize(principal, "update", None, system))
        try:
            schemas = tuple(schema_from_doc(entry) for entry in payload)
        except RetaError:
            raise
        except (ValueError, TypeError, KeyError) as exc:
            raise BadRequest(f"bad schema entry: {exc}") from None
        # same retention rule as replace-mode instantiation
        old = {s.schemaid: s for s in system.schemas}
        data = {}
        for schema in schemas:
            previous = old.get(schema.schemaid)
            if previous is not None and schema.same_field_list(previous):
                data[schema.schemaid] = system.data.get(schema.schemaid, [])
        updated = dataclasses.replace(system, schemas=schemas, data=data)
        _put_checked(store, updated)
        return _ok({"schemas": [s.schemaid for s in schemas]})

    # -- data ---------------------------------------------------------------

    @app.post("/api/data/{schemaid}/import")
    def import_data(
        request: Request,
        schemaid: str,
        file: UploadFile = File(...),
        atomic: bool = True,
    ):
        principal, system = data_context(request, "create", schemaid)
        data = read_upload(file)
        doc = read_document(data, origin=file.filename or "<upload>")
        schema = system.get_schema(schemaid)
        result = parse_data_exchange_table(doc, schema, atomic=atomic)
        ids, rejected = store.insert_many(
            principal.tenant_id,
            schemaid,
            [r.values for r in result.records],
            atomic=atomic,
            row_numbers=result.row_numbers,
        )
        return _ok(
            {
                "inserted": len(ids),
                "ids": ids,
                "rejected": [_diag_to_wire(d) for d in result.rejected + rejected],
            }
        )

    @app.get("/api/data/{schemaid}/export")
    def export_data(request: Request, schemaid: str, format: str = "csv"):
        principal, system = data_context(request, "read", schemaid)
        if format != "csv":
            raise BadRequest(f"unsupported export format {format!r}")
        records, _total = store.query(principal.tenant_id, schemaid)
        schema = system.get_schema(schemaid)
        doc = serialize_data_exchange_table(records, schema)
        return Response(
            content=write_csv_bytes(doc),
            media_type="text/csv; charset=utf-8",
            headers={"Content-Disposition": f'attachment; filename="{schemaid}.csv"'},
        )

    @app.get("/api/data/{schemaid}/stats")
    def stats_data(
        request: Request,
        schemaid: str,
        field: str,
        agg: str,
        filter: Optional[str] = None,
    ):
        principal, system = data_context(request, "read", schemaid)
        expr = parse_filter_param(filter)
        value = store.statistics(principal.tenant_id, schemaid, field, agg, expr)
        if hasattr(value, "isoformat"):
            value = value.isoformat()
        return _ok({"field": field, "agg": agg, "value": value})

    @app.post("/api/data/{schemaid}")
    def insert_data(request: Request, schemaid: str, payload: dict = Body(...)):
        principal, system = data_context(request, "create", schemaid)
        record_id = store.insert_record(principal.tenant_id, schemaid, payload)
        record = store.get_record(principal.tenant_id, schemaid, record_id)
        return _ok({"record": _record_wire(system, schemaid, record)})

    @app.get("/api/data/{schemaid}")
    def query_data(
        request: Request,
        schemaid: str,
        filter: Optional[str] = None,
        sort: Optional[str] = None,
        offset: int = 0,
        limit: Optional[int] = None,
    ):
        principal, system = data_context(request, "read", schemaid)
        expr = parse_filter_param(filter)
        order_by, descending = None, False
        if sort:
            descending = sort.startswith("-")
            order_by = sort[1:] if descending else sort
        if offset < 0 or (limit is not None and limit < 0):
            raise BadRequest("offset and limit must be non-negative")
        records, total = store.query(
            principal.tenant_id,
            schemaid,
            expr,
            offset=offset,
            limit=limit,
            order_by=order_by,
            descending=descending,
        )
        return _ok(
            {
                "records": [_record_wire(system, schemaid, r) for r in records],
                "total": total,
            }
        )

    @app.get("/api/data/{schemaid}/{record_id}")
    def get_data(request: Request, schemaid: str, record_id: str):
        principal, system = data_context(request, "read", schemaid)
        record = store.get_record(principal.tenant_id, schemaid, record_id)
        return _ok({"record": _record_wire(system, schemaid, record)})

    @app.put("/api/data/{schemaid}/{record_id}")
    def update_data(request: Request, schemaid: str, record_id: str, payload: dict = Body(...)):
        principal, system = data_context(request, "update", schemaid)
        record = store.update_record(principal.tenant_id, schemaid, record_id, payload)
        return _ok({"record": _record_wire(system, schemaid, record)})

    @app.delete("/api/data/{schemaid}/{record_id}")
    def delete_data(request: Request, schemaid: str, record_id: str):
        principal, system = data_context(request, "delete", schemaid)
        store.delete_record(principal.tenant_id, schemaid, record_id)
        return _ok({"deleted": record_id})

    # -- static console -----------------------------------------------------

    ui_dir = config.ui_dir or "frontend/dist"
    if Path(ui_dir).is_dir():
        app.mount("/ui", StaticFiles(directory=ui_dir, html=True), name="ui")

    return app


def _session_wire(session) -> dict:
    p = session.principal
    principal = {"kind": p.kind, "tenant": p.tenant_id}
    if p.userid:
        principal["userid"] = p.userid
    return {"token": session.token, "expires_at": session.expires_at, "principal": principal}


def _summary(reta) -> dict:
    return {
        "tenant": reta.tenant.id.text,
        "system_name": reta.tenant.system_name.text,
        "groups": len(reta.groups),
        "users": len(reta.users),
        "schemas": len(reta.schemas),
    }


def _record_wire(system, schemaid: str, record) -> dict:
    schema = system.get_schema(schemaid)
    return {"id": record.record_id, "values": values_to_wire(schema, record.values)}


def _require_str(payload: dict, key: str) -> str:
    value = payload.get(key)
    if not isinstance(value, str) or value == "":
        raise BadRequest(f"missing or empty {key!r}")
    return value


def _put_checked(store: DataStore, instance) -> None:
    report = validate_instance(instance)
    if not report.ok:
        raise ValidationFailure(report.diagnostics, message="metadata update rejected")
    store.put_system(instance)
