"""Exception hierarchy shared by every layer.

Each error carries a stable machine-readable ``code`` so the HTTP layer and
the CLI can map domain failures onto wire envelopes / exit codes without
string matching.
"""

from __future__ import annotations


class RetaError(Exception):
    """Base class for all domain errors."""

    code = "error"


class ParseError(RetaError):
    """Structural failure while reading a tabular file; positioned."""

    code = "parse-error"

    def __init__(self, message: str, row: int = 1, col: int = 1):
        super().__init__(f"{row}:{col}: {message}")
        self.message = message
        self.row = row
        self.col = col


class ValidationFailure(RetaError):
    """Content-level rejection; ``diagnostics`` lists every violation."""

    code = "validation-failure"

    def __init__(self, diagnostics, message: str = "validation failed"):
        self.diagnostics = list(diagnostics)
        detail = "; ".join(str(d) for d in self.diagnostics[:5])
        if len(self.diagnostics) > 5:
            detail += f"; ... ({len(self.diagnostics)} total)"
        super().__init__(f"{message}: {detail}" if detail else message)


class DataExchangeError(ValidationFailure):
    """Atomic data import rejected; per-row diagnostics included."""

    code = "data-exchange-error"

    def __init__(self, diagnostics):
        super().__init__(diagnostics, message="data file rejected")


class HeaderMismatch(RetaError):
    code = "header-mismatch"


class SchemaMismatch(RetaError):
    code = "schema-mismatch"


class DuplicateTenant(RetaError):
    code = "duplicate-tenant"

    def __init__(self, tenant_id: str):
        super().__init__(f"tenant id already exists: {tenant_id!r}")
        self.tenant_id = tenant_id


class UnknownTenant(RetaError):
    code = "unknown-tenant"

    def __init__(self, tenant_id: str):
        super().__init__(f"no such tenant: {tenant_id!r}")
        self.tenant_id = tenant_id


class UnknownSchema(RetaError):
    code = "unknown-schema"

    def __init__(self, schemaid: str):
        super().__init__(f"no such schema: {schemaid!r}")
        self.schemaid = schemaid


class UnknownUser(RetaError):
    code = "unknown-user"

    def __init__(self, userid: str):
        super().__init__(f"no such user: {userid!r}")
        self.userid = userid


class UnknownRecord(RetaError):
    code = "unknown-record"

    def __init__(self, record_id: str):
        super().__init__(f"no such record: {record_id!r}")
        self.record_id = record_id


class AuthFailure(RetaError):
    """Deliberately opaque: unknown id and wrong password are identical."""

    code = "auth-failure"

    def __init__(self, message: str = "authentication failed"):
        super().__init__(message)


class UniqueViolation(RetaError):
    code = "unique-violation"

    def __init__(self, fname: str, value):
        super().__init__(f"duplicate value for unique field {fname!r}: {value!r}")
        self.fname = fname
        self.value = value


class InvalidPermissionLetter(RetaError):
    code = "invalid-permission"

    def __init__(self, letter: str):
        super().__init__(f"invalid permission letter {letter!r} (alphabet is C, R, U, D)")
        self.letter = letter


class BadFilter(RetaError):
    code = "bad-filter"


class BadAggregation(RetaError):
    code = "bad-aggregation"


class PayloadTooLarge(RetaError):
    code = "payload-too-large"
