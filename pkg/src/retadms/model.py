"""Domain model shared by every other layer.

One generated system is a value of :class:`SystemInstance`: a single tenant,
its user groups, its users, its data-structure schemas, and per-schema record
collections.  A :class:`Platform` maps tenant ids to system instances,
one-to-one.  Everything here is a plain value type plus pure validation;
mutation and durability live in :mod:`retadms.store`.

The five field types are closed: ``string``, ``int``, ``float``, ``bool``,
``date``.  Dates are calendar dates (ISO ``YYYY-MM-DD``, no time of day).
Two literal planes exist for values and are kept strictly in sync so that
spreadsheet export/import round-trips:

* cell text  <->  typed value:  :func:`coerce_literal` / :func:`render_value`
* JSON wire  <->  typed value:  :func:`normalize_value` (dates as ISO strings)
"""

from __future__ import annotations

import hashlib
import hmac
import re
import secrets
from dataclasses import dataclass, field
from datetime import date, datetime
from enum import Flag, auto
from typing import Iterable, Mapping, Optional

from .errors import ValidationFailure

FTYPES = ("string", "int", "float", "bool", "date")

ATTRIBUTE_KINDS = ("nullable", "notnull", "unique", "default")

_INT_RE = re.compile(r"^[+-]?\d+$")
_FLOAT_RE = re.compile(r"^[+-]?(\d+(\.\d*)?|\.\d+)([eE][+-]?\d+)?$")
_DATE_RE = re.compile(r"^\d{4}-\d{2}-\d{2}$")

# Identifiers travel through spreadsheet cells and the membership list
# separator, so they must avoid whitespace and ';'.
_ID_RE = re.compile(r"^[^\s;\x00]+$")


def is_identifier(text: str) -> bool:
    return bool(_ID_RE.match(text))


# ---------------------------------------------------------------------------
# Permissions
# ---------------------------------------------------------------------------


class Permission(Flag):
    """Operation permissions; any subset of the four flags is a valid set."""

    CREATE = auto()
    READ = auto()
    UPDATE = auto()
    DELETE = auto()


NO_PERMISSIONS = Permission(0)
FULL_PERMISSIONS = (
    Permission.CREATE | Permission.READ | Permission.UPDATE | Permission.DELETE
)

_PERMISSION_LETTERS = (
    ("C", Permission.CREATE),
    ("R", Permission.READ),
    ("U", Permission.UPDATE),
    ("D", Permission.DELETE),
)
_LETTER_TO_PERMISSION = {letter: flag for letter, flag in _PERMISSION_LETTERS}


def canonical_permission_string(p: Permission) -> str:
    """Render a permission set as the subsequence of ``"CRUD"`` it contains.

    Parsing the result with :func:`parse_permission_spec` reproduces ``p``
    for all sixteen subsets; the empty set renders as ``""``.
    """
    return "".join(letter for letter, flag in _PERMISSION_LETTERS if flag in p)


def parse_permission_spec(text: str) -> Permission:
    """Parse a permission string: letters from CRUD, case-insensitive,
    duplicates collapsed; ``""`` and ``"-"`` both mean the empty set."""
    from .errors import InvalidPermissionLetter

    if text == "" or text == "-":
        return NO_PERMISSIONS
    perms = NO_PERMISSIONS
    for ch in text:
        flag = _LETTER_TO_PERMISSION.get(ch.upper())
        if flag is None:
            raise InvalidPermissionLetter(ch)
        perms |= flag
    return perms


# ---------------------------------------------------------------------------
# Value system
# ---------------------------------------------------------------------------


def coerce_literal(text: str, ftype: str):
    """Turn spreadsheet cell text into a typed value.

    Accepted literal forms are exactly the ones :func:`render_value` emits:
    int = optional sign + digits; float = decimal or scientific; bool =
    true/false (case-insensitive); date = YYYY-MM-DD; string = verbatim.
    Raises ``ValueError`` with a human message on anything else.
    """
    if ftype == "string":
        if text == "":
            raise ValueError("empty string is not a storable value (empty cell means null)")
        if "\x00" in text:
            raise ValueError("string contains NUL")
        return text
    if ftype == "int":
        if not _INT_RE.match(text):
            raise ValueError(f"not an int literal: {text!r}")
        return int(text)
    if ftype == "float":
        if not _FLOAT_RE.match(text):
            raise ValueError(f"not a float literal: {text!r}")
        value = float(text)
        if value in (float("inf"), float("-inf")):
            raise ValueError(f"float literal out of range: {text!r}")
        return value
    if ftype == "bool":
        lowered = text.lower()
        if lowered == "true":
            return True
        if lowered == "false":
            return False
        raise ValueError(f"not a bool literal: {text!r}")
    if ftype == "date":
        if not _DATE_RE.match(text):
            raise ValueError(f"not a YYYY-MM-DD date literal: {text!r}")
        try:
            return date.fromisoformat(text)
        except ValueError:
            raise ValueError(f"not a calendar date: {text!r}") from None
    raise ValueError(f"unknown field type: {ftype!r}")


def render_value(value, ftype: str) -> str:
    """Inverse of :func:`coerce_literal`; ``None`` renders as the empty cell."""
    if value is None:
        return ""
    if ftype == "string":
        return value
    if ftype == "int":
        return str(value)
    if ftype == "float":
        return repr(value)
    if ftype == "bool":
        return "true" if value else "false"
    if ftype == "date":
        return value.isoformat()
    raise ValueError(f"unknown field type: {ftype!r}")


def normalize_value(value, ftype: str):
    """Check/convert an already-typed (Python or JSON-decoded) value.

    Dates additionally accept ISO strings; ints promote to float for float
    fields; bools are never accepted for int/float fields.  Returns the
    canonical typed value or raises ``ValueError``.
    """
    if value is None:
        return None
    if ftype == "string":
        if not isinstance(value, str):
            raise ValueError(f"expected string, got {type(value).__name__}")
        if value == "":
            raise ValueError("empty string is not a storable value (use null)")
        if "\x00" in value:
            raise ValueError("string contains NUL")
        return value
    if ftype == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise ValueError(f"expected int, got {type(value).__name__}")
        return value
    if ftype == "float":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ValueError(f"expected float, got {type(value).__name__}")
        value = float(value)
        if value != value or value in (float("inf"), float("-inf")):
            raise ValueError("float value must be finite")
        return value
    if ftype == "bool":
        if not isinstance(value, bool):
            raise ValueError(f"expected bool, got {type(value).__name__}")
        return value
    if ftype == "date":
        if isinstance(value, datetime):
            raise ValueError("expected calendar date, got datetime")
        if isinstance(value, date):
            return value
        if isinstance(value, str):
            return coerce_literal(value, "date")
        raise ValueError(f"expected date, got {type(value).__name__}")
    raise ValueError(f"unknown field type: {ftype!r}")


# ---------------------------------------------------------------------------
# Schema structure
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class OtherAttribute:
    """A field attribute token: nullable | notnull | unique | default=<lit>."""

    kind: str
    value: Optional[str] = None

    def __post_init__(self):
        if self.kind not in ATTRIBUTE_KINDS:
            raise ValueError(f"unknown attribute kind: {self.kind!r}")
        if (self.value is not None) != (self.kind == "default"):
            raise ValueError("attribute value is present iff kind is 'default'")

    def token(self) -> str:
        return self.kind if self.value is None else f"default={self.value}"


def parse_attribute_token(text: str) -> OtherAttribute:
    """Parse one attribute cell; raises ``ValueError`` on malformed tokens."""
    if text in ("nullable", "notnull", "unique"):
        return OtherAttribute(text)
    if text.startswith("default="):
        return OtherAttribute("default", text[len("default="):])
    raise ValueError(
        f"malformed attribute token {text!r} "
        "(expected nullable, notnull, unique or default=<literal>)"
    )


@dataclass(frozen=True)
class FieldDef:
    """One field of a schema: name, closed-vocabulary type, attributes.

    Nullability defaults to notnull when no token is present.
    """

    fname: str
    ftype: str
    attributes: tuple = ()

    def __post_init__(self):
        if not is_identifier(self.fname):
            raise ValueError(f"bad field name: {self.fname!r}")
        if self.ftype not in FTYPES:
            raise ValueError(f"unknown field type: {self.ftype!r}")
        object.__setattr__(self, "attributes", tuple(self.attributes))
        kinds = [a.kind for a in self.attributes]
        if kinds.count("default") > 1:
            raise ValueError(f"field {self.fname!r}: more than one default")
        if kinds.count("nullable") + kinds.count("notnull") > 1:
            raise ValueError(f"field {self.fname!r}: conflicting nullability tokens")
        if self.default_literal is not None:
            coerce_literal(self.default_literal, self.ftype)

    @property
    def nullable(self) -> bool:
        return any(a.kind == "nullable" for a in self.attributes)

    @property
    def unique(self) -> bool:
        return any(a.kind == "unique" for a in self.attributes)

    @property
    def default_literal(self) -> Optional[str]:
        for a in self.attributes:
            if a.kind == "default":
                return a.value
        return None

    @property
    def default_value(self):
        literal = self.default_literal
        return None if literal is None else coerce_literal(literal, self.ftype)


@dataclass(frozen=True)
class GroupDef:
    groupid: str

    def __post_init__(self):
        if not is_identifier(self.groupid):
            raise ValueError(f"bad groupid: {self.groupid!r}")


@dataclass(frozen=True)
class UserDef:
    userid: str
    username: str
    password_digest: str
    memberships: frozenset = frozenset()

    def __post_init__(self):
        if not is_identifier(self.userid):
            raise ValueError(f"bad userid: {self.userid!r}")
        object.__setattr__(self, "memberships", frozenset(self.memberships))


@dataclass(frozen=True)
class TenantDescriptor:
    id: str
    password_digest: str
    system_name: str

    def __post_init__(self):
        if not is_identifier(self.id):
            raise ValueError(f"bad tenant id: {self.id!r}")


@dataclass(frozen=True)
class SchemaDef:
    """A data structure: owning group, entry user, split permissions, fields.

    ``gpermission`` applies to members of the owning group, ``opermission``
    to every other authenticated user; the entry user always holds full
    permissions regardless of either.
    """

    schemaid: str
    group: str
    entry: str
    gpermission: Permission
    opermission: Permission
    fields: tuple

    def __post_init__(self):
        if not is_identifier(self.schemaid):
            raise ValueError(f"bad schemaid: {self.schemaid!r}")
        object.__setattr__(self, "fields", tuple(self.fields))
        if not self.fields:
            raise ValueError(f"schema {self.schemaid!r} has no fields")
        names = [f.fname for f in self.fields]
        if len(set(names)) != len(names):
            raise ValueError(f"schema {self.schemaid!r} has duplicate field names")

    @property
    def field_names(self) -> tuple:
        return tuple(f.fname for f in self.fields)

    def field_map(self) -> dict:
        return {f.fname: f for f in self.fields}

    def same_field_list(self, other: "SchemaDef") -> bool:
        """True iff field names, types, order and attribute sets all match."""
        if len(self.fields) != len(other.fields):
            return False
        return all(
            a.fname == b.fname
            and a.ftype == b.ftype
            and frozenset(a.attributes) == frozenset(b.attributes)
            for a, b in zip(self.fields, other.fields)
        )


@dataclass
class DataRecord:
    """One stored record; ``record_id`` is None until the store assigns it."""

    record_id: Optional[str]
    values: dict

    def copy(self) -> "DataRecord":
        return DataRecord(self.record_id, dict(self.values))


@dataclass
class SystemInstance:
    """The materialized system for one tenant (metadata plus record data)."""

    tenant: TenantDescriptor
    groups: tuple = ()
    users: tuple = ()
    schemas: tuple = ()
    data: dict = field(default_factory=dict)

    def group_ids(self) -> list:
        return [g.groupid for g in self.groups]

    def get_user(self, userid: str) -> Optional[UserDef]:
        for u in self.users:
            if u.userid == userid:
                return u
        return None

    def get_schema(self, schemaid: str) -> Optional[SchemaDef]:
        for s in self.schemas:
            if s.schemaid == schemaid:
                return s
        return None

    def copy(self) -> "SystemInstance":
        return SystemInstance(
            tenant=self.tenant,
            groups=tuple(self.groups),
            users=tuple(self.users),
            schemas=tuple(self.schemas),
            data={sid: [r.copy() for r in records] for sid, records in self.data.items()},
        )


@dataclass
class Platform:
    """In-memory tenant-id -> system map; the durable twin lives in the store."""

    systems: dict = field(default_factory=dict)
    creation_log: list = field(default_factory=list)

    def get_or_none(self, tenant_id: str) -> Optional[SystemInstance]:
        return self.systems.get(tenant_id)

    def put(self, instance: SystemInstance) -> None:
        if instance.tenant.id not in self.systems:
            self.creation_log.append((instance.tenant.id, _utc_now_iso()))
        self.systems[instance.tenant.id] = instance

    def remove(self, tenant_id: str) -> None:
        from .errors import UnknownTenant

        if tenant_id not in self.systems:
            raise UnknownTenant(tenant_id)
        del self.systems[tenant_id]

    def tenant_ids(self) -> list:
        return list(self.systems)


def _utc_now_iso() -> str:
    return datetime.utcnow().strftime("%Y-%m-%dT%H:%M:%S.%fZ")


# ---------------------------------------------------------------------------
# Diagnostics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Diagnostic:
    """One validation finding; positions are 1-based cell coordinates."""

    rule: str
    message: str
    row: Optional[int] = None
    col: Optional[int] = None
    severity: str = "error"

    def __str__(self):
        pos = f" (row {self.row}, col {self.col})" if self.row is not None else ""
        return f"[{self.rule}] {self.message}{pos}"

    def sort_key(self):
        return (self.row or 0, self.col or 0, self.rule, self.message)


@dataclass
class ValidationReport:
    diagnostics: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.diagnostics

    def add(self, rule: str, message: str, row: Optional[int] = None, col: Optional[int] = None):
        self.diagnostics.append(Diagnostic(rule, message, row, col))

    def __str__(self):
        if self.ok:
            return "ok"
        return "\n".join(str(d) for d in self.diagnostics)


# ---------------------------------------------------------------------------
# Record validation (CR family 3)
# ---------------------------------------------------------------------------


def validate_record_values(schema: SchemaDef, values: Mapping) -> dict:
    """Validate and normalize one record's values against a schema.

    Unknown keys are rejected; missing keys fill from the field default if
    declared, else null; null is rejected for notnull fields.  Returns the
    complete normalized dict (every schema field present, schema order) or
    raises :class:`ValidationFailure` carrying one diagnostic per problem.
    """
    diagnostics = []
    known = set(schema.field_names)
    for key in values:
        if key not in known:
            diagnostics.append(Diagnostic("CR3", f"unknown field {key!r}"))
    normalized = {}
    for f in schema.fields:
        if f.fname in values:
            value = values[f.fname]
        else:
            value = f.default_value
        if value is None:
            if not f.nullable:
                diagnostics.append(
                    Diagnostic("CR3", f"field {f.fname!r} is not nullable")
                )
            normalized[f.fname] = None
            continue
        try:
            normalized[f.fname] = normalize_value(value, f.ftype)
        except ValueError as exc:
            diagnostics.append(Diagnostic("CR3", f"field {f.fname!r}: {exc}"))
    if diagnostics:
        raise ValidationFailure(diagnostics, message="record rejected")
    return normalized


# ---------------------------------------------------------------------------
# Instance validation (constraint-rule families 1-3)
# ---------------------------------------------------------------------------


def _duplicates(items: Iterable) -> list:
    seen, dups = set(), []
    for item in items:
        if item in seen:
            dups.append(item)
        seen.add(item)
    return dups


def validate_instance(instance: SystemInstance) -> ValidationReport:
    """Check every cross-entity invariant of a system instance.

    Deterministic and order-insensitive: permuting the instance's lists
    changes at most the order of the same multiset of diagnostics.
    """
    report = ValidationReport()
    group_ids = instance.group_ids()
    user_ids = [u.userid for u in instance.users]
    schema_ids = [s.schemaid for s in instance.schemas]

    for gid in _duplicates(group_ids):
        report.add("duplicate-groupid", f'duplicate groupid "{gid}"')
    for uid in _duplicates(user_ids):
        report.add("duplicate-userid", f'duplicate userid "{uid}"')
    for sid in _duplicates(schema_ids):
        report.add("duplicate-schemaid", f'duplicate schemaid "{sid}"')

    declared_groups = set(group_ids)
    declared_users = set(user_ids)
    declared_schemas = set(schema_ids)

    for user in instance.users:
        for gid in sorted(user.memberships):
            if gid not in declared_groups:
                report.add("CR1", f'user "{user.userid}": unknown groupid "{gid}"')

    for schema in instance.schemas:
        if schema.group not in declared_groups:
            report.add("CR2", f'schema "{schema.schemaid}": unknown groupid "{schema.group}"')
        if schema.entry not in declared_users:
            report.add("CR2", f'schema "{schema.schemaid}": unknown entry userid "{schema.entry}"')

    for sid, records in instance.data.items():
        if sid not in declared_schemas:
            report.add("CR3", f'records stored under undeclared schema "{sid}"')
            continue
        schema = instance.get_schema(sid)
        for rid in _duplicates(r.record_id for r in records):
            report.add("duplicate-record-id", f'schema "{sid}": duplicate record id "{rid}"')
        seen_unique = {f.fname: set() for f in schema.fields if f.unique}
        for record in records:
            if record.record_id is None:
                report.add("CR3", f'schema "{sid}": record without id')
            try:
                normalized = validate_record_values(schema, record.values)
            except ValidationFailure as exc:
                for d in exc.diagnostics:
                    report.add(
                        d.rule, f'schema "{sid}" record "{record.record_id}": {d.message}'
                    )
                continue
            for fname, seen in seen_unique.items():
                value = normalized.get(fname)
                if value is None:
                    continue
                if value in seen:
                    report.add(
                        "CR3",
                        f'schema "{sid}": duplicate value for unique field '
                        f'"{fname}": {value!r}',
                    )
                seen.add(value)
    return report


# ---------------------------------------------------------------------------
# Passwords
# ---------------------------------------------------------------------------

PBKDF2_ITERATIONS = 60_000


def digest_password(plain: str, *, iterations: Optional[int] = None) -> str:
    """Salted PBKDF2-HMAC-SHA256 digest; self-describing string form."""
    iterations = iterations or PBKDF2_ITERATIONS
    salt = secrets.token_bytes(16)
    digest = hashlib.pbkdf2_hmac("sha256", plain.encode("utf-8"), salt, iterations)
    return f"pbkdf2sha256${iterations}${salt.hex()}${digest.hex()}"


def verify_password(plain: str, stored: str) -> bool:
    try:
        scheme, iterations, salt_hex, digest_hex = stored.split("$")
        if scheme != "pbkdf2sha256":
            return False
        salt = bytes.fromhex(salt_hex)
        expected = bytes.fromhex(digest_hex)
        iterations = int(iterations)
    except (ValueError, AttributeError):
        return False
    candidate = hashlib.pbkdf2_hmac("sha256", plain.encode("utf-8"), salt, iterations)
    return hmac.compare_digest(candidate, expected)


# ---------------------------------------------------------------------------
# Document (JSON) form, used by the store and the HTTP layer
# ---------------------------------------------------------------------------


def values_to_wire(schema: SchemaDef, values: Mapping) -> dict:
    wire = {}
    for f in schema.fields:
        value = values.get(f.fname)
        if f.ftype == "date" and value is not None:
            value = value.isoformat()
        wire[f.fname] = value
    return wire


def values_from_wire(schema: SchemaDef, obj: Mapping) -> dict:
    values = {}
    for f in schema.fields:
        value = obj.get(f.fname)
        values[f.fname] = None if value is None else normalize_value(value, f.ftype)
    return values


def schema_to_doc(schema: SchemaDef) -> dict:
    return {
        "schemaid": schema.schemaid,
        "group": schema.group,
        "entry": schema.entry,
        "gpermission": canonical_permission_string(schema.gpermission),
        "opermission": canonical_permission_string(schema.opermission),
        "fields": [
            {"fname": f.fname, "ftype": f.ftype, "attributes": [a.token() for a in f.attributes]}
            for f in schema.fields
        ],
    }


def schema_from_doc(doc: Mapping) -> SchemaDef:
    return SchemaDef(
        schemaid=doc["schemaid"],
        group=doc["group"],
        entry=doc["entry"],
        gpermission=parse_permission_spec(doc["gpermission"]),
        opermission=parse_permission_spec(doc["opermission"]),
        fields=tuple(
            FieldDef(
                fname=f["fname"],
                ftype=f["ftype"],
                attributes=tuple(parse_attribute_token(t) for t in f.get("attributes", ())),
            )
            for f in doc["fields"]
        ),
    )


def instance_to_doc(instance: SystemInstance) -> dict:
    return {
        "tenant": {
            "id": instance.tenant.id,
            "password_digest": instance.tenant.password_digest,
            "system_name": instance.tenant.system_name,
        },
        "groups": instance.group_ids(),
        "users": [
            {
                "userid": u.userid,
                "username": u.username,
                "password_digest": u.password_digest,
                "memberships": sorted(u.memberships),
            }
            for u in instance.users
        ],
        "schemas": [schema_to_doc(s) for s in instance.schemas],
        "data": {
            sid: [
                {"id": r.record_id, "values": values_to_wire(instance.get_schema(sid), r.values)}
                for r in records
            ]
            for sid, records in instance.data.items()
        },
    }


def instance_from_doc(doc: Mapping) -> SystemInstance:
    tenant = TenantDescriptor(
        id=doc["tenant"]["id"],
        password_digest=doc["tenant"]["password_digest"],
        system_name=doc["tenant"]["system_name"],
    )
    schemas = tuple(schema_from_doc(s) for s in doc.get("schemas", ()))
    by_id = {s.schemaid: s for s in schemas}
    data = {}
    for sid, records in doc.get("data", {}).items():
        schema = by_id[sid]
        data[sid] = [
            DataRecord(r["id"], values_from_wire(schema, r["values"])) for r in records
        ]
    return SystemInstance(
        tenant=tenant,
        groups=tuple(GroupDef(g) for g in doc.get("groups", ())),
        users=tuple(
            UserDef(
                userid=u["userid"],
                username=u["username"],
                password_digest=u["password_digest"],
                memberships=frozenset(u.get("memberships", ())),
            )
            for u in doc.get("users", ())
        ),
        schemas=schemas,
        data=data,
    )
