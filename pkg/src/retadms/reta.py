"""The drive engine: read -> verify -> interpret -> execute.

A system metadata table (ReTa) is a spreadsheet whose first column carries a
marker: ``T`` (tenant row), ``G`` (group row, ids growing to the right),
``U`` (user header, one user per following ``+`` row), ``S`` (schema header)
followed by an ``FI`` field header and one field per ``+`` row.  ``+`` rows
always extend the most recent section.  Sections appear in the order
T, G, U, then any number of schema blocks; G and U are optional.

:func:`parse_metadata_table` applies the grammar and keeps every cell's
(row, column) origin; :func:`validate_reta` checks content rules with
positions; :func:`instantiate` turns a clean document into a live
:class:`~retadms.model.SystemInstance` on a platform.

A data exchange table is a plain sheet: header row naming one schema's
fields in declaration order, then one record per row.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional

from .errors import (
    AuthFailure,
    DataExchangeError,
    DuplicateTenant,
    HeaderMismatch,
    InvalidPermissionLetter,
    ParseError,
    SchemaMismatch,
    UnknownTenant,
    ValidationFailure,
)
from .model import (
    DataRecord,
    Diagnostic,
    FieldDef,
    GroupDef,
    FTYPES,
    Permission,
    SchemaDef,
    SystemInstance,
    TenantDescriptor,
    UserDef,
    ValidationReport,
    coerce_literal,
    digest_password,
    is_identifier,
    parse_attribute_token,
    parse_permission_spec,
    render_value,
    validate_instance,
    verify_password,
)
from .tabular import TabularDocument

MARKERS = ("T", "G", "U", "S", "FI", "+")

_T_ARITY = 4       # T, id, password, systemName
_U_ARITY = 5       # +, userid, username, userpwd, subG
_S_ARITY = 6       # S, schemaid, groupid, entry, gpermission, opermission
_FI_MIN_ARITY = 3  # +, ftype, fname, [oa ...]


@dataclass(frozen=True)
class Cell:
    text: str
    row: int
    col: int


@dataclass
class UserRow:
    userid: Cell
    username: Cell
    userpwd: Cell
    subg: Cell

    def membership_tokens(self) -> List[str]:
        raw = self.subg.text
        return [] if raw == "" else raw.split(";")


@dataclass
class FieldRow:
    ftype: Cell
    fname: Cell
    attributes: List[Cell] = field(default_factory=list)


@dataclass
class SchemaBlock:
    schemaid: Cell
    groupid: Cell
    entry: Cell
    gpermission: Cell
    opermission: Cell
    fields: List[FieldRow] = field(default_factory=list)


@dataclass
class TenantRow:
    id: Cell
    password: Cell
    system_name: Cell


@dataclass
class ReTaDocument:
    """Position-annotated parse of a system metadata table."""

    tenant: TenantRow
    groups: List[Cell] = field(default_factory=list)
    users: List[UserRow] = field(default_factory=list)
    schemas: List[SchemaBlock] = field(default_factory=list)
    origin: str = "<memory>"


def _cells(row: List[str], row_num: int, arity: int) -> List[Cell]:
    """Whitespace-trim and pad a marker row out to ``arity`` cells.

    Cells missing on the right are indistinguishable from trimmed trailing
    empties, so they pad as empty cells; content validation flags them.
    """
    padded = []
    for col in range(2, arity + 1):
        text = row[col - 1].strip() if col <= len(row) else ""
        padded.append(Cell(text, row_num, col))
    return padded


def _is_blank(row: List[str]) -> bool:
    return all(cell.strip() == "" for cell in row)


def parse_metadata_table(doc: TabularDocument) -> ReTaDocument:
    """Apply the metadata-table grammar; raises positioned :class:`ParseError`."""
    numbered = [
        (i + 1, row) for i, row in enumerate(doc.rows) if not _is_blank(row)
    ]
    if not numbered:
        raise ParseError("empty document: no tenant row", 1, 1)

    reta: Optional[ReTaDocument] = None
    section = "start"  # start -> tenant -> groups -> users -> schema-head -> fields
    open_schema: Optional[SchemaBlock] = None
    open_schema_row = 0

    for row_num, raw_row in numbered:
        marker = raw_row[0].strip()
        if marker not in MARKERS:
            if section == "start":
                raise ParseError(f"missing T row: first marker is {marker!r}", row_num, 1)
            raise ParseError(f"unknown marker {marker!r}", row_num, 1)

        if section == "start":
            if marker != "T":
                raise ParseError(f"missing T row: first marker is {marker!r}", row_num, 1)
            if len(raw_row) > _T_ARITY:
                raise ParseError(
                    f"tenant row has {len(raw_row)} cells, expected at most {_T_ARITY}",
                    row_num,
                    _T_ARITY + 1,
                )
            id_c, pw_c, name_c = _cells(raw_row, row_num, _T_ARITY)
            reta = ReTaDocument(tenant=TenantRow(id_c, pw_c, name_c), origin=doc.origin)
            section = "tenant"
            continue

        if section == "fields" and marker == "FI":
            raise ParseError("unexpected FI header inside a schema block", row_num, 1)
        if marker == "T":
            raise ParseError("duplicate T row", row_num, 1)
        if marker == "G":
            if section != "tenant":
                raise ParseError("G section must directly follow the T row", row_num, 1)
            for col, text in enumerate(raw_row[1:], start=2):
                reta.groups.append(Cell(text.strip(), row_num, col))
            section = "groups"
            continue
        if marker == "U":
            if section not in ("tenant", "groups"):
                raise ParseError("U section must come before schema blocks", row_num, 1)
            # remaining cells are column labels; they carry no content
            section = "users"
            continue
        if marker == "S":
            if section == "schema-head":
                raise ParseError("schema block missing FI header", row_num, 1)
            if len(raw_row) > _S_ARITY:
                raise ParseError(
                    f"schema row has {len(raw_row)} cells, expected at most {_S_ARITY}",
                    row_num,
                    _S_ARITY + 1,
                )
            sid, gid, entry, gperm, operm = _cells(raw_row, row_num, _S_ARITY)
            open_schema = SchemaBlock(sid, gid, entry, gperm, operm)
            open_schema_row = row_num
            reta.schemas.append(open_schema)
            section = "schema-head"
            continue
        if marker == "FI":
            if section != "schema-head":
                raise ParseError("FI header outside a schema block", row_num, 1)
            # remaining cells are column labels; they carry no content
            section = "fields"
            continue

        # marker == "+": extends the most recent section
        if section == "groups":
            for col, text in enumerate(raw_row[1:], start=2):
                reta.groups.append(Cell(text.strip(), row_num, col))
            continue
        if section == "users":
            if len(raw_row) > _U_ARITY:
                raise ParseError(
                    f"user row has {len(raw_row)} cells, expected at most {_U_ARITY}",
                    row_num,
                    _U_ARITY + 1,
                )
            if len(raw_row) < 2:
                raise ParseError(
                    "user row needs userid, username, userpwd, subG cells", row_num, 1
                )
            uid, uname, upwd, subg = _cells(raw_row, row_num, _U_ARITY)
            reta.users.append(UserRow(uid, uname, upwd, subg))
            continue
        if section == "fields":
            if len(raw_row) < _FI_MIN_ARITY:
                raise ParseError("field row needs ftype and fname cells", row_num, 1)
            ftype_c = Cell(raw_row[1].strip(), row_num, 2)
            fname_c = Cell(raw_row[2].strip(), row_num, 3)
            oa_cells = [
                Cell(text.strip(), row_num, col)
                for col, text in enumerate(raw_row[3:], start=4)
            ]
            open_schema.fields.append(FieldRow(ftype_c, fname_c, oa_cells))
            continue
        if section == "schema-head":
            raise ParseError("schema block missing FI header", row_num, 1)
        raise ParseError("'+' row without a section to extend", row_num, 1)

    if section == "schema-head":
        raise ParseError("schema block missing FI header", open_schema_row, 1)
    return reta


# ---------------------------------------------------------------------------
# Verification
# ---------------------------------------------------------------------------


def _check_id(report: ValidationReport, cell: Cell, what: str) -> bool:
    if cell.text == "":
        report.add("empty-cell", f"empty {what} cell", cell.row, cell.col)
        return False
    if not is_identifier(cell.text):
        report.add(
            "bad-id",
            f"{what} {cell.text!r} may not contain whitespace or ';'",
            cell.row,
            cell.col,
        )
        return False
    return True


def _check_permission(report: ValidationReport, cell: Cell, what: str):
    try:
        parse_permission_spec(cell.text)
    except InvalidPermissionLetter as exc:
        report.add(
            "bad-permission",
            f"{what}: invalid permission letter {exc.letter!r}",
            cell.row,
            cell.col,
        )


def validate_reta(reta: ReTaDocument) -> ValidationReport:
    """Content checks with positions; an empty report guarantees that
    instantiation will succeed structurally."""
    report = ValidationReport()

    _check_id(report, reta.tenant.id, "tenant id")
    if reta.tenant.password.text == "":
        report.add(
            "empty-cell", "empty tenant password cell",
            reta.tenant.password.row, reta.tenant.password.col,
        )

    seen_groups = set()
    for cell in reta.groups:
        if not _check_id(report, cell, "groupid"):
            continue
        if cell.text in seen_groups:
            report.add("duplicate-groupid", f'duplicate groupid "{cell.text}"', cell.row, cell.col)
        seen_groups.add(cell.text)

    seen_users = set()
    for user in reta.users:
        if _check_id(report, user.userid, "userid"):
            if user.userid.text in seen_users:
                report.add(
                    "duplicate-userid", f'duplicate userid "{user.userid.text}"',
                    user.userid.row, user.userid.col,
                )
            seen_users.add(user.userid.text)
        if user.userpwd.text == "":
            report.add("empty-cell", "empty user password cell", user.userpwd.row, user.userpwd.col)
        for token in user.membership_tokens():
            token = token.strip()
            if token == "":
                report.add("empty-cell", "empty group reference in subG", user.subg.row, user.subg.col)
            elif token not in seen_groups:
                report.add("CR1", f'unknown groupid "{token}"', user.subg.row, user.subg.col)

    seen_schemas = set()
    for block in reta.schemas:
        if _check_id(report, block.schemaid, "schemaid"):
            if block.schemaid.text in seen_schemas:
                report.add(
                    "duplicate-schemaid", f'duplicate schemaid "{block.schemaid.text}"',
                    block.schemaid.row, block.schemaid.col,
                )
            seen_schemas.add(block.schemaid.text)
        if _check_id(report, block.groupid, "schema groupid"):
            if block.groupid.text not in seen_groups:
                report.add(
                    "CR2", f'unknown groupid "{block.groupid.text}"',
                    block.groupid.row, block.groupid.col,
                )
        if _check_id(report, block.entry, "schema entry userid"):
            if block.entry.text not in seen_users:
                report.add(
                    "CR2", f'unknown entry userid "{block.entry.text}"',
                    block.entry.row, block.entry.col,
                )
        _check_permission(report, block.gpermission, "gpermission")
        _check_permission(report, block.opermission, "opermission")

        if not block.fields:
            report.add(
                "CR3", f'schema "{block.schemaid.text}" has no fields',
                block.schemaid.row, block.schemaid.col,
            )
        seen_fields = set()
        for frow in block.fields:
            if frow.ftype.text not in FTYPES:
                report.add(
                    "bad-ftype",
                    f"unknown ftype {frow.ftype.text!r} (expected one of {', '.join(FTYPES)})",
                    frow.ftype.row, frow.ftype.col,
                )
            if _check_id(report, frow.fname, "field name"):
                if frow.fname.text in seen_fields:
                    report.add(
                        "duplicate-field", f'duplicate field "{frow.fname.text}"',
                        frow.fname.row, frow.fname.col,
                    )
                seen_fields.add(frow.fname.text)
            nullability = 0
            defaults = []
            for oa in frow.attributes:
                if oa.text == "":
                    report.add("bad-attribute", "empty attribute cell", oa.row, oa.col)
                    continue
                try:
                    attr = parse_attribute_token(oa.text)
                except ValueError as exc:
                    report.add("bad-attribute", str(exc), oa.row, oa.col)
                    continue
                if attr.kind in ("nullable", "notnull"):
                    nullability += 1
                    if nullability > 1:
                        report.add(
                            "bad-attribute", "more than one nullability token",
                            oa.row, oa.col,
                        )
                if attr.kind == "default":
                    defaults.append((attr, oa))
            if len(defaults) > 1:
                cell = defaults[1][1]
                report.add("bad-attribute", "more than one default token", cell.row, cell.col)
            if defaults and frow.ftype.text in FTYPES:
                attr, cell = defaults[0]
                try:
                    coerce_literal(attr.value, frow.ftype.text)
                except ValueError as exc:
                    report.add("bad-attribute", f"default literal: {exc}", cell.row, cell.col)
    return report


# ---------------------------------------------------------------------------
# Instantiation
# ---------------------------------------------------------------------------


def _stable_digest(plain: str, previous: Optional[str]) -> str:
    """Keep the existing digest when the password is unchanged, so that
    replaying an identical replace is observably idempotent."""
    if previous is not None and verify_password(plain, previous):
        return previous
    return digest_password(plain)


def build_instance(reta: ReTaDocument, previous: Optional[SystemInstance] = None) -> SystemInstance:
    """Interpret a validated document into a SystemInstance.

    When ``previous`` is given (replace mode), record collections carry over
    for every schema whose field list is unchanged, and password digests are
    reused where the plaintext still verifies.
    """
    old_users = {u.userid: u for u in previous.users} if previous else {}
    tenant = TenantDescriptor(
        id=reta.tenant.id.text,
        password_digest=_stable_digest(
            reta.tenant.password.text, previous.tenant.password_digest if previous else None
        ),
        system_name=reta.tenant.system_name.text,
    )
    users = tuple(
        UserDef(
            userid=u.userid.text,
            username=u.username.text,
            password_digest=_stable_digest(
                u.userpwd.text,
                old_users[u.userid.text].password_digest if u.userid.text in old_users else None,
            ),
            memberships=frozenset(t.strip() for t in u.membership_tokens()),
        )
        for u in reta.users
    )
    schemas = tuple(
        SchemaDef(
            schemaid=block.schemaid.text,
            group=block.groupid.text,
            entry=block.entry.text,
            gpermission=parse_permission_spec(block.gpermission.text),
            opermission=parse_permission_spec(block.opermission.text),
            fields=tuple(
                FieldDef(
                    fname=frow.fname.text,
                    ftype=frow.ftype.text,
                    attributes=tuple(
                        parse_attribute_token(oa.text) for oa in frow.attributes
                    ),
                )
                for frow in block.fields
            ),
        )
        for block in reta.schemas
    )
    data = {schema.schemaid: [] for schema in schemas}
    if previous is not None:
        old_schemas = {s.schemaid: s for s in previous.schemas}
        for schema in schemas:
            old = old_schemas.get(schema.schemaid)
            if old is not None and schema.same_field_list(old):
                data[schema.schemaid] = [
                    r.copy() for r in previous.data.get(schema.schemaid, [])
                ]
    return SystemInstance(
        tenant=tenant,
        groups=tuple(GroupDef(c.text) for c in reta.groups),
        users=users,
        schemas=schemas,
        data=data,
    )


def instantiate(reta: ReTaDocument, platform, mode: str = "create") -> SystemInstance:
    """Execute a validated document against a platform.

    ``platform`` needs ``get_or_none(tenant_id)`` and ``put(instance)``;
    both the in-memory :class:`~retadms.model.Platform` and the durable
    store satisfy that.  create fails on an existing tenant id; replace
    verifies the document's tenant password against the stored digest and
    keeps records only for schemas whose field list is unchanged.
    """
    if mode not in ("create", "replace"):
        raise ValueError(f"unknown mode: {mode!r}")
    report = validate_reta(reta)
    if not report.ok:
        raise ValidationFailure(report.diagnostics, message="document not instantiable")

    tenant_id = reta.tenant.id.text
    existing = platform.get_or_none(tenant_id)
    if mode == "create":
        if existing is not None:
            raise DuplicateTenant(tenant_id)
        instance = build_instance(reta)
    else:
        if existing is None:
            raise UnknownTenant(tenant_id)
        if not verify_password(reta.tenant.password.text, existing.tenant.password_digest):
            raise AuthFailure()
        instance = build_instance(reta, previous=existing)
    check = validate_instance(instance)
    if not check.ok:  # unreachable after a clean validate_reta; belt and braces
        raise ValidationFailure(check.diagnostics, message="instance invalid")
    platform.put(instance)
    return instance


# ---------------------------------------------------------------------------
# Data exchange tables
# ---------------------------------------------------------------------------


@dataclass
class ImportResult:
    records: List[DataRecord] = field(default_factory=list)
    rejected: List[Diagnostic] = field(default_factory=list)
    row_numbers: List[int] = field(default_factory=list)


def parse_data_exchange_table(
    doc: TabularDocument, schema: SchemaDef, *, atomic: bool = True
) -> ImportResult:
    """Read records for one schema from a header-plus-rows sheet.

    The header must list exactly the schema's field names in declaration
    order.  Cells coerce by field type; an empty cell is null.  In atomic
    mode any bad row raises :class:`DataExchangeError` carrying every
    diagnostic; otherwise bad rows land in ``rejected`` and clean ones in
    ``records`` (row order preserved).

    Only rows with no cells at all are skipped; a row of whitespace-only
    cells is data (string values are verbatim).
    """
    numbered = [(i + 1, row) for i, row in enumerate(doc.rows) if row]
    if not numbered:
        raise HeaderMismatch("document has no header row")
    header_num, header = numbered[0]
    names = [cell.strip() for cell in header]
    expected = list(schema.field_names)
    if names != expected:
        raise HeaderMismatch(
            f"header {names!r} does not match schema fields {expected!r} "
            f"(row {header_num})"
        )

    result = ImportResult()
    for row_num, row in numbered[1:]:
        diagnostics = []
        if len(row) > len(expected):
            diagnostics.append(
                Diagnostic(
                    "bad-row",
                    f"row has {len(row)} cells, expected {len(expected)}",
                    row_num,
                    len(expected) + 1,
                )
            )
        else:
            values = {}
            for col, f in enumerate(schema.fields, start=1):
                text = row[col - 1] if col <= len(row) else ""
                if text == "":
                    if not f.nullable:
                        diagnostics.append(
                            Diagnostic(
                                "null-violation",
                                f"field {f.fname!r} is not nullable",
                                row_num,
                                col,
                            )
                        )
                    values[f.fname] = None
                    continue
                try:
                    values[f.fname] = coerce_literal(text, f.ftype)
                except ValueError as exc:
                    diagnostics.append(
                        Diagnostic("coercion-error", f"field {f.fname!r}: {exc}", row_num, col)
                    )
        if diagnostics:
            result.rejected.extend(diagnostics)
        else:
            result.records.append(DataRecord(None, values))
            result.row_numbers.append(row_num)
    if atomic and result.rejected:
        raise DataExchangeError(result.rejected)
    return result


def serialize_data_exchange_table(records, schema: SchemaDef) -> TabularDocument:
    """Render records as a sheet that reparses to the same values.

    Row 1 is the field names in schema order; null becomes the empty cell;
    every value renders in the exact literal form the parser accepts.
    """
    rows = [list(schema.field_names)]
    expected = set(schema.field_names)
    for i, record in enumerate(records):
        if set(record.values) != expected:
            raise SchemaMismatch(
                f"record {record.record_id or i} keys do not match schema "
                f"{schema.schemaid!r}"
            )
        row = []
        for f in schema.fields:
            value = record.values[f.fname]
            try:
                row.append(render_value(value, f.ftype))
            except (ValueError, AttributeError, TypeError) as exc:
                raise SchemaMismatch(
                    f"record {record.record_id or i} field {f.fname!r}: "
                    f"unrenderable value {value!r} ({exc})"
                ) from None
        rows.append(row)
    return TabularDocument(rows=rows, origin=f"export:{schema.schemaid}")
