from __future__ import annotations

from pathlib import Path

import pytest

from retadms.model import (
    FieldDef,
    GroupDef,
    SchemaDef,
    SystemInstance,
    TenantDescriptor,
    UserDef,
    digest_password,
    parse_permission_spec,
)
from retadms.reta import parse_metadata_table
from retadms.store import DataStore
from retadms.tabular import read_document_file

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"


@pytest.fixture(scope="session")
def vehicle_reta_path() -> Path:
    return FIXTURES / "vehicle_management.reta.csv"


@pytest.fixture(scope="session")
def vehicle_records_path() -> Path:
    return FIXTURES / "vehicle_records.csv"


@pytest.fixture()
def vehicle_reta(vehicle_reta_path):
    return parse_metadata_table(read_document_file(vehicle_reta_path))


@pytest.fixture()
def store(tmp_path) -> DataStore:
    return DataStore(tmp_path / "data")


def make_instance(
    tenant_id: str = "acme",
    *,
    password: str = "pw",
    groups=("staff",),
    users=None,
    schemas=None,
    data=None,
) -> SystemInstance:
    """Small hand-rolled instance for unit tests (digest cost kept low)."""
    if users is None:
        users = [("alice", ("staff",)), ("bob", ())]
    if schemas is None:
        schemas = [("notes", "staff", "alice", "CRUD", "R")]
    return SystemInstance(
        tenant=TenantDescriptor(
            id=tenant_id,
            password_digest=digest_password(password, iterations=1000),
            system_name=f"{tenant_id} system",
        ),
        groups=tuple(GroupDef(g) for g in groups),
        users=tuple(
            UserDef(
                userid=uid,
                username=uid.title(),
                password_digest=digest_password(f"{uid}-pw", iterations=1000),
                memberships=frozenset(memberships),
            )
            for uid, memberships in users
        ),
        schemas=tuple(
            SchemaDef(
                schemaid=sid,
                group=group,
                entry=entry,
                gpermission=parse_permission_spec(gperm),
                opermission=parse_permission_spec(operm),
                fields=(
                    FieldDef("title", "string"),
                    FieldDef("body", "string", (parse_attr("nullable"),)),
                    FieldDef("rank", "int", (parse_attr("nullable"),)),
                ),
            )
            for sid, group, entry, gperm, operm in schemas
        ),
        data=data or {},
    )


def parse_attr(token: str):
    from retadms.model import parse_attribute_token

    return parse_attribute_token(token)
