from __future__ import annotations

from datetime import date

import pytest
from hypothesis import given
from hypothesis import strategies as st

from retadms.errors import ValidationFailure
from retadms.model import (
    NO_PERMISSIONS,
    FULL_PERMISSIONS,
    DataRecord,
    FieldDef,
    OtherAttribute,
    Permission,
    SchemaDef,
    canonical_permission_string,
    coerce_literal,
    digest_password,
    normalize_value,
    parse_attribute_token,
    parse_permission_spec,
    render_value,
    validate_instance,
    validate_record_values,
    verify_password,
)

from conftest import make_instance, parse_attr


# -- permission strings ------------------------------------------------------


def test_canonical_permission_string_fixed_order():
    assert canonical_permission_string(FULL_PERMISSIONS) == "CRUD"
    assert canonical_permission_string(NO_PERMISSIONS) == ""
    assert canonical_permission_string(Permission.UPDATE | Permission.READ) == "RU"


def test_permission_round_trip_all_sixteen_subsets():
    for bits in range(16):
        p = Permission(bits)
        assert parse_permission_spec(canonical_permission_string(p)) == p


def test_parse_permission_spec_folds_and_dedupes():
    assert parse_permission_spec("rr") == Permission.READ
    assert parse_permission_spec("-") == NO_PERMISSIONS
    assert parse_permission_spec("durc") == FULL_PERMISSIONS


def test_parse_permission_spec_rejects_unknown_letter():
    from retadms.errors import InvalidPermissionLetter

    with pytest.raises(InvalidPermissionLetter):
        parse_permission_spec("RWX")


# -- literal plane -----------------------------------------------------------


@pytest.mark.parametrize(
    "text,ftype,expected",
    [
        ("2018", "int", 2018),
        ("-7", "int", -7),
        ("+0", "int", 0),
        ("2018.5", "float", 2018.5),
        (".5", "float", 0.5),
        ("1e3", "float", 1000.0),
        ("TRUE", "bool", True),
        ("false", "bool", False),
        ("2021-02-14", "date", date(2021, 2, 14)),
        ("京A123", "string", "京A123"),
    ],
)
def test_coerce_literal_accepts(text, ftype, expected):
    assert coerce_literal(text, ftype) == expected


@pytest.mark.parametrize(
    "text,ftype",
    [
        ("20x8", "int"),
        ("1.5", "int"),
        ("1_000", "int"),
        (" 2018", "int"),
        ("nan", "float"),
        ("inf", "float"),
        ("1e999", "float"),
        ("yes", "bool"),
        ("2021-2-14", "date"),
        ("2021-13-01", "date"),
        ("20210214", "date"),
        ("", "string"),
    ],
)
def test_coerce_literal_rejects(text, ftype):
    with pytest.raises(ValueError):
        coerce_literal(text, ftype)


def test_render_then_coerce_is_identity_on_samples():
    samples = [
        (2018, "int"),
        (-1, "int"),
        (2018.5, "float"),
        (1e16, "float"),
        (0.1, "float"),
        (True, "bool"),
        (False, "bool"),
        (date(1999, 12, 31), "date"),
        ("plain", "string"),
        (None, "int"),
    ]
    for value, ftype in samples:
        text = render_value(value, ftype)
        back = None if text == "" else coerce_literal(text, ftype)
        assert back == value


@given(st.floats(allow_nan=False, allow_infinity=False))
def test_float_render_parse_exact(x):
    assert coerce_literal(render_value(x, "float"), "float") == x


def test_normalize_value_rules():
    assert normalize_value(3, "float") == 3.0
    assert normalize_value("2020-01-02", "date") == date(2020, 1, 2)
    with pytest.raises(ValueError):
        normalize_value(True, "int")
    with pytest.raises(ValueError):
        normalize_value(2.5, "int")
    with pytest.raises(ValueError):
        normalize_value("", "string")
    with pytest.raises(ValueError):
        normalize_value(float("nan"), "float")


# -- field attributes ----------------------------------------------------------


def test_attribute_token_round_trip():
    for token in ("nullable", "notnull", "unique", "default=3"):
        assert parse_attribute_token(token).token() == token


def test_attribute_rejects_garbage():
    with pytest.raises(ValueError):
        parse_attribute_token("defaults=3")
    with pytest.raises(ValueError):
        OtherAttribute("nullable", "x")


def test_field_default_must_parse_under_ftype():
    FieldDef("year", "int", (parse_attr("default=2000"),))
    with pytest.raises(ValueError):
        FieldDef("year", "int", (parse_attr("default=x"),))


def test_field_conflicting_nullability_rejected():
    with pytest.raises(ValueError):
        FieldDef("a", "int", (parse_attr("nullable"), parse_attr("notnull")))


def test_schema_requires_fields_and_unique_names():
    with pytest.raises(ValueError):
        SchemaDef("s", "g", "u", NO_PERMISSIONS, NO_PERMISSIONS, ())
    with pytest.raises(ValueError):
        SchemaDef(
            "s", "g", "u", NO_PERMISSIONS, NO_PERMISSIONS,
            (FieldDef("a", "int"), FieldDef("a", "string")),
        )


# -- record validation ---------------------------------------------------------


def _schema():
    return SchemaDef(
        "vehicle", "g", "u", FULL_PERMISSIONS, NO_PERMISSIONS,
        (
            FieldDef("plate", "string", (parse_attr("unique"), parse_attr("notnull"))),
            FieldDef("year", "int", (parse_attr("nullable"),)),
            FieldDef("in_service", "bool", (parse_attr("default=true"),)),
        ),
    )


def test_validate_record_fills_default_and_null():
    values = validate_record_values(_schema(), {"plate": "X1"})
    assert values == {"plate": "X1", "year": None, "in_service": True}


def test_validate_record_rejects_unknown_and_bad_types():
    with pytest.raises(ValidationFailure) as exc:
        validate_record_values(_schema(), {"plate": "X1", "colour": "red", "year": "fast"})
    messages = [d.message for d in exc.value.diagnostics]
    assert any("colour" in m for m in messages)
    assert any("year" in m for m in messages)


def test_validate_record_notnull():
    with pytest.raises(ValidationFailure):
        validate_record_values(_schema(), {"plate": None})


# -- instance validation ---------------------------------------------------------


def test_validate_instance_empty_sections_is_clean():
    instance = make_instance(groups=(), users=[], schemas=[])
    assert validate_instance(instance).ok


def test_validate_instance_flags_unknown_membership():
    instance = make_instance(users=[("alice", ("ghost",))], schemas=[])
    report = validate_instance(instance)
    assert [d.rule for d in report.diagnostics] == ["CR1"]
    assert "ghost" in report.diagnostics[0].message


def test_validate_instance_flags_duplicate_schemaid():
    instance = make_instance(
        schemas=[("notes", "staff", "alice", "CRUD", "R"), ("notes", "staff", "alice", "R", "R")]
    )
    rules = [d.rule for d in validate_instance(instance).diagnostics]
    assert "duplicate-schemaid" in rules


def test_validate_instance_order_insensitive():
    instance = make_instance(
        users=[("alice", ("ghost",)), ("bob", ("phantom",))], schemas=[]
    )
    report_a = validate_instance(instance)
    flipped = make_instance(
        users=[("bob", ("phantom",)), ("alice", ("ghost",))], schemas=[]
    )
    report_b = validate_instance(flipped)
    key = lambda d: (d.rule, d.message)
    assert sorted(report_a.diagnostics, key=key) == sorted(report_b.diagnostics, key=key)


def test_validate_instance_checks_records():
    instance = make_instance()
    instance.data["notes"] = [
        DataRecord("1", {"title": "a", "body": None, "rank": 1}),
        DataRecord("2", {"title": "b", "body": None, "rank": "x"}),
    ]
    report = validate_instance(instance)
    assert not report.ok
    assert all(d.rule == "CR3" for d in report.diagnostics)


# -- passwords -------------------------------------------------------------------


def test_password_digest_verifies_and_salts():
    d1 = digest_password("hunter2", iterations=1000)
    d2 = digest_password("hunter2", iterations=1000)
    assert d1 != d2  # fresh salt each time
    assert verify_password("hunter2", d1)
    assert verify_password("hunter2", d2)
    assert not verify_password("hunter3", d1)
    assert "hunter2" not in d1


def test_verify_password_rejects_malformed_digest():
    assert not verify_password("x", "not-a-digest")
    assert not verify_password("x", "")
