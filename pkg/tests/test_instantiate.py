from __future__ import annotations

import dataclasses

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from retadms.errors import AuthFailure, DuplicateTenant, UnknownTenant, ValidationFailure
from retadms.model import Platform, validate_instance, verify_password
from retadms.reta import build_instance, instantiate, parse_metadata_table, validate_reta
from retadms.tabular import read_csv_text


def parse(text: str):
    return parse_metadata_table(read_csv_text(text))


MINI = "T,acme,pw,Acme\nG,g\nU,h,h,h,h\n+,u1,One,pw1,g\nS,s,g,u1,CRUD,R\nFI,f,f\n+,int,x,nullable\n+,string,tag,nullable\n"


def test_create_vehicle_fixture_counts(vehicle_reta):
    platform = Platform()
    instance = instantiate(vehicle_reta, platform, "create")
    assert len(instance.users) == 2
    assert len(instance.schemas) == 3
    assert len(instance.groups) == 2
    assert platform.tenant_ids() == ["vms"]
    assert validate_instance(instance).ok
    # passwords digested, never plaintext at rest
    assert instance.tenant.password_digest.startswith("pbkdf2sha256$")
    assert "vms-secret" not in instance.tenant.password_digest
    assert verify_password("vms-secret", instance.tenant.password_digest)
    assert verify_password("cust1-pw", instance.users[0].password_digest)


def test_create_twice_fails_duplicate_tenant(vehicle_reta):
    platform = Platform()
    instantiate(vehicle_reta, platform, "create")
    with pytest.raises(DuplicateTenant):
        instantiate(vehicle_reta, platform, "create")
    assert len(platform.tenant_ids()) == 1


def test_replace_requires_existing_tenant():
    platform = Platform()
    with pytest.raises(UnknownTenant):
        instantiate(parse(MINI), platform, "replace")


def test_replace_verifies_password():
    platform = Platform()
    instantiate(parse(MINI), platform, "create")
    wrong = parse(MINI.replace("T,acme,pw,", "T,acme,nope,"))
    with pytest.raises(AuthFailure):
        instantiate(wrong, platform, "replace")


def test_replace_keeps_records_when_field_list_unchanged():
    platform = Platform()
    instance = instantiate(parse(MINI), platform, "create")
    from retadms.model import DataRecord

    instance.data["s"] = [DataRecord(str(i), {"x": i, "tag": None}) for i in range(1, 6)]
    replaced = instantiate(parse(MINI), platform, "replace")
    assert [r.values["x"] for r in replaced.data["s"]] == [1, 2, 3, 4, 5]


def test_replace_drops_records_when_field_list_changes():
    platform = Platform()
    instance = instantiate(parse(MINI), platform, "create")
    from retadms.model import DataRecord

    instance.data["s"] = [DataRecord("1", {"x": 1, "tag": None})]
    changed = parse(MINI.replace("+,int,x,nullable\n", "+,float,x,nullable\n"))
    replaced = instantiate(changed, platform, "replace")
    assert replaced.data.get("s", []) == []


def test_replace_retention_is_per_schema():
    platform = Platform()
    two = (
        "T,acme,pw,Acme\nG,g\nU,h,h,h,h\n+,u1,One,pw1,g\n"
        "S,a,g,u1,CRUD,R\nFI,f,f\n+,int,x,nullable\n"
        "S,b,g,u1,CRUD,R\nFI,f,f\n+,int,y,nullable\n"
    )
    instance = instantiate(parse(two), platform, "create")
    from retadms.model import DataRecord

    instance.data["a"] = [DataRecord("1", {"x": 1})]
    instance.data["b"] = [DataRecord("1", {"y": 1})]
    changed = parse(two.replace("+,int,y,nullable\n", "+,int,y,notnull\n"))
    replaced = instantiate(changed, platform, "replace")
    assert len(replaced.data["a"]) == 1
    assert replaced.data.get("b", []) == []


def test_replace_with_identical_document_is_idempotent():
    platform = Platform()
    first = instantiate(parse(MINI), platform, "create")
    again = instantiate(parse(MINI), platform, "replace")
    assert again == first  # digests stable when passwords unchanged
    third = instantiate(parse(MINI), platform, "replace")
    assert third == again


def test_replace_changes_metadata():
    platform = Platform()
    instantiate(parse(MINI), platform, "create")
    renamed = parse(MINI.replace(",Acme\n", ",Acme 2\n"))
    replaced = instantiate(renamed, platform, "replace")
    assert replaced.tenant.system_name == "Acme 2"


def test_instantiate_rejects_invalid_document():
    platform = Platform()
    bad = parse("T,acme,pw,Acme\nU,h,h,h,h\n+,u1,One,pw1,ghost\n")
    with pytest.raises(ValidationFailure):
        instantiate(bad, platform, "create")
    assert platform.tenant_ids() == []


def test_build_instance_zero_membership_users():
    reta = parse("T,t,p,n\nU,h,h,h,h\n+,u1,One,pw,\n")
    assert validate_reta(reta).ok
    instance = build_instance(reta)
    assert instance.users[0].memberships == frozenset()


# -- platform invariants under random create/replace/delete sequences ---------


@settings(max_examples=25, deadline=None)
@given(
    st.lists(
        st.tuples(st.sampled_from(["create", "replace", "delete"]), st.integers(0, 3)),
        max_size=12,
    )
)
def test_platform_invariants_hold_under_random_sequences(ops):
    platform = Platform()
    live = {}
    for op, n in ops:
        tid = f"tenant{n}"
        doc = parse(MINI.replace("T,acme,pw,", f"T,{tid},pw,"))
        if op == "create":
            if tid in live:
                with pytest.raises(DuplicateTenant):
                    instantiate(doc, platform, "create")
            else:
                instantiate(doc, platform, "create")
                live[tid] = True
        elif op == "replace":
            if tid in live:
                instantiate(doc, platform, "replace")
            else:
                with pytest.raises(UnknownTenant):
                    instantiate(doc, platform, "replace")
        else:
            if tid in live:
                platform.remove(tid)
                del live[tid]
            else:
                with pytest.raises(UnknownTenant):
                    platform.remove(tid)
        assert sorted(platform.tenant_ids()) == sorted(live)
        # the platform is exactly the union of its member systems
        for tenant_id in platform.tenant_ids():
            assert platform.get_or_none(tenant_id).tenant.id == tenant_id
