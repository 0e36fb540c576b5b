from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from retadms.errors import UnknownSchema, UnknownUser
from retadms.model import (
    NO_PERMISSIONS,
    FULL_PERMISSIONS,
    Permission,
    canonical_permission_string,
)
from retadms.permissions import (
    ACTIONS,
    Principal,
    authorize,
    effective_permissions,
)

from conftest import make_instance


def system_with(gperm: str, operm: str, memberships):
    return make_instance(
        users=[("alice", memberships), ("erin", ())],
        schemas=[("notes", "staff", "erin", gperm, operm)],
    )


def test_entry_user_always_full():
    system = system_with("", "", ())
    assert effective_permissions("erin", "notes", system) == FULL_PERMISSIONS


def test_member_gets_gpermission_nonmember_gets_opermission():
    system = system_with("CRUD", "R", ("staff",))
    assert effective_permissions("alice", "notes", system) == FULL_PERMISSIONS
    system = system_with("CRUD", "R", ())
    assert effective_permissions("alice", "notes", system) == Permission.READ


def test_zero_membership_empty_opermission_is_empty():
    system = system_with("CRUD", "", ())
    assert effective_permissions("alice", "notes", system) == NO_PERMISSIONS


def test_unknown_ids_raise():
    system = system_with("R", "R", ())
    with pytest.raises(UnknownUser):
        effective_permissions("ghost", "notes", system)
    with pytest.raises(UnknownSchema):
        effective_permissions("alice", "ghost", system)


def test_membership_of_unrelated_group_changes_nothing():
    base = make_instance(
        groups=("staff", "other"),
        users=[("alice", ()), ("erin", ())],
        schemas=[("notes", "staff", "erin", "CRUD", "R")],
    )
    joined = make_instance(
        groups=("staff", "other"),
        users=[("alice", ("other",)), ("erin", ())],
        schemas=[("notes", "staff", "erin", "CRUD", "R")],
    )
    assert effective_permissions("alice", "notes", base) == effective_permissions(
        "alice", "notes", joined
    )


# -- authorize ----------------------------------------------------------------


def test_admin_allows_tenant_management_only():
    assert authorize(Principal(kind="admin"), "admin", None, None).allowed
    for action in ("create", "read", "update", "delete"):
        decision = authorize(Principal(kind="admin"), action, None, None)
        assert not decision.allowed and decision.reason == "missing-permission"


def test_unauthenticated_always_denied():
    system = system_with("CRUD", "CRUD", ())
    for action in ACTIONS:
        decision = authorize(None, action, "notes", system)
        assert not decision.allowed and decision.reason == "unauthenticated"


def test_tenant_full_inside_own_system_denied_elsewhere():
    system = system_with("", "", ())
    own = Principal(kind="tenant", tenant_id="acme")
    foreign = Principal(kind="tenant", tenant_id="rival")
    assert authorize(own, "update", None, system).allowed
    assert authorize(own, "delete", "notes", system).allowed
    decision = authorize(foreign, "read", "notes", system)
    assert not decision.allowed and decision.reason == "cross-tenant"
    decision = authorize(own, "admin", None, system)
    assert not decision.allowed and decision.reason == "missing-permission"


def test_user_denied_on_metadata_and_admin():
    system = system_with("CRUD", "CRUD", ("staff",))
    user = Principal(kind="user", tenant_id="acme", userid="alice")
    assert not authorize(user, "update", None, system).allowed
    assert not authorize(user, "admin", None, system).allowed


def test_user_data_actions_follow_effective_permissions():
    system = system_with("R", "", ("staff",))
    user = Principal(kind="user", tenant_id="acme", userid="alice")
    assert authorize(user, "read", "notes", system).allowed
    decision = authorize(user, "update", "notes", system)
    assert not decision.allowed and decision.reason == "missing-permission"


def test_user_unknown_schema_is_unknown_target():
    system = system_with("R", "", ())
    user = Principal(kind="user", tenant_id="acme", userid="alice")
    decision = authorize(user, "read", "ghost", system)
    assert not decision.allowed and decision.reason == "unknown-target"


def test_cross_tenant_user_denied_before_target_resolution():
    system = system_with("CRUD", "CRUD", ("staff",))
    user = Principal(kind="user", tenant_id="rival", userid="alice")
    for schemaid in ("notes", "ghost"):
        decision = authorize(user, "read", schemaid, system)
        assert decision.reason == "cross-tenant"


# -- definitional equivalence: authorize <=> effective membership --------------


@settings(max_examples=120, deadline=None)
@given(
    gbits=st.integers(0, 15),
    obits=st.integers(0, 15),
    member=st.booleans(),
    action=st.sampled_from(("create", "read", "update", "delete")),
)
def test_authorize_agrees_with_effective_permissions(gbits, obits, member, action):
    system = system_with(
        canonical_permission_string(Permission(gbits)),
        canonical_permission_string(Permission(obits)),
        ("staff",) if member else (),
    )
    user = Principal(kind="user", tenant_id="acme", userid="alice")
    decision = authorize(user, action, "notes", system)
    perms = effective_permissions("alice", "notes", system)
    flag = {
        "create": Permission.CREATE,
        "read": Permission.READ,
        "update": Permission.UPDATE,
        "delete": Permission.DELETE,
    }[action]
    assert decision.allowed == (flag in perms)
