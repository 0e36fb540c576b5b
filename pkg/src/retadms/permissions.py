"""Effective-authority computation and the allow/deny decision point.

Three principal kinds exist: the platform admin (tenant management only),
tenants (full authority inside their own system), and ordinary users, whose
authority over a schema comes from exactly one of three sources: being the
schema's entry user (always full), membership of the owning group
(gpermission), or neither (opermission).  Membership of unrelated groups
never changes a schema's grant.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .errors import UnknownSchema, UnknownUser
from .model import (
    FULL_PERMISSIONS,
    Permission,
    SystemInstance,
    canonical_permission_string,
    parse_permission_spec,
)

__all__ = [
    "Principal",
    "Decision",
    "ACTIONS",
    "parse_permission_spec",
    "canonical_permission_string",
    "effective_permissions",
    "authorize",
]

ACTIONS = ("create", "read", "update", "delete", "admin")

_ACTION_FLAGS = {
    "create": Permission.CREATE,
    "read": Permission.READ,
    "update": Permission.UPDATE,
    "delete": Permission.DELETE,
}

# Deny reason codes are a closed, machine-readable vocabulary.
CROSS_TENANT = "cross-tenant"
MISSING_PERMISSION = "missing-permission"
UNAUTHENTICATED = "unauthenticated"
UNKNOWN_TARGET = "unknown-target"


@dataclass(frozen=True)
class Principal:
    """An authenticated caller: platform admin, a tenant, or one user."""

    kind: str  # "admin" | "tenant" | "user"
    tenant_id: Optional[str] = None
    userid: Optional[str] = None

    def __post_init__(self):
        if self.kind not in ("admin", "tenant", "user"):
            raise ValueError(f"unknown principal kind: {self.kind!r}")
        if self.kind == "user" and not self.userid:
            raise ValueError("user principal needs a userid")
        if self.kind in ("tenant", "user") and not self.tenant_id:
            raise ValueError(f"{self.kind} principal needs a tenant id")


@dataclass(frozen=True)
class Decision:
    allowed: bool
    reason: Optional[str] = None

    @staticmethod
    def allow() -> "Decision":
        return Decision(True)

    @staticmethod
    def deny(reason: str) -> "Decision":
        return Decision(False, reason)


def effective_permissions(userid: str, schemaid: str, system: SystemInstance) -> Permission:
    """Resolve one user's authority over one schema.

    Entry user: always the full set.  Member of the owning group:
    gpermission.  Anyone else: opermission.  Raises UnknownUser /
    UnknownSchema when the ids do not resolve in this system.
    """
    user = system.get_user(userid)
    if user is None:
        raise UnknownUser(userid)
    schema = system.get_schema(schemaid)
    if schema is None:
        raise UnknownSchema(schemaid)
    if schema.entry == userid:
        return FULL_PERMISSIONS
    if schema.group in user.memberships:
        return schema.gpermission
    return schema.opermission


def authorize(
    principal: Optional[Principal],
    action: str,
    schemaid: Optional[str],
    system: Optional[SystemInstance],
) -> Decision:
    """Decide one access; denial is a value carrying its reason code.

    The admin may only manage tenants.  A tenant may do anything inside its
    own system and nothing elsewhere.  A user may perform a data action iff
    it is in their effective permissions for the target schema.  The check
    consults only ``system`` - never any other tenant's state.
    """
    if action not in ACTIONS:
        raise ValueError(f"unknown action: {action!r}")
    if principal is None:
        return Decision.deny(UNAUTHENTICATED)

    if principal.kind == "admin":
        if action == "admin":
            return Decision.allow()
        return Decision.deny(MISSING_PERMISSION)

    if action == "admin":
        return Decision.deny(MISSING_PERMISSION)

    if system is None:
        return Decision.deny(UNKNOWN_TARGET)
    if system.tenant.id != principal.tenant_id:
        return Decision.deny(CROSS_TENANT)

    if principal.kind == "tenant":
        return Decision.allow()

    # ordinary user: data actions only, gated by effective permissions
    if schemaid is None:
        return Decision.deny(MISSING_PERMISSION)
    try:
        perms = effective_permissions(principal.userid, schemaid, system)
    except UnknownSchema:
        return Decision.deny(UNKNOWN_TARGET)
    except UnknownUser:
        return Decision.deny(UNAUTHENTICATED)
    if _ACTION_FLAGS[action] in perms:
        return Decision.allow()
    return Decision.deny(MISSING_PERMISSION)
