"""retadms: a requirements table in, a running data-management system out.

Layers, bottom up: :mod:`model` (domain values and validation),
:mod:`tabular` (CSV/XLSX), :mod:`reta` (the drive engine),
:mod:`permissions`, :mod:`filters`, :mod:`store` (durable multi-tenant
documents), :mod:`service` (HTTP API), :mod:`cli`.
"""

from .model import (
    Diagnostic,
    FieldDef,
    GroupDef,
    Permission,
    Platform,
    SchemaDef,
    SystemInstance,
    TenantDescriptor,
    UserDef,
    ValidationReport,
    canonical_permission_string,
    validate_instance,
)
from .reta import (
    ReTaDocument,
    instantiate,
    parse_data_exchange_table,
    parse_metadata_table,
    serialize_data_exchange_table,
    validate_reta,
)
from .permissions import Principal, authorize, effective_permissions, parse_permission_spec
from .store import DataStore
from .tabular import TabularDocument

__all__ = [
    "Diagnostic",
    "FieldDef",
    "GroupDef",
    "Permission",
    "Platform",
    "SchemaDef",
    "SystemInstance",
    "TenantDescriptor",
    "UserDef",
    "ValidationReport",
    "canonical_permission_string",
    "validate_instance",
    "ReTaDocument",
    "instantiate",
    "parse_data_exchange_table",
    "parse_metadata_table",
    "serialize_data_exchange_table",
    "validate_reta",
    "Principal",
    "authorize",
    "effective_permissions",
    "parse_permission_spec",
    "DataStore",
    "TabularDocument",
]

__version__ = "0.1.0"
