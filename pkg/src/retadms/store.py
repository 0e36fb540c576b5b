"""Durable, schemaless, per-tenant document store.

Every tenant's whole system (metadata plus record collections plus id
counters) lives in one JSON file under the data directory, written with
tmp-file-plus-rename so a crash never leaves a torn document.  All
addressing starts from a tenant id, so isolation holds by construction:
no operation can touch another tenant's file.

Writes within one tenant are serialized by a per-tenant lock; reads hand
out copies, never live objects.  Record ids are per-(tenant, schema)
monotonically increasing integers rendered as strings; counters survive
metadata replacement so ids are never reused while a tenant exists.
"""

from __future__ import annotations

import json
import os
import threading
import urllib.parse
from pathlib import Path
from typing import List, Optional, Tuple

from . import filters as filters_mod
from .errors import (
    BadAggregation,
    BadFilter,
    UniqueViolation,
    UnknownRecord,
    UnknownSchema,
    UnknownTenant,
    ValidationFailure,
)
from .model import (
    DataRecord,
    Diagnostic,
    SystemInstance,
    _utc_now_iso,
    instance_from_doc,
    instance_to_doc,
    validate_instance,
    validate_record_values,
)

AGGREGATIONS = ("count", "sum", "avg", "min", "max")

_AGG_FTYPES = {
    "count": ("string", "int", "float", "bool", "date"),
    "sum": ("int", "float"),
    "avg": ("int", "float"),
    "min": ("int", "float", "date"),
    "max": ("int", "float", "date"),
}


class DataStore:
    """Thread-safe facade over one data directory."""

    def __init__(self, data_dir):
        self.data_dir = Path(data_dir)
        self.tenants_dir = self.data_dir / "tenants"
        self.tenants_dir.mkdir(parents=True, exist_ok=True)
        self._log_path = self.data_dir / "creation_log.jsonl"
        self._registry_lock = threading.Lock()
        self._tenant_locks = {}
        self._systems = {}   # tenant id -> SystemInstance (live, lock-guarded)
        self._counters = {}  # tenant id -> {schemaid: next int id}
        self._load_all()

    # -- loading / persistence -------------------------------------------

    def _tenant_path(self, tenant_id: str) -> Path:
        return self.tenants_dir / f"t_{urllib.parse.quote(tenant_id, safe='')}.json"

    def _load_all(self):
        for path in sorted(self.tenants_dir.glob("t_*.json")):
            with open(path, "r", encoding="utf-8") as fh:
                doc = json.load(fh)
            instance = instance_from_doc(doc)
            self._systems[instance.tenant.id] = instance
            self._counters[instance.tenant.id] = {
                sid: int(n) for sid, n in doc.get("counters", {}).items()
            }

    def _persist(self, tenant_id: str):
        instance = self._systems[tenant_id]
        doc = instance_to_doc(instance)
        doc["counters"] = self._counters.get(tenant_id, {})
        path = self._tenant_path(tenant_id)
        tmp = path.with_suffix(".json.tmp")
        data = json.dumps(doc, ensure_ascii=False, allow_nan=False)
        with open(tmp, "w", encoding="utf-8") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)

    def _lock(self, tenant_id: str) -> threading.RLock:
        with self._registry_lock:
            lock = self._tenant_locks.get(tenant_id)
            if lock is None:
                lock = self._tenant_locks[tenant_id] = threading.RLock()
            return lock

    def lock(self, tenant_id: str) -> threading.RLock:
        """Per-tenant write lock; callers composing multi-step operations
        (e.g. check-then-instantiate) hold it around the whole sequence."""
        return self._lock(tenant_id)

    # -- system lifecycle --------------------------------------------------

    def tenant_ids(self) -> List[str]:
        with self._registry_lock:
            return sorted(self._systems)

    def get_or_none(self, tenant_id: str) -> Optional[SystemInstance]:
        with self._lock(tenant_id):
            instance = self._systems.get(tenant_id)
            return instance.copy() if instance is not None else None

    def get_system(self, tenant_id: str) -> SystemInstance:
        instance = self.get_or_none(tenant_id)
        if instance is None:
            raise UnknownTenant(tenant_id)
        return instance

    def put_system(self, instance: SystemInstance) -> None:
        """Create or replace a whole system; durable on return."""
        report = validate_instance(instance)
        if not report.ok:
            raise ValidationFailure(report.diagnostics, message="instance invalid")
        tenant_id = instance.tenant.id
        with self._lock(tenant_id):
            is_new = tenant_id not in self._systems
            old_counters = self._counters.get(tenant_id, {})
            counters = {}
            for schema in instance.schemas:
                sid = schema.schemaid
                max_id = 0
                for record in instance.data.get(sid, ()):
                    try:
                        max_id = max(max_id, int(record.record_id))
                    except (TypeError, ValueError):
                        pass
                counters[sid] = max(old_counters.get(sid, 1), max_id + 1)
            self._systems[tenant_id] = instance.copy()
            self._counters[tenant_id] = counters
            self._persist(tenant_id)
            if is_new:
                self._append_log(tenant_id)

    # duck-type alias so the store can stand in as the platform
    put = put_system

    def delete_system(self, tenant_id: str) -> None:
        with self._lock(tenant_id):
            if tenant_id not in self._systems:
                raise UnknownTenant(tenant_id)
            del self._systems[tenant_id]
            self._counters.pop(tenant_id, None)
            try:
                os.remove(self._tenant_path(tenant_id))
            except FileNotFoundError:
                pass

    def _append_log(self, tenant_id: str):
        entry = json.dumps({"tenant": tenant_id, "at": _utc_now_iso()})
        with open(self._log_path, "a", encoding="utf-8") as fh:
            fh.write(entry + "\n")

    def creation_log(self) -> List[Tuple[str, str]]:
        if not self._log_path.exists():
            return []
        out = []
        with open(self._log_path, "r", encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    entry = json.loads(line)
                    out.append((entry["tenant"], entry["at"]))
        return out

    # -- records -----------------------------------------------------------

    def _live(self, tenant_id: str) -> SystemInstance:
        instance = self._systems.get(tenant_id)
        if instance is None:
            raise UnknownTenant(tenant_id)
        return instance

    def _schema(self, instance: SystemInstance, schemaid: str):
        schema = instance.get_schema(schemaid)
        if schema is None:
            raise UnknownSchema(schemaid)
        return schema

    def _check_unique(self, schema, records, values, *, exclude_id=None):
        for f in schema.fields:
            if not f.unique:
                continue
            value = values.get(f.fname)
            if value is None:
                continue
            for record in records:
                if record.record_id == exclude_id:
                    continue
                if record.values.get(f.fname) == value:
                    raise UniqueViolation(f.fname, value)

    def insert_record(self, tenant_id: str, schemaid: str, values) -> str:
        with self._lock(tenant_id):
            instance = self._live(tenant_id)
            schema = self._schema(instance, schemaid)
            normalized = validate_record_values(schema, values)
            records = instance.data.setdefault(schemaid, [])
            self._check_unique(schema, records, normalized)
            record_id = self._next_id(tenant_id, schemaid)
            records.append(DataRecord(record_id, normalized))
            self._persist(tenant_id)
            return record_id

    def _next_id(self, tenant_id: str, schemaid: str) -> str:
        counters = self._counters.setdefault(tenant_id, {})
        value = counters.get(schemaid, 1)
        counters[schemaid] = value + 1
        return str(value)

    def insert_many(
        self,
        tenant_id: str,
        schemaid: str,
        rows,
        *,
        atomic: bool = True,
        row_numbers: Optional[List[int]] = None,
    ) -> Tuple[List[str], List[Diagnostic]]:
        """Bulk insert with batch-level unique checking.

        In atomic mode any bad row raises ValidationFailure carrying every
        diagnostic and nothing is written; otherwise clean rows commit and
        bad ones come back as diagnostics tagged with their source row.
        """
        with self._lock(tenant_id):
            instance = self._live(tenant_id)
            schema = self._schema(instance, schemaid)
            records = instance.data.setdefault(schemaid, [])
            diagnostics = []
            accepted = []
            unique_fields = [f.fname for f in schema.fields if f.unique]
            batch_seen = {fname: set() for fname in unique_fields}

            def existing_values(fname):
                return {
                    r.values.get(fname)
                    for r in records
                    if r.values.get(fname) is not None
                }

            collection_seen = {fname: existing_values(fname) for fname in unique_fields}
            for i, row in enumerate(rows):
                row_num = row_numbers[i] if row_numbers else None
                try:
                    normalized = validate_record_values(schema, row)
                except ValidationFailure as exc:
                    for d in exc.diagnostics:
                        diagnostics.append(Diagnostic(d.rule, d.message, row_num, d.col))
                    continue
                clash = False
                for fname in unique_fields:
                    value = normalized.get(fname)
                    if value is None:
                        continue
                    if value in collection_seen[fname] or value in batch_seen[fname]:
                        diagnostics.append(
                            Diagnostic(
                                "unique-violation",
                                f"duplicate value for unique field {fname!r}: {value!r}",
                                row_num,
                            )
                        )
                        clash = True
                if clash:
                    continue
                for fname in unique_fields:
                    value = normalized.get(fname)
                    if value is not None:
                        batch_seen[fname].add(value)
                accepted.append(normalized)
            if atomic and diagnostics:
                raise ValidationFailure(diagnostics, message="import rejected")
            ids = []
            for normalized in accepted:
                record_id = self._next_id(tenant_id, schemaid)
                records.append(DataRecord(record_id, normalized))
                ids.append(record_id)
            if ids:
                self._persist(tenant_id)
            return ids, diagnostics

    def get_record(self, tenant_id: str, schemaid: str, record_id: str) -> DataRecord:
        with self._lock(tenant_id):
            instance = self._live(tenant_id)
            self._schema(instance, schemaid)
            for record in instance.data.get(schemaid, ()):
                if record.record_id == record_id:
                    return record.copy()
            raise UnknownRecord(record_id)

    def update_record(self, tenant_id: str, schemaid: str, record_id: str, partial) -> DataRecord:
        """Merge partial values onto the stored record, then revalidate whole."""
        with self._lock(tenant_id):
            instance = self._live(tenant_id)
            schema = self._schema(instance, schemaid)
            records = instance.data.get(schemaid, [])
            for i, record in enumerate(records):
                if record.record_id != record_id:
                    continue
                merged = dict(record.values)
                unknown = [k for k in partial if k not in schema.field_map()]
                if unknown:
                    raise ValidationFailure(
                        [Diagnostic("CR3", f"unknown field {k!r}") for k in unknown],
                        message="record rejected",
                    )
                merged.update(partial)
                normalized = validate_record_values(schema, merged)
                self._check_unique(schema, records, normalized, exclude_id=record_id)
                records[i] = DataRecord(record_id, normalized)
                self._persist(tenant_id)
                return records[i].copy()
            raise UnknownRecord(record_id)

    def delete_record(self, tenant_id: str, schemaid: str, record_id: str) -> None:
        with self._lock(tenant_id):
            instance = self._live(tenant_id)
            self._schema(instance, schemaid)
            records = instance.data.get(schemaid, [])
            for i, record in enumerate(records):
                if record.record_id == record_id:
                    del records[i]
                    self._persist(tenant_id)
                    return
            raise UnknownRecord(record_id)

    # -- query and statistics ----------------------------------------------

    def query(
        self,
        tenant_id: str,
        schemaid: str,
        filter_expr: Optional[filters_mod.FilterExpr] = None,
        *,
        offset: int = 0,
        limit: Optional[int] = None,
        order_by: Optional[str] = None,
        descending: bool = False,
    ) -> Tuple[List[DataRecord], int]:
        """Filtered, ordered, paged read; total is the unpaged match count.

        Default order is record id (insertion) order.  An explicit order key
        sorts nulls last with record id as the tiebreak, both directions.
        """
        with self._lock(tenant_id):
            instance = self._live(tenant_id)
            schema = self._schema(instance, schemaid)
            expr = filters_mod.validate_filter(filter_expr or filters_mod.EMPTY_FILTER, schema)
            if order_by is not None and order_by not in schema.field_map():
                raise BadFilter(f"unknown order field {order_by!r}")
            matched = [
                r for r in instance.data.get(schemaid, ()) if filters_mod.matches(expr, r.values)
            ]
            matched.sort(key=lambda r: int(r.record_id))
            if order_by is not None:
                non_null = [r for r in matched if r.values.get(order_by) is not None]
                nulls = [r for r in matched if r.values.get(order_by) is None]
                non_null.sort(key=lambda r: r.values[order_by], reverse=descending)
                matched = non_null + nulls
            total = len(matched)
            if offset:
                matched = matched[offset:]
            if limit is not None:
                matched = matched[:limit]
            return [r.copy() for r in matched], total

    def statistics(
        self,
        tenant_id: str,
        schemaid: str,
        fname: str,
        agg: str,
        filter_expr: Optional[filters_mod.FilterExpr] = None,
    ):
        """Aggregate over non-null values of matching records.

        count counts matching records (nulls included); sum of nothing is 0;
        avg/min/max of nothing is None.
        """
        if agg not in AGGREGATIONS:
            raise BadAggregation(f"unknown aggregation {agg!r}")
        with self._lock(tenant_id):
            instance = self._live(tenant_id)
            schema = self._schema(instance, schemaid)
            f = schema.field_map().get(fname)
            if f is None:
                raise BadAggregation(f"unknown field {fname!r}")
            if f.ftype not in _AGG_FTYPES[agg]:
                raise BadAggregation(
                    f"{agg!r} does not apply to {f.ftype} field {fname!r}"
                )
            expr = filters_mod.validate_filter(
                filter_expr or filters_mod.EMPTY_FILTER, schema
            )
            matching = [
                r for r in instance.data.get(schemaid, ()) if filters_mod.matches(expr, r.values)
            ]
            if agg == "count":
                return len(matching)
            values = [r.values[fname] for r in matching if r.values[fname] is not None]
            if agg == "sum":
                if not values:
                    return 0.0 if f.ftype == "float" else 0
                return sum(values)
            if not values:
                return None
            if agg == "avg":
                return sum(values) / len(values)
            return min(values) if agg == "min" else max(values)
