#!/usr/bin/env python3
"""End-to-end offline walkthrough: table in, running system out.

Validates the bundled vehicle-management table, instantiates it into a
scratch data directory, imports the sample records, runs a combined query
and a couple of statistics, and exports the collection back to CSV.

Usage: python scripts/run_demo.py [--data-dir DIR]
"""

from __future__ import annotations

import argparse
import sys
import tempfile
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from retadms.filters import FilterExpr, Predicate
from retadms.reta import (
    instantiate,
    parse_data_exchange_table,
    parse_metadata_table,
    serialize_data_exchange_table,
    validate_reta,
)
from retadms.store import DataStore
from retadms.tabular import read_document_file, write_csv_bytes

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"


def main() -> int:
    parser = argparse.ArgumentParser()
    parser.add_argument("--data-dir", default=None)
    args = parser.parse_args()
    data_dir = args.data_dir or tempfile.mkdtemp(prefix="retadms-demo-")

    print(f"data dir: {data_dir}")
    doc = read_document_file(FIXTURES / "vehicle_management.reta.csv")
    reta = parse_metadata_table(doc)
    report = validate_reta(reta)
    print(f"validate: {'clean' if report.ok else report}")

    store = DataStore(data_dir)
    instance = instantiate(reta, store, "create")
    print(
        f"instantiated tenant {instance.tenant.id!r}: "
        f"{len(instance.groups)} groups, {len(instance.users)} users, "
        f"{len(instance.schemas)} schemas"
    )

    schema = instance.get_schema("vehicle")
    rows = parse_data_exchange_table(
        read_document_file(FIXTURES / "vehicle_records.csv"), schema
    )
    ids, _ = store.insert_many("vms", "vehicle", [r.values for r in rows.records])
    print(f"imported {len(ids)} vehicle records")

    expr = FilterExpr(
        all=(Predicate("year", "ge", 2018),),
        any=(Predicate("model", "eq", "sedan"), Predicate("model", "eq", "van")),
    )
    records, total = store.query("vms", "vehicle", expr, order_by="year")
    print(f"query year>=2018 and model in (sedan, van): {total} match")
    for r in records:
        print(f"  #{r.record_id} {r.values['plate']} {r.values['model']} {r.values['year']}")

    print("count     :", store.statistics("vms", "vehicle", "plate", "count"))
    print("avg year  :", store.statistics("vms", "vehicle", "year", "avg"))
    print("max price :", store.statistics("vms", "vehicle", "price", "max"))

    out = Path(data_dir) / "vehicle_export.csv"
    records, _ = store.query("vms", "vehicle")
    out.write_bytes(write_csv_bytes(serialize_data_exchange_table(records, schema)))
    print(f"exported to {out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
