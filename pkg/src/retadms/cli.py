"""Operator command line: serve the HTTP API or drive the whole pipeline
offline against a local data directory.

Exit codes: 0 success, 1 domain error (bad document, unknown tenant, ...),
2 usage or I/O error.
"""

from __future__ import annotations

import argparse
import socket
import sys
from pathlib import Path

from .config import load_config
from .errors import ParseError, RetaError
from .reta import (
    instantiate,
    parse_data_exchange_table,
    parse_metadata_table,
    serialize_data_exchange_table,
    validate_reta,
)
from .store import DataStore
from .tabular import read_document_file, write_csv_bytes

EXIT_OK = 0
EXIT_DOMAIN = 1
EXIT_USAGE = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="retadms",
        description="Generate and operate data-management systems from requirement tables.",
    )
    parser.add_argument("--data-dir", help="data directory (default ./data or RETA_DATA_DIR)")
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument("--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--listen", help="host:port (default 127.0.0.1:8000 or RETA_LISTEN)")

    p = sub.add_parser("validate", help="parse and verify a metadata table")
    p.add_argument("file")

    p = sub.add_parser("instantiate", help="materialize a system from a metadata table")
    p.add_argument("file")
    p.add_argument("--mode", choices=("create", "replace"), default="create")

    p = sub.add_parser("import", help="load a data exchange table into a schema")
    p.add_argument("file")
    p.add_argument("--tenant", required=True)
    p.add_argument("--schema", required=True)
    p.add_argument("--partial", action="store_true",
                   help="keep clean rows instead of rejecting the whole file")

    p = sub.add_parser("export", help="write a schema's records as CSV")
    p.add_argument("--tenant", required=True)
    p.add_argument("--schema", required=True)
    p.add_argument("--out", default="-", help="output path, - for stdout")
    p.add_argument("--format", choices=("csv",), default="csv")

    p = sub.add_parser("admin", help="platform administration")
    admin_sub = p.add_subparsers(dest="admin_command", required=True)
    admin_sub.add_parser("list", help="list tenants")
    pd = admin_sub.add_parser("delete", help="delete a tenant and all its data")
    pd.add_argument("tenant")
    return parser


def _config(args) -> "ServiceConfig":
    overrides = {"data_dir": args.data_dir, "listen": getattr(args, "listen", None)}
    return load_config(config_file=args.config, overrides=overrides)


def _read_document(path: str):
    if not Path(path).is_file():
        print(f"error: no such file: {path}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)
    return read_document_file(path)


def cmd_validate(args) -> int:
    try:
        reta = parse_metadata_table(_read_document(args.file))
    except ParseError as exc:
        print(f"{args.file}:{exc.row}:{exc.col}: parse error: {exc.message}")
        return EXIT_DOMAIN
    report = validate_reta(reta)
    if report.ok:
        print(
            f"ok: tenant {reta.tenant.id.text!r}, {len(reta.groups)} groups, "
            f"{len(reta.users)} users, {len(reta.schemas)} schemas"
        )
        return EXIT_OK
    for d in sorted(report.diagnostics, key=lambda d: d.sort_key()):
        print(f"{args.file}:{d.row}:{d.col}: [{d.rule}] {d.message}")
    return EXIT_DOMAIN


def cmd_instantiate(args) -> int:
    config = _config(args)
    store = DataStore(config.data_dir)
    try:
        reta = parse_metadata_table(_read_document(args.file))
        with store.lock(reta.tenant.id.text):
            instance = instantiate(reta, store, args.mode)
    except ParseError as exc:
        print(f"{args.file}:{exc.row}:{exc.col}: parse error: {exc.message}")
        return EXIT_DOMAIN
    except RetaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    print(
        f"{args.mode}: tenant {instance.tenant.id!r} with "
        f"{len(instance.groups)} groups, {len(instance.users)} users, "
        f"{len(instance.schemas)} schemas"
    )
    return EXIT_OK


def cmd_import(args) -> int:
    config = _config(args)
    store = DataStore(config.data_dir)
    atomic = not args.partial
    try:
        system = store.get_system(args.tenant)
        schema = system.get_schema(args.schema)
        if schema is None:
            print(f"error: no such schema: {args.schema!r}", file=sys.stderr)
            return EXIT_DOMAIN
        doc = _read_document(args.file)
        result = parse_data_exchange_table(doc, schema, atomic=atomic)
        ids, rejected = store.insert_many(
            args.tenant,
            args.schema,
            [r.values for r in result.records],
            atomic=atomic,
            row_numbers=result.row_numbers,
        )
    except RetaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    print(f"imported {len(ids)} records into {args.tenant}/{args.schema}")
    for d in sorted(result.rejected + rejected, key=lambda d: d.sort_key()):
        print(f"rejected row {d.row}: [{d.rule}] {d.message}")
    return EXIT_OK


def cmd_export(args) -> int:
    config = _config(args)
    store = DataStore(config.data_dir)
    try:
        system = store.get_system(args.tenant)
        schema = system.get_schema(args.schema)
        if schema is None:
            print(f"error: no such schema: {args.schema!r}", file=sys.stderr)
            return EXIT_DOMAIN
        records, _ = store.query(args.tenant, args.schema)
        data = write_csv_bytes(serialize_data_exchange_table(records, schema))
    except RetaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    if args.out == "-":
        sys.stdout.buffer.write(data)
    else:
        with open(args.out, "wb") as fh:
            fh.write(data)
        print(f"exported {len(records)} records to {args.out}")
    return EXIT_OK


def cmd_admin(args) -> int:
    config = _config(args)
    store = DataStore(config.data_dir)
    if args.admin_command == "list":
        for tenant_id in store.tenant_ids():
            instance = store.get_system(tenant_id)
            records = sum(len(rs) for rs in instance.data.values())
            print(
                f"{tenant_id}\t{instance.tenant.system_name}\t"
                f"{len(instance.schemas)} schemas\t{records} records"
            )
        return EXIT_OK
    try:
        store.delete_system(args.tenant)
    except RetaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    print(f"deleted tenant {args.tenant!r}")
    return EXIT_OK


def cmd_serve(args) -> int:
    import signal

    import uvicorn

    from .service import create_app

    config = _config(args)
    sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
    try:
        sock.bind((config.host, config.port))
        sock.listen(128)
    except OSError as exc:
        print(f"error: cannot bind {config.listen}: {exc}", file=sys.stderr)
        sock.close()
        return EXIT_DOMAIN
    bound = sock.getsockname()
    print(f"serving on {bound[0]}:{bound[1]} (data dir: {config.data_dir})", flush=True)
    app = create_app(config)
    server = uvicorn.Server(
        uvicorn.Config(
            app,
            log_level="info" if args.verbose else "warning",
            access_log=bool(args.verbose),
        )
    )
    # uvicorn shuts down gracefully on SIGTERM/SIGINT, then restores the
    # previous handlers and re-raises the signal; these absorb the re-raise
    # so an orderly shutdown exits 0
    signal.signal(signal.SIGTERM, lambda signum, frame: None)
    signal.signal(signal.SIGINT, lambda signum, frame: None)
    server.run(sockets=[sock])
    return EXIT_OK


_COMMANDS = {
    "serve": cmd_serve,
    "validate": cmd_validate,
    "instantiate": cmd_instantiate,
    "import": cmd_import,
    "export": cmd_export,
    "admin": cmd_admin,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return _COMMANDS[args.command](args)


def entrypoint():
    raise SystemExit(main())


if __name__ == "__main__":
    entrypoint()
