#!/usr/bin/env python3
"""Standalone fuzz harness for the metadata-table parser.

Mutates the bundled fixture (byte flips, inserts, deletions, line shuffles,
marker swaps, truncation, random unicode, raw noise) and asserts the parser
only ever returns a document or a positioned error, never anything else.

Usage: python scripts/fuzz_parser.py [--iterations N] [--seed S]
"""

from __future__ import annotations

import argparse
import random
import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from retadms.errors import ParseError
from retadms.reta import parse_metadata_table, validate_reta
from retadms.tabular import read_csv_bytes

FIXTURE = Path(__file__).resolve().parent.parent / "fixtures" / "vehicle_management.reta.csv"


def mutate(rng: random.Random, seed_bytes: bytes) -> bytes:
    data = bytearray(seed_bytes)
    kind = rng.randrange(8)
    if kind == 0 and data:
        for _ in range(rng.randrange(1, 6)):
            data[rng.randrange(len(data))] = rng.randrange(256)
    elif kind == 1 and data:
        pos = rng.randrange(len(data))
        data[pos:pos] = bytes(rng.randrange(256) for _ in range(rng.randrange(1, 8)))
    elif kind == 2 and len(data) > 4:
        start = rng.randrange(len(data) - 2)
        del data[start : start + rng.randrange(1, len(data) - start)]
    elif kind == 3:
        lines = bytes(data).split(b"\n")
        rng.shuffle(lines)
        data = bytearray(b"\n".join(lines))
    elif kind == 4:
        data[0:1] = rng.choice([b"T", b"G", b"U", b"S", b"FI", b"+", b"Q", b"t"])
    elif kind == 5 and data:
        data = data[: rng.randrange(len(data))]
    elif kind == 6:
        data += ("\n" + "".join(chr(rng.randrange(32, 0x2500)) for _ in range(12))).encode("utf-8")
    else:
        data = bytearray(rng.randbytes(rng.randrange(0, 200)))
    return bytes(data)


def main() -> int:
    parser = argparse.ArgumentParser()
    parser.add_argument("--iterations", type=int, default=100_000)
    parser.add_argument("--seed", type=int, default=1234)
    args = parser.parse_args()

    seed_bytes = FIXTURE.read_bytes()
    rng = random.Random(args.seed)
    parsed = rejected = crashed = 0
    slowest = 0.0
    started = time.perf_counter()
    for i in range(args.iterations):
        blob = mutate(rng, seed_bytes)
        t0 = time.perf_counter()
        try:
            reta = parse_metadata_table(read_csv_bytes(blob))
            if i % 8 == 0:
                validate_reta(reta)
            parsed += 1
        except ParseError:
            rejected += 1
        except Exception as exc:  # noqa: BLE001 - counting escapes is the point
            crashed += 1
            print(f"CRASH on input {i}: {type(exc).__name__}: {exc}", file=sys.stderr)
        slowest = max(slowest, time.perf_counter() - t0)
    elapsed = time.perf_counter() - started
    print(
        f"{args.iterations} inputs in {elapsed:.1f} s: "
        f"{parsed} parsed, {rejected} rejected, {crashed} crashed, "
        f"slowest {slowest * 1000:.1f} ms"
    )
    return 1 if crashed else 0


if __name__ == "__main__":
    raise SystemExit(main())
