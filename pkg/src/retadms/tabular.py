"""Spreadsheet I/O: CSV and XLSX in, CSV out, normalized to TabularDocument.

Positions are 1-based (record number, column number).  Trailing empty cells
are trimmed per row; blank rows are kept so row numbering matches the source.

The XLSX reader is deliberately small: first worksheet only, shared strings
and inline strings resolved, booleans rendered as true/false, numbers kept
as stored.  Date cells must be text (``YYYY-MM-DD``); native Excel date
serials are not interpreted.
"""

from __future__ import annotations

import csv
import io
import re
import zipfile
from dataclasses import dataclass, field
from typing import List
from xml.etree import ElementTree

from .errors import ParseError

_XLSX_MAGIC = b"PK\x03\x04"
_SHEET_NS = "{http://schemas.openxmlformats.org/spreadsheetml/2006/main}"
_RELS_NS = "{http://schemas.openxmlformats.org/package/2006/relationships}"
_CELL_REF_RE = re.compile(r"^([A-Z]+)(\d+)$")


@dataclass
class TabularDocument:
    """Rows of cell strings plus the origin they were read from."""

    rows: List[List[str]] = field(default_factory=list)
    origin: str = "<memory>"

    def __post_init__(self):
        self.rows = [_trim_trailing(list(row)) for row in self.rows]


def _trim_trailing(row: List[str]) -> List[str]:
    while row and row[-1] == "":
        row.pop()
    return row


def read_csv_bytes(data: bytes, origin: str = "<memory>") -> TabularDocument:
    try:
        text = data.decode("utf-8-sig")
    except UnicodeDecodeError as exc:
        raise ParseError(f"{origin}: not valid UTF-8 ({exc.reason})") from exc
    return read_csv_text(text, origin)


def read_csv_text(text: str, origin: str = "<memory>") -> TabularDocument:
    try:
        rows = list(csv.reader(io.StringIO(text, newline="")))
    except csv.Error as exc:
        raise ParseError(f"{origin}: malformed CSV ({exc})") from exc
    return TabularDocument(rows=rows, origin=origin)


def write_csv_bytes(doc: TabularDocument) -> bytes:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerows(doc.rows)
    return buf.getvalue().encode("utf-8")


def _column_index(letters: str) -> int:
    index = 0
    for ch in letters:
        index = index * 26 + (ord(ch) - ord("A") + 1)
    return index


def _xlsx_shared_strings(archive: zipfile.ZipFile) -> List[str]:
    if "xl/sharedStrings.xml" not in archive.namelist():
        return []
    root = ElementTree.fromstring(archive.read("xl/sharedStrings.xml"))
    strings = []
    for si in root.findall(f"{_SHEET_NS}si"):
        strings.append("".join(t.text or "" for t in si.iter(f"{_SHEET_NS}t")))
    return strings


def _xlsx_first_sheet_path(archive: zipfile.ZipFile) -> str:
    workbook = ElementTree.fromstring(archive.read("xl/workbook.xml"))
    sheets = workbook.find(f"{_SHEET_NS}sheets")
    if sheets is None or len(sheets) == 0:
        raise ParseError("workbook has no sheets")
    rid = sheets[0].get(
        "{http://schemas.openxmlformats.org/officeDocument/2006/relationships}id"
    )
    rels = ElementTree.fromstring(archive.read("xl/_rels/workbook.xml.rels"))
    for rel in rels.findall(f"{_RELS_NS}Relationship"):
        if rel.get("Id") == rid:
            target = rel.get("Target")
            return target if target.startswith("xl/") else f"xl/{target}"
    raise ParseError("first sheet relationship not found")


def _xlsx_cell_text(cell, shared: List[str]) -> str:
    kind = cell.get("t", "n")
    if kind == "inlineStr":
        is_el = cell.find(f"{_SHEET_NS}is")
        if is_el is None:
            return ""
        return "".join(t.text or "" for t in is_el.iter(f"{_SHEET_NS}t"))
    v = cell.find(f"{_SHEET_NS}v")
    raw = v.text if v is not None and v.text is not None else ""
    if kind == "s":
        try:
            return shared[int(raw)]
        except (ValueError, IndexError):
            raise ParseError(f"bad shared-string reference: {raw!r}") from None
    if kind == "b":
        return "true" if raw.strip() == "1" else "false"
    return raw


def read_xlsx_bytes(data: bytes, origin: str = "<memory>") -> TabularDocument:
    try:
        archive = zipfile.ZipFile(io.BytesIO(data))
        shared = _xlsx_shared_strings(archive)
        sheet_xml = archive.read(_xlsx_first_sheet_path(archive))
        root = ElementTree.fromstring(sheet_xml)
    except ParseError:
        raise
    except (zipfile.BadZipFile, KeyError, ElementTree.ParseError, ValueError) as exc:
        raise ParseError(f"{origin}: not a readable XLSX file ({exc})") from exc

    rows: List[List[str]] = []
    data_el = root.find(f"{_SHEET_NS}sheetData")
    if data_el is None:
        return TabularDocument(rows=[], origin=origin)
    fallback_row = 0
    for row_el in data_el.findall(f"{_SHEET_NS}row"):
        fallback_row += 1
        row_num = int(row_el.get("r", fallback_row))
        while len(rows) < row_num:
            rows.append([])
        cells = rows[row_num - 1]
        fallback_col = 0
        for cell in row_el.findall(f"{_SHEET_NS}c"):
            fallback_col += 1
            ref = cell.get("r")
            if ref:
                match = _CELL_REF_RE.match(ref)
                col_num = _column_index(match.group(1)) if match else fallback_col
            else:
                col_num = fallback_col
            while len(cells) < col_num:
                cells.append("")
            cells[col_num - 1] = _xlsx_cell_text(cell, shared)
            fallback_col = col_num
    return TabularDocument(rows=rows, origin=origin)


def read_document(data: bytes, origin: str = "<memory>") -> TabularDocument:
    """Sniff XLSX (zip magic) vs CSV and parse accordingly."""
    if data[:4] == _XLSX_MAGIC:
        return read_xlsx_bytes(data, origin)
    return read_csv_bytes(data, origin)


def read_document_file(path) -> TabularDocument:
    with open(path, "rb") as fh:
        return read_document(fh.read(), origin=str(path))
