"""Read-only SQLite3 file-format parser.

Enough of the format to list tables and pull every row out of table
b-trees: header, schema table, interior/leaf table pages, record decoding
and overflow chains. No SQL engine is involved.
"""

from __future__ import annotations

import logging
import re
import struct
from dataclasses import dataclass, field

logger = logging.getLogger(__name__)

MAGIC = b"SQLite format 3\x00"
HEADER_SIZE = 100

PAGE_INTERIOR_INDEX = 0x02
PAGE_INTERIOR_TABLE = 0x05
PAGE_LEAF_INDEX = 0x0A
PAGE_LEAF_TABLE = 0x0D

ENCODINGS = {1: "utf-8", 2: "utf-16-le", 3: "utf-16-be"}
ENCODING_NAMES = {"utf-8": "utf8", "utf-16-le": "utf16le", "utf-16-be": "utf16be"}


class SQLiteError(ValueError):
    pass


def read_varint(buf: bytes, pos: int) -> tuple[int, int]:
    """Decode a big-endian varint at ``pos``; returns (value, new position)."""
    value = 0
    for i in range(8):
        if pos + i >= len(buf):
            raise SQLiteError("varint runs past end of buffer")
        b = buf[pos + i]
        value = (value << 7) | (b & 0x7F)
        if not b & 0x80:
            return value, pos + i + 1
    if pos + 8 >= len(buf):
        raise SQLiteError("varint runs past end of buffer")
    value = (value << 8) | buf[pos + 8]
    if value & (1 << 63):
        value -= 1 << 64
    return value, pos + 9


def serial_type_size(serial_type: int) -> int:
    if serial_type < 12:
        return (0, 1, 2, 3, 4, 6, 8, 8, 0, 0, 0, 0)[serial_type]
    return (serial_type - 12) // 2 if serial_type % 2 == 0 else (serial_type - 13) // 2


def decode_record(payload: bytes, encoding: str = "utf-8") -> list:
    """Turn a record payload into Python values (None/int/float/str/bytes)."""
    header_size, pos = read_varint(payload, 0)
    if header_size > len(payload):
        raise SQLiteError("record header larger than payload")
    types = []
    while pos < header_size:
        st, pos = read_varint(payload, pos)
        types.append(st)
    values = []
    body = header_size
    for st in types:
        n = serial_type_size(st)
        if body + n > len(payload):
            raise SQLiteError("record body overruns payload")
        raw = payload[body : body + n]
        body += n
        if st == 0:
            values.append(None)
        elif 1 <= st <= 6:
            values.append(int.from_bytes(raw, "big", signed=True))
        elif st == 7:
            values.append(struct.unpack(">d", raw)[0])
        elif st == 8:
            values.append(0)
        elif st == 9:
            values.append(1)
        elif st in (10, 11):
            raise SQLiteError(f"reserved serial type {st}")
        elif st % 2 == 0:
            values.append(bytes(raw))
        else:
            values.append(raw.decode(encoding, errors="replace"))
    return values


@dataclass(frozen=True)
class TableSchema:
    name: str
    root_page: int
    columns: tuple[str, ...]
    sql: str = field(default="", repr=False)
    rowid_alias: int | None = None
    without_rowid: bool = False
    types: tuple[str, ...] = ()


_CONSTRAINT_START = re.compile(r"^(constraint|primary\s+key|unique|check|foreign\s+key)\b", re.I)
_COLUMN_CONSTRAINT_WORDS = {
    "constraint", "primary", "not", "null", "unique", "check", "default",
    "collate", "references", "generated", "as",
}
_TABLE_PK = re.compile(r"^(?:constraint\s+\S+\s+)?primary\s+key\s*\((.*)\)", re.I | re.S)


def _split_top_level(body: str) -> list[str]:
    parts, depth, quote, start = [], 0, None, 0
    for i, ch in enumerate(body):
        if quote:
            if ch == quote:
                quote = None
        elif ch in "'\"`":
            quote = ch
        elif ch == "[":
            quote = "]"
        elif ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        elif ch == "," and depth == 0:
            parts.append(body[start:i].strip())
            start = i + 1
    parts.append(body[start:].strip())
    return [p for p in parts if p]


def _take_identifier(text: str) -> tuple[str, str]:
    text = text.lstrip()
    if not text:
        return "", ""
    closer = {'"': '"', "`": "`", "[": "]", "'": "'"}.get(text[0])
    if closer:
        end = text.find(closer, 1)
        while closer != "]" and end + 1 < len(text) and end >= 0 and text[end + 1] == closer:
            end = text.find(closer, end + 2)
        if end < 0:
            return text[1:], ""
        name = text[1:end]
        if closer != "]":
            name = name.replace(closer * 2, closer)
        return name, text[end + 1 :]
    m = re.match(r"[^\s(,]+", text)
    return m.group(0), text[m.end() :]


def affinity(declared_type: str) -> str:
    """Column affinity from the declared type, by SQLite's substring rules."""
    t = declared_type.upper()
    if "INT" in t:
        return "INTEGER"
    if "CHAR" in t or "CLOB" in t or "TEXT" in t:
        return "TEXT"
    if not t or "BLOB" in t:
        return "BLOB"
    if "REAL" in t or "FLOA" in t or "DOUB" in t:
        return "REAL"
    return "NUMERIC"


def parse_create_table(sql: str) -> tuple[list[str], int | None, bool, list[str]]:
    """Column names, rowid-alias column index, WITHOUT ROWID flag, declared types."""
    open_at = sql.find("(")
    close_at = sql.rfind(")")
    if open_at < 0 or close_at < open_at:
        return [], None, False, []
    trailer = sql[close_at + 1 :]
    without_rowid = bool(re.search(r"without\s+rowid", trailer, re.I))
    columns: list[str] = []
    types: list[str] = []
    alias = None
    table_pk: list[str] | None = None
    for item in _split_top_level(sql[open_at + 1 : close_at]):
        if _CONSTRAINT_START.match(item):
            m = _TABLE_PK.match(item)
            if m:
                table_pk = [_take_identifier(c.strip())[0] for c in _split_top_level(m.group(1))]
            continue
        name, rest = _take_identifier(item)
        columns.append(name)
        decl = []
        for token in re.findall(r"\w+|\S", rest):
            if token == "(" or token.lower() in _COLUMN_CONSTRAINT_WORDS:
                break
            decl.append(token.upper())
        types.append(" ".join(decl))
        if types[-1] == "INTEGER" and re.search(r"\bprimary\s+key\b(?!\s+desc)", rest, re.I):
            alias = len(columns) - 1
    if alias is None and table_pk is not None and len(table_pk) == 1:
        pk = table_pk[0].split()[0] if table_pk[0] else ""
        for i, col in enumerate(columns):
            if col.lower() == pk.lower() and types[i] == "INTEGER":
                alias = i
    if without_rowid:
        alias = None
    return columns, alias, without_rowid, types


class DbFile:
    """A parsed database. Immutable after construction."""

    def __init__(self, data: bytes):
        self._data = bytes(data)
        self.warnings: list[str] = []
        if len(self._data) < HEADER_SIZE:
            raise SQLiteError("not a SQLite database (shorter than the 100-byte header)")
        if self._data[:16] != MAGIC:
            raise SQLiteError("not a SQLite database")
        raw_page_size = struct.unpack_from(">H", self._data, 16)[0]
        self.page_size = 65536 if raw_page_size == 1 else raw_page_size
        if self.page_size < 512 or self.page_size & (self.page_size - 1):
            raise SQLiteError(f"invalid page size {raw_page_size}")
        reserved = self._data[20]
        self.usable_size = self.page_size - reserved
        enc_code = struct.unpack_from(">I", self._data, 56)[0]
        if enc_code == 0:
            enc_code = 1
        if enc_code not in ENCODINGS:
            raise SQLiteError(f"unsupported text encoding code {enc_code}")
        self._encoding = ENCODINGS[enc_code]
        self.text_encoding = ENCODING_NAMES[self._encoding]

        header_pages = struct.unpack_from(">I", self._data, 28)[0]
        change_counter, valid_for = struct.unpack_from(">I", self._data, 24)[0], struct.unpack_from(">I", self._data, 92)[0]
        file_pages = len(self._data) // self.page_size
        if header_pages and change_counter == valid_for:
            self.page_count = header_pages
        else:
            self.page_count = file_pages
        if self.page_count * self.page_size != len(self._data):
            self._warn(
                f"page_size x page_count = {self.page_count * self.page_size} but file is {len(self._data)} bytes"
            )
        self.schema = self._load_schema()

    def _warn(self, msg: str):
        logger.warning(msg)
        self.warnings.append(msg)

    @property
    def data(self) -> bytes:
        return self._data

    def page(self, number: int) -> bytes:
        if number < 1 or number > self.page_count:
            raise SQLiteError(f"page {number} out of range 1..{self.page_count}")
        start = (number - 1) * self.page_size
        page = self._data[start : start + self.page_size]
        if len(page) < self.page_size:
            raise SQLiteError(f"page {number} truncated")
        return page

    def _load_schema(self) -> list[TableSchema]:
        tables = []
        for _rowid, row in self._rows(1):
            row = row + [None] * (5 - len(row))
            kind, name, _tbl, root, sql = row[:5]
            if kind != "table" or not isinstance(name, str):
                continue
            columns, alias, without_rowid, types = parse_create_table(sql or "")
            tables.append(
                TableSchema(
                    name=name,
                    root_page=root if isinstance(root, int) else 0,
                    columns=tuple(columns),
                    sql=sql or "",
                    rowid_alias=alias,
                    without_rowid=without_rowid,
                    types=tuple(types),
                )
            )
        return tables

    def _payload(self, page: bytes, pos: int, size: int) -> bytes:
        usable = self.usable_size
        max_local = usable - 35
        if size <= max_local:
            if pos + size > usable:
                raise SQLiteError("cell payload overruns page")
            return page[pos : pos + size]
        min_local = (usable - 12) * 32 // 255 - 23
        local = min_local + (size - min_local) % (usable - 4)
        if local > max_local:
            local = min_local
        if pos + local + 4 > usable:
            raise SQLiteError("cell payload overruns page")
        parts = [page[pos : pos + local]]
        remaining = size - local
        next_page = struct.unpack_from(">I", page, pos + local)[0]
        seen = set()
        while remaining > 0:
            if next_page == 0 or next_page in seen:
                raise SQLiteError("overflow chain ends early or loops")
            seen.add(next_page)
            ovf = self.page(next_page)
            take = min(remaining, usable - 4)
            parts.append(ovf[4 : 4 + take])
            remaining -= take
            next_page = struct.unpack_from(">I", ovf, 0)[0]
        return b"".join(parts)

    def _rows(self, root: int):
        """(rowid, values) pairs of a table b-tree, sorted by rowid."""
        seen: set[int] = set()
        stack = [root]
        out = []
        while stack:
            number = stack.pop()
            if number in seen:
                self._warn(f"b-tree loop at page {number}, skipped")
                continue
            seen.add(number)
            try:
                page = self.page(number)
            except SQLiteError as exc:
                self._warn(f"skipping page {number}: {exc}")
                continue
            hdr = HEADER_SIZE if number == 1 else 0
            kind = page[hdr]
            if kind not in (PAGE_INTERIOR_TABLE, PAGE_LEAF_TABLE):
                self._warn(f"page {number} has type 0x{kind:02x}, not a table page; skipped")
                continue
            n_cells = struct.unpack_from(">H", page, hdr + 3)[0]
            header_len = 12 if kind == PAGE_INTERIOR_TABLE else 8
            pointers = [
                struct.unpack_from(">H", page, hdr + header_len + 2 * i)[0] for i in range(n_cells)
            ]
            if kind == PAGE_INTERIOR_TABLE:
                children = []
                for ptr in pointers:
                    if ptr + 4 > len(page):
                        self._warn(f"page {number}: cell pointer {ptr} out of page")
                        continue
                    children.append(struct.unpack_from(">I", page, ptr)[0])
                children.append(struct.unpack_from(">I", page, hdr + 8)[0])
                stack.extend(reversed(children))
                continue
            for ptr in pointers:
                try:
                    size, pos = read_varint(page, ptr)
                    rowid, pos = read_varint(page, pos)
                    payload = self._payload(page, pos, size)
                    out.append((rowid, decode_record(payload, self._encoding)))
                except (SQLiteError, struct.error, IndexError) as exc:
                    self._warn(f"page {number}: skipping cell at {ptr}: {exc}")
        out.sort(key=lambda r: r[0])
        return out

    def __repr__(self):
        return f"DbFile(page_size={self.page_size}, page_count={self.page_count}, tables={[t.name for t in self.schema]})"


def open_db(data: bytes) -> DbFile:
    return DbFile(data)


def find_table(db: DbFile, table: str) -> TableSchema | None:
    wanted = table.lower()
    for schema in db.schema:
        if schema.name.lower() == wanted:
            return schema
    return None


def table_exists(db: DbFile, table: str) -> bool:
    return find_table(db, table) is not None


def read_table(db: DbFile, table: str) -> list[tuple[int, list]]:
    """All rows of ``table`` as ``(rowid, values)`` in rowid order.

    Rows shorter than the schema (columns added later with ALTER TABLE) are
    padded with None; an INTEGER PRIMARY KEY column reports the rowid.
    """
    schema = find_table(db, table)
    if schema is None:
        raise KeyError(f"no such table: {table}")
    if schema.without_rowid:
        raise SQLiteError(f"{schema.name} is a WITHOUT ROWID table (index b-tree), not supported")
    if schema.root_page < 1:
        return []
    width = len(schema.columns)
    # REAL columns may hold integral values in integer form on disk
    real = [i for i, t in enumerate(schema.types) if affinity(t) == "REAL"]
    rows = []
    for rowid, values in db._rows(schema.root_page):
        if width and len(values) < width:
            values = values + [None] * (width - len(values))
        if schema.rowid_alias is not None and values[schema.rowid_alias] is None:
            values[schema.rowid_alias] = rowid
        for i in real:
            if isinstance(values[i], int):
                values[i] = float(values[i])
        rows.append((rowid, values))
    return rows
