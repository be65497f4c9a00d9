"""Merge the current WhatsApp message store with its backups.

Messages are keyed by ``(key_remote_jid, timestamp_ms)``. Stores are folded
oldest first; every time a key is seen again its ``source_db`` moves to the
later store, so a message whose final ``source_db`` is not the current store
no longer exists there and is flagged deleted.
"""

from __future__ import annotations

import logging
import re
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

from .sqlite import DbFile, find_table, read_table

logger = logging.getLogger(__name__)

KINDS = ("current", "backup", "carved")
CURRENT_NAME = "messagestore.db"
CONFLICT = "content conflict"
INDETERMINATE = "indeterminate (no current database)"
MS_THRESHOLD = 10**12
REQUIRED_COLUMNS = ("key_remote_jid", "key_from_me", "data", "timestamp")

# the leading "m" of a deleted backup reads back as "_" from the directory entry
_BACKUP = re.compile(r"^[m_]essagestore\.db\.([^.]+)\.([^.]+)\.bak$", re.I)


class StoreFormatError(ValueError):
    pass


@dataclass(frozen=True)
class DbProvenance:
    filename: str
    kind: str
    backup_epoch_ms: int | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown store kind {self.kind!r}")
        if (self.kind == "backup") != (self.backup_epoch_ms is not None):
            raise ValueError("backup_epoch_ms is set exactly for backups")


def _base_name(filename: str) -> str:
    name = filename.replace("\\", "/").rsplit("/", 1)[-1]
    return name[:-4] if name.lower().endswith("_dec") else name


def classify_store_file(filename: str) -> DbProvenance | None:
    name = _base_name(filename)
    if name.lower() == CURRENT_NAME:
        return DbProvenance(filename, "current")
    m = _BACKUP.match(name)
    if m is None:
        return None
    tag, digits = m.groups()
    if not digits.isdigit():
        logger.warning("backup %s: epoch field %r is not numeric, excluded", filename, digits)
        return None
    return DbProvenance(filename, "backup", int(digits))


@dataclass(frozen=True)
class WaMessage:
    key_remote_jid: str
    key_from_me: int  # 0 incoming, 1 outgoing
    data: str | None
    timestamp_ms: int
    media_name: str | None = None
    media_thumb: bytes | None = field(default=None, repr=False)
    source_db: str = ""
    deleted: bool | None = None
    annotations: tuple[str, ...] = ()

    @property
    def key(self) -> tuple[str, int]:
        return self.key_remote_jid, self.timestamp_ms

    @property
    def direction(self) -> str:
        return "outgoing" if self.key_from_me else "incoming"


@dataclass(frozen=True)
class StoreEntry:
    provenance: DbProvenance
    messages: tuple[WaMessage, ...] = ()


@dataclass
class MessageStoreSet:
    current: StoreEntry | None = None
    backups: list[StoreEntry] = field(default_factory=list)
    carved: list[StoreEntry] = field(default_factory=list)

    def add(self, provenance: DbProvenance, messages=()) -> None:
        entry = StoreEntry(provenance, tuple(messages))
        if provenance.kind == "current":
            if self.current is not None:
                logger.warning("second current store %s ignored (keeping %s)",
                               provenance.filename, self.current.provenance.filename)
                return
            self.current = entry
        elif provenance.kind == "backup":
            self.backups.append(entry)
            # equal epochs fall back to the filename so the order is total
            self.backups.sort(key=lambda e: (e.provenance.backup_epoch_ms, e.provenance.filename))
        else:
            self.carved.append(entry)
            self.carved.sort(key=lambda e: e.provenance.filename)

    def ordered(self) -> list[StoreEntry]:
        """Fold order: carved (age unknown), backups by epoch, then current."""
        return [*self.carved, *self.backups, *([self.current] if self.current else [])]

    @property
    def inventory(self) -> list[DbProvenance]:
        return [e.provenance for e in self.ordered()]


def classify_store_files(filenames) -> MessageStoreSet:
    out = MessageStoreSet()
    for name in filenames:
        prov = classify_store_file(name)
        if prov is None:
            logger.info("%s is not a message store name, ignored", name)
            continue
        out.add(prov)
    return out


def _text(value):
    if value is None or isinstance(value, str):
        return value
    if isinstance(value, bytes):
        return value.decode("utf-8", errors="replace")
    return str(value)


def extract_messages(db: DbFile, provenance: DbProvenance) -> list[WaMessage]:
    schema = find_table(db, "messages")
    if schema is None:
        raise StoreFormatError(f"{provenance.filename}: no messages table")
    lower = [c.lower() for c in schema.columns]
    for col in REQUIRED_COLUMNS:
        if col not in lower:
            raise StoreFormatError(f"{provenance.filename}: messages table lacks column {col}")
    idx = {c: lower.index(c) for c in lower}
    media_col = idx.get("media_name")
    thumb_cols = [idx[c] for c in ("thumb_image", "raw_data") if c in idx]

    out = []
    scaled = skipped = 0
    for _rowid, row in read_table(db, schema.name):
        jid, ts = row[idx["key_remote_jid"]], row[idx["timestamp"]]
        if not isinstance(jid, str) or "@" not in jid or not isinstance(ts, int) or ts < 0:
            skipped += 1
            continue
        if ts < MS_THRESHOLD:
            ts *= 1000
            scaled += 1
        thumb = next((row[i] for i in thumb_cols if isinstance(row[i], bytes) and row[i]), None)
        out.append(
            WaMessage(
                key_remote_jid=jid,
                key_from_me=1 if row[idx["key_from_me"]] else 0,
                data=_text(row[idx["data"]]),
                timestamp_ms=ts,
                media_name=_text(row[media_col]) if media_col is not None else None,
                media_thumb=thumb,
                source_db=provenance.filename,
            )
        )
    logger.info("%s: %d messages; timestamp rule: >= 1e12 taken as ms, %d second values scaled x1000",
                provenance.filename, len(out), scaled)
    if skipped:
        logger.warning("%s: %d rows without a chat jid or timestamp skipped", provenance.filename, skipped)
    return out


def extract_stores(items, workers: int = 4) -> MessageStoreSet:
    """Extract ``(DbFile, DbProvenance)`` pairs in parallel into a store set."""
    items = list(items)
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        results = list(pool.map(lambda it: extract_messages(*it), items))
    out = MessageStoreSet()
    for (_db, prov), msgs in zip(items, results):
        out.add(prov, msgs)
    return out


# -- merge ---------------------------------------------------------------------

@dataclass(frozen=True)
class MergedTimeline:
    contacts: tuple[tuple[str, tuple[WaMessage, ...]], ...]
    source_inventory: tuple[DbProvenance, ...]
    current_db: str | None = None

    @property
    def message_count(self) -> int:
        return sum(len(msgs) for _, msgs in self.contacts)

    @property
    def deleted_count(self) -> int:
        return sum(1 for _, msgs in self.contacts for m in msgs if m.deleted)

    def messages(self):
        for _, msgs in self.contacts:
            yield from msgs


def phone_number(jid: str) -> str:
    """Phone number for individual chats; other jids (groups) verbatim."""
    suffix = "@s.whatsapp.net"
    return jid[: -len(suffix)] if jid.endswith(suffix) else jid


def _order(m: WaMessage):
    return m.timestamp_ms, m.key_from_me, m.data or "", m.media_name or ""


def _finish(by_key: dict, stores: MessageStoreSet) -> MergedTimeline:
    current = stores.current.provenance.filename if stores.current else None
    grouped = defaultdict(list)
    for m in by_key.values():
        deleted = None if current is None else m.source_db != current
        grouped[m.key_remote_jid].append(replace(m, deleted=deleted))
    contacts = tuple((jid, tuple(sorted(grouped[jid], key=_order))) for jid in sorted(grouped))
    return MergedTimeline(contacts, tuple(stores.inventory), current)


def merge(stores: MessageStoreSet) -> MergedTimeline:
    by_key: dict[tuple[str, int], WaMessage] = {}
    for entry in stores.ordered():
        name = entry.provenance.filename
        for m in entry.messages:
            prev = by_key.get(m.key)
            conflict = prev is not None and (CONFLICT in prev.annotations or prev.data != m.data)
            by_key[m.key] = replace(m, source_db=name, deleted=None, annotations=(CONFLICT,) if conflict else ())
    return _finish(by_key, stores)


def merge_oracle(stores: MessageStoreSet) -> MergedTimeline:
    """Brute force: the occurrence with the highest (store, row) index wins.

    Deleted flags come from a direct lookup in the current store rather than
    from the provenance comparison used by ``merge``.
    """
    flat = [(i, j, e.provenance.filename, m)
            for i, e in enumerate(stores.ordered()) for j, m in enumerate(e.messages)]
    groups = defaultdict(list)
    for f in flat:
        groups[f[3].key].append(f)
    current_keys = {m.key for m in stores.current.messages} if stores.current else None
    per_contact = defaultdict(list)
    for key, group in groups.items():
        _i, _j, name, m = max(group, key=lambda f: (f[0], f[1]))
        per_contact[key[0]].append(replace(
            m,
            source_db=name,
            deleted=None if current_keys is None else key not in current_keys,
            annotations=(CONFLICT,) if len({f[3].data for f in group}) > 1 else (),
        ))
    contacts = tuple((jid, tuple(sorted(per_contact[jid], key=_order))) for jid in sorted(per_contact))
    current = stores.current.provenance.filename if stores.current else None
    return MergedTimeline(contacts, tuple(stores.inventory), current)
