"""Platform fingerprinting and categorized extraction of a FAT volume."""

from __future__ import annotations

import json
import logging
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path

from .artifacts import (
    CATEGORIES,
    CATEGORY_DIRS,
    FileArtifact,
    allocate_path,
    sha256_bytes,
    sort_key,
    write_manifest,
    write_new_file,
)
from .fat import DirRecord, FatVolume, read_file_content, walk_directory_tree

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PlatformGuess:
    platform: str  # BlackBerry | Android | Unknown
    confidence: str  # strong | weak
    evidence: tuple[str, ...] = ()


def _top_dir(name: str):
    def match(rec: DirRecord) -> bool:
        path = rec.path.lower()
        return path == f"/{name}" or path.startswith(f"/{name}/")
    return match


_WA_STORE = re.compile(r"^messagestore\.db(\..*)?$", re.I)
_WA_CRYPT = re.compile(r"^msgstore.*\.db\.crypt\d*$", re.I)

BLACKBERRY_PATTERNS = {
    "/BlackBerry/": _top_dir("blackberry"),
    "key.dat": lambda r: r.name.lower() == "key.dat",
    "WhatsApp/**/messagestore.db": lambda r: "whatsapp" in r.path.lower() and bool(_WA_STORE.match(r.name)),
}
ANDROID_PATTERNS = {
    "/Android/": _top_dir("android"),
    "WhatsApp/Databases/msgstore.db.crypt*": (
        lambda r: "whatsapp/databases/" in r.path.lower() and bool(_WA_CRYPT.match(r.name))
    ),
}


def detect_platform(records: list[DirRecord]) -> PlatformGuess:
    def matched(patterns):
        return [label for label, test in patterns.items() if any(test(r) for r in records)]

    bb, android = matched(BLACKBERRY_PATTERNS), matched(ANDROID_PATTERNS)
    if len(bb) > len(android):
        return PlatformGuess("BlackBerry", "strong" if len(bb) >= 2 else "weak", tuple(bb))
    if len(android) > len(bb):
        return PlatformGuess("Android", "strong" if len(android) >= 2 else "weak", tuple(android))
    return PlatformGuess("Unknown", "weak", tuple(bb + android))


# -- categorization ------------------------------------------------------------

@dataclass(frozen=True)
class CategoryTable:
    names: dict
    magic: tuple  # (offset, bytes, category, extensions or None)
    extensions: dict  # extension -> category


def load_category_table(path=None) -> CategoryTable:
    if path is None:
        raw = json.loads(resources.files("memcard").joinpath("data/categories.json").read_text(encoding="utf-8"))
    else:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    magic = []
    for rule in raw.get("magic", []):
        exts = rule.get("extensions")
        magic.append((int(rule.get("offset", 0)), bytes.fromhex(rule["hex"]), rule["category"],
                      frozenset(e.lower() for e in exts) if exts else None))
    extensions = {}
    for category, exts in raw.get("extensions", {}).items():
        for ext in exts:
            extensions[ext.lower()] = category
    names = {k.lower(): v for k, v in raw.get("names", {}).items()}
    for category in [*names.values(), *extensions.values(), *(m[2] for m in magic)]:
        if category not in CATEGORIES:
            raise ValueError(f"category table names unknown category {category!r}")
    return CategoryTable(names, tuple(magic), extensions)


@lru_cache(maxsize=1)
def default_category_table() -> CategoryTable:
    return load_category_table()


def categorize(record_name: str, magic: bytes, table: CategoryTable | None = None) -> str:
    """Category from exact special names, then magic bytes, then extension."""
    table = table or default_category_table()
    name = record_name.rsplit("/", 1)[-1].lower()
    if name in table.names:
        return table.names[name]
    ext = name.rsplit(".", 1)[-1] if "." in name else ""
    for offset, pattern, category, exts in table.magic:
        if magic[offset : offset + len(pattern)] == pattern and (exts is None or ext in exts):
            return category
    return table.extensions.get(ext, "other")


# -- extraction ----------------------------------------------------------------

def _ensure_empty(out_dir: Path):
    if out_dir.exists():
        if not out_dir.is_dir():
            raise NotADirectoryError(out_dir)
        if any(out_dir.iterdir()):
            raise FileExistsError(f"output directory {out_dir} is not empty")
    out_dir.mkdir(parents=True, exist_ok=True)


def extract_records(vol: FatVolume, records: list[DirRecord], out_dir, *, source_prefix: str = "",
                    workers: int = 4, table: CategoryTable | None = None,
                    taken: set[str] | None = None) -> list[FileArtifact]:
    """Write file records into category folders under ``out_dir``.

    Content is read in parallel, but output names are allocated in
    source-path order so collision suffixes are reproducible.
    """
    out_dir = Path(out_dir)
    taken = set() if taken is None else taken
    files = sorted((r for r in records if not r.is_directory), key=lambda r: r.path)
    artifacts = []
    batch = max(1, workers) * 4
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        for i in range(0, len(files), batch):
            chunk = files[i : i + batch]
            for rec, data in zip(chunk, pool.map(lambda r: read_file_content(vol, r), chunk)):
                category = categorize(rec.name, data[:16], table)
                folder = CATEGORY_DIRS[category]
                if rec.deleted:
                    folder = f"recovered/{folder}"
                rel = allocate_path(out_dir, folder, rec.name, taken)
                write_new_file(out_dir / rel, data)
                artifacts.append(
                    FileArtifact(
                        source_path=source_prefix + rec.path,
                        category=category,
                        content_hash=sha256_bytes(data),
                        size=len(data),
                        origin="recovered_deleted" if rec.deleted else "allocated",
                        output_path=rel,
                    )
                )
    return sorted(artifacts, key=sort_key)


def extract_all(vol: FatVolume, out_dir, include_deleted: bool = True, *, workers: int = 4,
                table: CategoryTable | None = None) -> list[FileArtifact]:
    out_dir = Path(out_dir)
    _ensure_empty(out_dir)
    records = walk_directory_tree(vol, include_deleted=include_deleted)
    artifacts = extract_records(vol, records, out_dir, workers=workers, table=table)
    write_manifest(out_dir, artifacts)
    return artifacts
