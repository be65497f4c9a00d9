"""FileArtifact records and the ``manifest.json`` that lists them."""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import asdict, dataclass
from pathlib import Path

CATEGORIES = ("pictures", "video", "audio", "documents", "thumb_dat", "key_dat", "databases", "other")
ORIGINS = ("allocated", "recovered_deleted", "carved")

# output folder per category
CATEGORY_DIRS = {
    "pictures": "pictures",
    "video": "video",
    "audio": "audio",
    "documents": "documents",
    "databases": "databases",
    "thumb_dat": "thumb",
    "key_dat": "key",
    "other": "other",
}

MANIFEST_NAME = "manifest.json"
PARTIAL_MARKER = "manifest.incomplete"


@dataclass(frozen=True)
class FileArtifact:
    source_path: str
    category: str
    content_hash: str
    size: int
    origin: str
    output_path: str  # relative to the output directory, '/' separated

    def __post_init__(self):
        if self.category not in CATEGORIES:
            raise ValueError(f"unknown category {self.category!r}")
        if self.origin not in ORIGINS:
            raise ValueError(f"unknown origin {self.origin!r}")

    def to_dict(self) -> dict:
        return asdict(self)


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def sha256_file(path, block_size: int = 1 << 20) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(block_size), b""):
            h.update(block)
    return h.hexdigest()


def sort_key(artifact: FileArtifact):
    return artifact.source_path, artifact.output_path


def write_new_file(path: Path, data: bytes):
    """Write ``data`` to a path that must not exist yet (evidence is never overwritten)."""
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "xb") as fh:
        fh.write(data)


def allocate_path(out_dir: Path, rel_dir: str, name: str, taken: set[str]) -> str:
    """Pick ``rel_dir/name`` or the first free ``name~N`` variant."""
    safe = name.replace("/", "_").replace("\x00", "_") or "_"
    stem, dot, ext = safe.rpartition(".")
    if not dot or not stem:
        stem, ext = safe, ""
    candidate = f"{rel_dir}/{safe}"
    n = 0
    while candidate.lower() in taken or (out_dir / candidate).exists():
        n += 1
        candidate = f"{rel_dir}/{stem}~{n}.{ext}" if ext else f"{rel_dir}/{stem}~{n}"
    taken.add(candidate.lower())
    return candidate


def manifest_text(artifacts) -> str:
    items = [a.to_dict() for a in sorted(artifacts, key=sort_key)]
    return json.dumps(items, indent=2, ensure_ascii=False) + "\n"


def write_manifest(out_dir, artifacts) -> Path:
    path = Path(out_dir) / MANIFEST_NAME
    tmp = path.with_suffix(".json.tmp")
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(manifest_text(artifacts))
    os.replace(tmp, path)
    return path


def read_manifest(out_dir) -> list[FileArtifact]:
    path = Path(out_dir) / MANIFEST_NAME
    if not path.exists():
        return []
    with open(path, encoding="utf-8") as fh:
        return [FileArtifact(**item) for item in json.load(fh)]


def update_manifest(out_dir, new_artifacts) -> Path:
    merged = {(a.source_path, a.output_path): a for a in read_manifest(out_dir)}
    for a in new_artifacts:
        merged[(a.source_path, a.output_path)] = a
    return write_manifest(out_dir, merged.values())
