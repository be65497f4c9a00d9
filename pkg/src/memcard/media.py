"""thumb.dat picture extraction and pass-through transcoding."""

from __future__ import annotations

import logging
import shlex
import subprocess
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .artifacts import FileArtifact, allocate_path, sha256_file
from .carver import close_jpeg, is_valid_jpeg

logger = logging.getLogger(__name__)

JPEG_SOI = b"\xff\xd8\xff"
CONVERT_EXTENSIONS = {"audio": "wma", "video": "wmv"}
DEFAULT_TIMEOUT = 120


@dataclass(frozen=True)
class ThumbEntry:
    index: int
    jpeg_bytes: bytes = field(repr=False)
    source_offset: int


def extract_thumbs(thumb_dat: bytes, source: str = "thumb.dat") -> list[ThumbEntry]:
    def read_at(start):
        return lambda pos, n: thumb_dat[start + pos : start + pos + n]

    entries = []
    pos = thumb_dat.find(JPEG_SOI)
    while pos >= 0:
        end = close_jpeg(read_at(pos), len(thumb_dat) - pos)
        jpeg = thumb_dat[pos : pos + end] if end else b""
        if jpeg and is_valid_jpeg(jpeg):
            entries.append(ThumbEntry(len(entries), jpeg, pos))
            pos = thumb_dat.find(JPEG_SOI, pos + end)
        else:
            logger.warning("%s: JPEG at offset %d has no end marker, skipped", source, pos)
            pos = thumb_dat.find(JPEG_SOI, pos + 1)
    return entries


def _render_command(template: str, src: Path, dst: Path) -> list[str]:
    argv = shlex.split(template)
    if not argv:
        raise ValueError("empty convert command")
    return [a.replace("{in}", str(src)).replace("{out}", str(dst)) for a in argv]


def converted_path(artifact: FileArtifact, out_dir, taken: set[str]) -> str:
    rel_dir, _, name = artifact.output_path.rpartition("/")
    stem = name.rsplit(".", 1)[0] if "." in name else name
    rel = allocate_path(Path(out_dir), rel_dir or ".", f"{stem}.{CONVERT_EXTENSIONS[artifact.category]}", taken)
    return rel.removeprefix("./")


def transcode(artifact: FileArtifact, command_template: str | None, out_dir, *, dest: str | None = None,
              timeout: float = DEFAULT_TIMEOUT) -> FileArtifact | None:
    """Run the external converter next to the original; never touches the original."""
    if not command_template or artifact.category not in CONVERT_EXTENSIONS:
        return None
    out_dir = Path(out_dir)
    rel = dest or converted_path(artifact, out_dir, {artifact.output_path.lower()})
    src, dst = out_dir / artifact.output_path, out_dir / rel
    try:
        argv = _render_command(command_template, src, dst)
        proc = subprocess.run(argv, capture_output=True, timeout=timeout, check=False)
    except (OSError, ValueError, subprocess.TimeoutExpired) as exc:
        logger.warning("convert %s failed: %s", artifact.output_path, exc)
        dst.unlink(missing_ok=True)
        return None
    if proc.returncode != 0 or not dst.is_file():
        logger.warning("convert %s failed: exit status %d", artifact.output_path, proc.returncode)
        dst.unlink(missing_ok=True)
        return None
    return FileArtifact(
        source_path=artifact.source_path,
        category=artifact.category,
        content_hash=sha256_file(dst),
        size=dst.stat().st_size,
        origin=artifact.origin,
        output_path=rel,
    )


def transcode_all(artifacts, command_template: str | None, out_dir, *, workers: int = 4,
                  timeout: float = DEFAULT_TIMEOUT) -> list[FileArtifact]:
    if not command_template:
        return []
    artifacts = list(artifacts)
    todo = sorted((a for a in artifacts if a.category in CONVERT_EXTENSIONS), key=lambda a: a.output_path)
    # destinations are picked sequentially so parallel runs cannot race for a name
    taken = {a.output_path.lower() for a in artifacts}
    plan = [(a, converted_path(a, out_dir, taken)) for a in todo]
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        results = list(pool.map(lambda p: transcode(p[0], command_template, out_dir, dest=p[1], timeout=timeout),
                                plan))
    return [r for r in results if r is not None]
