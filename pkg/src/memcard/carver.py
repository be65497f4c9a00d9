"""Signature-based carving of files straight from the raw image.

Headers are found chunk by chunk; each chunk is read with an overlap of
(longest header - 1) bytes so a header straddling a boundary is still seen
by the chunk it starts in. File extents are then determined from the image
itself, independent of chunking, using a per-type closer (footer, JPEG
marker walk, SQLite header, AMR frame walk, ISO-BMFF box walk).
"""

from __future__ import annotations

import errno
import hashlib
import logging
import re
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path
from typing import Callable

from .artifacts import (
    CATEGORIES,
    CATEGORY_DIRS,
    PARTIAL_MARKER,
    FileArtifact,
    sha256_bytes,
    update_manifest,
    write_new_file,
)
from .image import DiskImage, ImageError

logger = logging.getLogger(__name__)

CLOSERS = ("footer", "jpeg", "sqlite", "amr", "isobmff")
_BLOCK = 1 << 20


class CarveExportError(OSError):
    pass


@dataclass(frozen=True)
class CarveSignature:
    type_name: str
    header: bytes
    footer: bytes | None
    max_size: int
    category: str
    extension: str = "bin"
    header_offset: int = 0
    closer: str = "footer"

    def __post_init__(self):
        if len(self.header) < 3:
            raise ValueError(f"{self.type_name}: header must be at least 3 bytes")
        if self.max_size <= 0:
            raise ValueError(f"{self.type_name}: max_size must be positive")
        if self.category not in CATEGORIES:
            raise ValueError(f"{self.type_name}: unknown category {self.category!r}")
        if self.closer not in CLOSERS:
            raise ValueError(f"{self.type_name}: unknown closer {self.closer!r}")
        if self.closer == "footer" and not self.footer:
            raise ValueError(f"{self.type_name}: footer closer needs a footer")

    @property
    def span(self) -> int:
        return self.header_offset + len(self.header)


@dataclass(frozen=True)
class CarveHit:
    offset: int
    length: int
    signature: str
    content_hash: str
    duplicate_of_allocated: bool = False


def load_signatures(path=None) -> list[CarveSignature]:
    if path is None:
        text = resources.files("memcard").joinpath("data/signatures.tsv").read_text(encoding="utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    sigs = []
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        fields = line.split("\t")
        if len(fields) < 5:
            raise ValueError(f"signature registry line {lineno}: expected at least 5 fields")
        name, header, footer, max_size, category = fields[:5]
        extension = fields[5] if len(fields) > 5 and fields[5] else name
        offset = int(fields[6]) if len(fields) > 6 and fields[6] else 0
        closer = fields[7] if len(fields) > 7 and fields[7] else "footer"
        sigs.append(
            CarveSignature(
                type_name=name,
                header=bytes.fromhex(header),
                footer=None if footer.strip() == "-" else bytes.fromhex(footer),
                max_size=int(max_size),
                category=category,
                extension=extension,
                header_offset=offset,
                closer=closer,
            )
        )
    return sigs


# -- closers -----------------------------------------------------------------
# Each takes ``read(pos, n)`` (relative to the candidate start; may return
# fewer bytes near the limit) and ``limit``; returns the length or None.

Reader = Callable[[int, int], bytes]


def _find(read: Reader, needle: bytes, start: int, limit: int) -> int:
    pos = start
    while pos < limit:
        block = read(pos, min(_BLOCK, limit - pos) + len(needle) - 1)
        if len(block) < len(needle):
            return -1
        hit = block.find(needle)
        if hit >= 0 and pos + hit + len(needle) <= limit:
            return pos + hit
        pos += _BLOCK
    return -1


def close_footer(read: Reader, limit: int, sig: CarveSignature) -> int | None:
    end = _find(read, sig.footer, len(sig.header), limit)
    return limit if end < 0 else end + len(sig.footer)


_JPEG_MARKER = re.compile(rb"\xff[^\x00\xd0-\xd7\xff]")


def close_jpeg(read: Reader, limit: int, sig: CarveSignature | None = None) -> int | None:
    """Walk JPEG segments; entropy-coded data is skipped to the next real marker."""
    head = read(0, 4)
    if len(head) < 4 or head[:3] != b"\xff\xd8\xff" or head[3] < 0xC0 or head[3] == 0xFF:
        return None
    pos = 2
    while pos + 2 <= limit:
        b = read(pos, 4)
        if len(b) < 2 or b[0] != 0xFF:
            return None
        marker = b[1]
        if marker == 0xFF:
            pos += 1
            continue
        if marker == 0xD9:
            return pos + 2
        if marker == 0xD8:  # a new image starts; this one was truncated
            return None
        if marker == 0x01 or 0xD0 <= marker <= 0xD7:
            pos += 2
            continue
        if len(b) < 4:
            return None
        seglen = struct.unpack(">H", b[2:4])[0]
        if seglen < 2:
            return None
        pos += 2 + seglen
        if marker != 0xDA:
            continue
        # entropy-coded scan data follows SOS
        while pos < limit:
            block = read(pos, min(_BLOCK, limit - pos) + 1)
            m = _JPEG_MARKER.search(block)
            if m and pos + m.start() < limit:
                pos += m.start()
                break
            if len(block) <= 1:
                return None
            pos += len(block) - 1
        else:
            return None
    return None


def close_jpeg_or_footer(read: Reader, limit: int, sig: CarveSignature) -> int | None:
    end = close_jpeg(read, limit)
    if end is not None:
        return end
    head = read(0, 4)
    if len(head) < 4 or head[3] < 0xC0 or head[3] == 0xFF:
        return None
    end = close_footer(read, limit, sig)
    # a footer found past another SOI belongs to the next image
    if end is None or 0 <= _find(read, b"\xff\xd8\xff", 3, end):
        return None
    return end


def close_sqlite(read: Reader, limit: int, sig: CarveSignature) -> int | None:
    head = read(0, 100)
    if len(head) < 100:
        return None
    page_size = struct.unpack_from(">H", head, 16)[0]
    page_size = 65536 if page_size == 1 else page_size
    if page_size < 512 or page_size & (page_size - 1):
        return None
    pages = struct.unpack_from(">I", head, 28)[0]
    if pages == 0:
        logger.info("SQLite header without page count; carving up to max_size")
        return limit
    return min(page_size * pages, limit)


AMR_NB_FRAME = (13, 14, 16, 18, 20, 21, 27, 32, 6, 0, 0, 0, 0, 0, 0, 1)
AMR_WB_FRAME = (18, 24, 33, 37, 41, 47, 51, 59, 61, 6, 0, 0, 0, 0, 1, 1)


def close_amr(read: Reader, limit: int, sig: CarveSignature) -> int | None:
    """Walk AMR storage-format frames until a ToC byte stops making sense."""
    wideband = sig.header.startswith(b"#!AMR-WB")
    sizes = AMR_WB_FRAME if wideband else AMR_NB_FRAME
    pos = len(sig.header)
    frames = 0
    while pos < limit:
        block = read(pos, min(_BLOCK, limit - pos))
        if not block:
            break
        i = 0
        while i < len(block):
            toc = block[i]
            size = sizes[(toc >> 3) & 0x0F]
            if toc & 0x83 or not toc & 0x04 or size == 0 or pos + i + size > limit:
                return pos + i if frames else None
            frames += 1
            i += size
        pos += i
    return min(pos, limit) if frames else None


_BOX_TYPES = {
    b"ftyp", b"moov", b"mdat", b"free", b"skip", b"wide", b"uuid", b"meta",
    b"pdin", b"moof", b"mfra", b"styp", b"sidx", b"udta", b"pnot", b"PICT",
}


def close_isobmff(read: Reader, limit: int, sig: CarveSignature) -> int | None:
    pos = 0
    while pos + 8 <= limit:
        hdr = read(pos, 16)
        if len(hdr) < 8:
            break
        size, kind = struct.unpack(">I4s", hdr[:8])
        if kind not in _BOX_TYPES or (pos == 0 and kind != b"ftyp"):
            break
        if size == 1:
            if len(hdr) < 16:
                break
            size = struct.unpack(">Q", hdr[8:16])[0]
        elif size == 0:
            return limit
        if size < 8:
            break
        pos += size
    if pos == 0:
        return None
    return min(pos, limit)


_CLOSER_FUNCS = {
    "footer": close_footer,
    "jpeg": close_jpeg_or_footer,
    "sqlite": close_sqlite,
    "amr": close_amr,
    "isobmff": close_isobmff,
}


def is_valid_jpeg(data: bytes) -> bool:
    """True when a marker walk from SOI ends exactly at the final EOI."""
    def read(pos, n):
        return data[pos : pos + n]
    return close_jpeg(read, len(data)) == len(data) and data.endswith(b"\xff\xd9")


def measure(read: Reader, limit: int, sig: CarveSignature) -> int | None:
    return _CLOSER_FUNCS[sig.closer](read, limit, sig)


# -- scanning ----------------------------------------------------------------

def _hash_range(img: DiskImage, offset: int, length: int) -> str:
    h = hashlib.sha256()
    pos = 0
    while pos < length:
        n = min(_BLOCK, length - pos)
        h.update(img.read(offset + pos, n))
        pos += n
    return h.hexdigest()


def _candidate(img: DiskImage, start: int, sig: CarveSignature) -> CarveHit | None:
    limit = min(sig.max_size, img.size - start)

    def read(pos: int, n: int) -> bytes:
        n = min(n, limit - pos)
        return img.read(start + pos, n) if n > 0 else b""

    length = measure(read, limit, sig)
    if not length:
        return None
    return CarveHit(start, length, sig.type_name, _hash_range(img, start, length))


def _scan_chunk(img: DiskImage, sigs: list[CarveSignature], chunk_start: int, chunk_size: int,
                overlap: int) -> list[CarveHit]:
    length = min(chunk_size + overlap, img.size - chunk_start)
    try:
        data = img.read(chunk_start, length)
    except ImageError as exc:
        logger.warning("unreadable chunk at %d skipped: %s", chunk_start, exc)
        return []
    hits = []
    for sig in sigs:
        pos = data.find(sig.header)
        while 0 <= pos < chunk_size:
            start = chunk_start + pos - sig.header_offset
            if start >= 0:
                hit = _candidate(img, start, sig)
                if hit is not None:
                    hits.append(hit)
            pos = data.find(sig.header, pos + 1)
    return hits


def scan(img: DiskImage, signatures: list[CarveSignature] | None = None, chunk_size: int = 1 << 20,
         workers: int = 1) -> list[CarveHit]:
    if signatures is None:
        signatures = load_signatures()
    if not signatures:
        return []
    longest = max(s.span for s in signatures)
    if chunk_size < 2 * longest:
        raise ValueError(f"chunk_size {chunk_size} must be at least {2 * longest}")
    overlap = longest - 1
    starts = range(0, img.size, chunk_size)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda s: _scan_chunk(img, signatures, s, chunk_size, overlap), starts))
    else:
        parts = [_scan_chunk(img, signatures, s, chunk_size, overlap) for s in starts]
    merged = {(h.offset, h.signature): h for part in parts for h in part}
    return [merged[k] for k in sorted(merged)]


def dedup_against_allocated(hits: list[CarveHit], artifacts: list[FileArtifact]) -> list[CarveHit]:
    allocated = {a.content_hash for a in artifacts if a.origin == "allocated"}
    return [replace(h, duplicate_of_allocated=h.content_hash in allocated) for h in hits]


def carved_name(hit: CarveHit, sig: CarveSignature) -> str:
    return f"{hit.signature}_{hit.offset:08x}.{sig.extension}"


def export_hits(img: DiskImage, hits: list[CarveHit], out_dir, signatures: list[CarveSignature] | None = None,
                manifest: bool = True) -> list[FileArtifact]:
    """Write each hit to ``carved/<category>/<type>_<hex offset>.<ext>``."""
    out_dir = Path(out_dir)
    by_name = {s.type_name: s for s in (signatures or load_signatures())}
    artifacts: list[FileArtifact] = []
    (out_dir / "carved").mkdir(parents=True, exist_ok=True)
    try:
        for hit in hits:
            sig = by_name[hit.signature]
            rel = f"carved/{CATEGORY_DIRS[sig.category]}/{carved_name(hit, sig)}"
            data = img.read(hit.offset, hit.length)
            write_new_file(out_dir / rel, data)
            artifacts.append(
                FileArtifact(
                    source_path=rel,
                    category=sig.category,
                    content_hash=sha256_bytes(data),
                    size=len(data),
                    origin="carved",
                    output_path=rel,
                )
            )
    except OSError as exc:
        if manifest:
            update_manifest(out_dir, artifacts)
        (out_dir / PARTIAL_MARKER).write_text(
            f"carved export aborted after {len(artifacts)} of {len(hits)} hits: {exc}\n", encoding="utf-8"
        )
        if exc.errno == errno.ENOSPC:
            raise CarveExportError(errno.ENOSPC, "disk full during carved export") from exc
        raise
    if manifest:
        update_manifest(out_dir, artifacts)
    return artifacts
