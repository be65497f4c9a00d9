"""Read-only FAT12/16/32 parsing, including deleted directory entries.

Every byte is fetched through :meth:`FatVolume.read`, which refuses to look
outside the volume's own extent.
"""

from __future__ import annotations

import logging
import math
import struct
from dataclasses import dataclass, field
from datetime import datetime
from functools import cached_property

from .image import DiskImage, ImageError, PartitionEntry, VALID_SECTOR_SIZES

logger = logging.getLogger(__name__)

DIR_ENTRY_SIZE = 32
DELETED_MARK = 0xE5
LFN_ATTR = 0x0F

ATTR_FLAGS = (
    (0x01, "read_only"),
    (0x02, "hidden"),
    (0x04, "system"),
    (0x08, "volume_label"),
    (0x10, "directory"),
    (0x20, "archive"),
)

# upper bound of the cluster count for FAT12 and FAT16 (exclusive)
FAT12_MAX_CLUSTERS = 4085
FAT16_MAX_CLUSTERS = 65525

_EOC = {"FAT12": 0xFF8, "FAT16": 0xFFF8, "FAT32": 0x0FFFFFF8}
_BAD = {"FAT12": 0xFF7, "FAT16": 0xFFF7, "FAT32": 0x0FFFFFF7}

# directory trees deeper than this are treated as corrupt
MAX_DEPTH = 64


class FatError(ValueError):
    pass


def variant_for_cluster_count(total_clusters: int) -> str:
    if total_clusters < FAT12_MAX_CLUSTERS:
        return "FAT12"
    if total_clusters < FAT16_MAX_CLUSTERS:
        return "FAT16"
    return "FAT32"


@dataclass(frozen=True)
class FatVolume:
    variant: str
    bytes_per_sector: int
    sectors_per_cluster: int
    reserved_sectors: int
    fat_count: int
    fat_size_sectors: int
    root_entry_count: int
    root_dir_cluster: int
    total_clusters: int
    volume_offset: int
    volume_length: int
    image: DiskImage = field(repr=False, compare=False)

    @property
    def cluster_size(self) -> int:
        return self.bytes_per_sector * self.sectors_per_cluster

    @property
    def fat_offset(self) -> int:
        return self.reserved_sectors * self.bytes_per_sector

    @property
    def root_dir_offset(self) -> int:
        return self.fat_offset + self.fat_count * self.fat_size_sectors * self.bytes_per_sector

    @property
    def root_dir_size(self) -> int:
        return self.root_entry_count * DIR_ENTRY_SIZE

    @property
    def data_offset(self) -> int:
        root_sectors = math.ceil(self.root_dir_size / self.bytes_per_sector)
        return self.root_dir_offset + root_sectors * self.bytes_per_sector

    def read(self, offset: int, length: int) -> bytes:
        """Read ``length`` bytes at ``offset`` relative to the volume start."""
        if offset < 0 or length < 0 or offset + length > self.volume_length:
            raise FatError(
                f"volume read of {length} bytes at {offset} outside volume of {self.volume_length} bytes"
            )
        return self.image.read(self.volume_offset + offset, length)

    @cached_property
    def _fat(self) -> bytes:
        return self.read(self.fat_offset, self.fat_size_sectors * self.bytes_per_sector)

    def is_valid_cluster(self, cluster: int) -> bool:
        return 2 <= cluster < self.total_clusters + 2

    def cluster_offset(self, cluster: int) -> int:
        return self.data_offset + (cluster - 2) * self.cluster_size

    def fat_entry(self, cluster: int) -> int:
        fat = self._fat
        if self.variant == "FAT12":
            pos = cluster + cluster // 2
            if pos + 2 > len(fat):
                raise FatError(f"cluster {cluster} beyond FAT")
            value = fat[pos] | fat[pos + 1] << 8
            return value >> 4 if cluster & 1 else value & 0xFFF
        if self.variant == "FAT16":
            pos = cluster * 2
            if pos + 2 > len(fat):
                raise FatError(f"cluster {cluster} beyond FAT")
            return struct.unpack_from("<H", fat, pos)[0]
        pos = cluster * 4
        if pos + 4 > len(fat):
            raise FatError(f"cluster {cluster} beyond FAT")
        return struct.unpack_from("<I", fat, pos)[0] & 0x0FFFFFFF

    def cluster_chain(self, start: int) -> list[int]:
        """Follow the FAT from ``start``; cycles and bad links cut the chain."""
        chain: list[int] = []
        seen: set[int] = set()
        eoc, bad = _EOC[self.variant], _BAD[self.variant]
        cluster = start
        while True:
            if not self.is_valid_cluster(cluster):
                logger.warning("cluster chain from %d reaches invalid cluster %d", start, cluster)
                break
            if cluster in seen:
                logger.warning("cluster chain from %d has a cycle at %d, truncated", start, cluster)
                break
            seen.add(cluster)
            chain.append(cluster)
            nxt = self.fat_entry(cluster)
            if nxt >= eoc:
                break
            if nxt == bad or nxt == 0:
                logger.warning("cluster chain from %d broken at %d (entry 0x%x)", start, cluster, nxt)
                break
            cluster = nxt
        return chain

    def read_clusters(self, clusters: list[int]) -> bytes:
        """Read clusters, coalescing contiguous runs into single reads."""
        parts = []
        i = 0
        while i < len(clusters):
            j = i
            while j + 1 < len(clusters) and clusters[j + 1] == clusters[j] + 1:
                j += 1
            parts.append(self.read(self.cluster_offset(clusters[i]), (j - i + 1) * self.cluster_size))
            i = j + 1
        return b"".join(parts)


@dataclass(frozen=True)
class DirRecord:
    name: str
    path: str
    attributes: frozenset
    first_cluster: int
    size: int
    mtime: datetime | None
    deleted: bool

    @property
    def is_directory(self) -> bool:
        return "directory" in self.attributes

    @property
    def provenance(self) -> str:
        """How content for this record is obtained by :func:`read_file_content`."""
        return "reconstructed-contiguous" if self.deleted else "fat-chain"


def parse_fat_volume(img: DiskImage, part: PartitionEntry) -> FatVolume:
    part_offset, part_length = part.byte_range(img.sector_size)
    if part_offset + part_length > img.size:
        raise FatError("partition extends beyond image")
    if part_length < 512:
        raise FatError("partition too small for a boot sector")
    boot = img.read(part_offset, 512)
    if boot[510:512] != b"\x55\xaa":
        raise FatError("invalid boot signature")

    bps, spc, reserved, fat_count, root_entries, total16, _media, fat16 = struct.unpack_from(
        "<HBHBHHBH", boot, 11
    )
    total32, fat32 = struct.unpack_from("<II", boot, 32)
    root_cluster = struct.unpack_from("<I", boot, 44)[0]

    if bps not in VALID_SECTOR_SIZES:
        raise FatError(f"invalid bytes_per_sector {bps}")
    if spc == 0:
        raise FatError("sectors_per_cluster is zero")
    if spc & (spc - 1) or spc > 128:
        raise FatError(f"invalid sectors_per_cluster {spc}")
    if reserved == 0 or fat_count == 0:
        raise FatError("reserved sector count and FAT count must be non-zero")
    total_sectors = total16 or total32
    fat_size = fat16 or fat32
    if total_sectors == 0 or fat_size == 0:
        raise FatError("zero total sectors or FAT size")
    if total_sectors * bps > part_length:
        raise FatError(
            f"geometry ({total_sectors} x {bps} bytes) exceeds partition of {part_length} bytes"
        )

    root_sectors = math.ceil(root_entries * DIR_ENTRY_SIZE / bps)
    meta_sectors = reserved + fat_count * fat_size + root_sectors
    if meta_sectors >= total_sectors:
        raise FatError("no room for a data region")
    total_clusters = (total_sectors - meta_sectors) // spc
    variant = variant_for_cluster_count(total_clusters)
    if variant == "FAT32":
        if fat16 != 0 or root_entries != 0:
            logger.warning("FAT32 by cluster count but BPB carries FAT12/16 fields")
        if root_cluster < 2:
            raise FatError(f"invalid FAT32 root cluster {root_cluster}")
    else:
        root_cluster = 0

    fat_entry_bits = {"FAT12": 12, "FAT16": 16, "FAT32": 32}[variant]
    if fat_size * bps * 8 < (total_clusters + 2) * fat_entry_bits:
        logger.warning("FAT of %d sectors cannot map all %d clusters", fat_size, total_clusters)

    return FatVolume(
        variant=variant,
        bytes_per_sector=bps,
        sectors_per_cluster=spc,
        reserved_sectors=reserved,
        fat_count=fat_count,
        fat_size_sectors=fat_size,
        root_entry_count=root_entries,
        root_dir_cluster=root_cluster,
        total_clusters=total_clusters,
        volume_offset=part_offset,
        volume_length=total_sectors * bps,
        image=img,
    )


def lfn_checksum(short_name: bytes) -> int:
    total = 0
    for b in short_name:
        total = (((total & 1) << 7) + (total >> 1) + b) & 0xFF
    return total


def _fat_datetime(date: int, time: int) -> datetime | None:
    if date == 0:
        return None
    try:
        return datetime(
            1980 + (date >> 9), (date >> 5) & 0x0F, date & 0x1F,
            time >> 11, (time >> 5) & 0x3F, (time & 0x1F) * 2,
        )
    except ValueError:
        return None


def _short_name(entry: bytes, deleted: bool) -> str:
    raw = bytearray(entry[0:11])
    if raw[0] == 0x05:
        raw[0] = DELETED_MARK
    base = bytes(raw[0:8]).decode("cp437").rstrip(" ")
    ext = bytes(raw[8:11]).decode("cp437").rstrip(" ")
    if entry[12] & 0x08:
        base = base.lower()
    if entry[12] & 0x10:
        ext = ext.lower()
    if deleted:
        base = "_" + base[1:]
    return f"{base}.{ext}" if ext else base


def _long_name(parts: list[bytes], entry: bytes, deleted: bool) -> str | None:
    if not parts:
        return None
    checksum = parts[-1][13]
    run: list[bytes] = []
    for p in reversed(parts):
        if p[13] != checksum:
            break
        run.append(p)
    # run is now in name order: first fragment first

    if deleted:
        # the first short-name byte is gone; accept if some original byte matches
        tail = entry[1:11]
        if not any(lfn_checksum(bytes([b]) + tail) == checksum for b in range(0x20, 0x100)):
            return None
    else:
        if [p[0] & 0x1F for p in run] != list(range(1, len(run) + 1)):
            logger.warning("LFN ordinals out of sequence for %r", entry[0:11])
            return None
        if lfn_checksum(entry[0:11]) != checksum:
            logger.warning("LFN checksum mismatch for %r, using 8.3 name", entry[0:11])
            return None

    raw = b"".join(p[1:11] + p[14:26] + p[28:32] for p in run)
    text = raw.decode("utf-16-le", errors="replace")
    end = text.find("\x00")
    if end >= 0:
        text = text[:end]
    text = text.rstrip("\uffff")
    return text or None


def parse_directory(raw: bytes, parent: str, variant: str, include_deleted: bool) -> list[DirRecord]:
    """Decode one directory's entries; ``.``/``..`` and volume labels are skipped."""
    records = []
    lfn_parts: list[bytes] = []
    for off in range(0, len(raw) - DIR_ENTRY_SIZE + 1, DIR_ENTRY_SIZE):
        entry = raw[off : off + DIR_ENTRY_SIZE]
        first = entry[0]
        if first == 0x00:
            break
        attr = entry[11]
        if attr == LFN_ATTR:
            if first != DELETED_MARK and first & 0x40:
                lfn_parts = []
            lfn_parts.append(entry)
            continue

        parts, lfn_parts = lfn_parts, []
        deleted = first == DELETED_MARK
        if attr & 0x08 and not attr & 0x10:
            continue
        if entry[0:2] == b". " or entry[0:3] == b".. ":
            continue
        if deleted and not include_deleted:
            continue
        parts = [p for p in parts if (p[0] == DELETED_MARK) == deleted]

        name = _short_name(entry, deleted)
        long = _long_name(parts, entry, deleted)
        if long:
            name = "_" + long[1:] if deleted else long

        hi = struct.unpack_from("<H", entry, 20)[0] if variant == "FAT32" else 0
        lo = struct.unpack_from("<H", entry, 26)[0]
        time, date = struct.unpack_from("<HH", entry, 22)
        size = struct.unpack_from("<I", entry, 28)[0]
        attributes = frozenset(label for bit, label in ATTR_FLAGS if attr & bit)
        is_dir = bool(attr & 0x10)
        records.append(
            DirRecord(
                name=name,
                path=f"{parent.rstrip('/')}/{name}",
                attributes=attributes,
                first_cluster=hi << 16 | lo,
                size=0 if is_dir else size,
                mtime=_fat_datetime(date, time),
                deleted=deleted,
            )
        )
    return records


def _directory_bytes(vol: FatVolume, first_cluster: int | None) -> bytes:
    if first_cluster is None:
        if vol.variant == "FAT32":
            return vol.read_clusters(vol.cluster_chain(vol.root_dir_cluster))
        return vol.read(vol.root_dir_offset, vol.root_dir_size)
    return vol.read_clusters(vol.cluster_chain(first_cluster))


def walk_directory_tree(vol: FatVolume, include_deleted: bool = False) -> list[DirRecord]:
    """Depth-first listing in on-disk order.

    Deleted directories are listed but not descended into: their cluster
    chains are gone.
    """
    out: list[DirRecord] = []
    root_key = vol.root_dir_cluster if vol.variant == "FAT32" else 0
    visited = {root_key}

    def visit(first_cluster: int | None, path: str, depth: int):
        try:
            raw = _directory_bytes(vol, first_cluster)
            records = parse_directory(raw, path, vol.variant, include_deleted)
        except (FatError, ImageError) as exc:
            logger.warning("skipping unreadable directory %s: %s", path or "/", exc)
            return
        for rec in records:
            out.append(rec)
            if not rec.is_directory or rec.deleted:
                continue
            if depth >= MAX_DEPTH:
                logger.warning("directory depth limit reached at %s", rec.path)
                continue
            if not vol.is_valid_cluster(rec.first_cluster):
                logger.warning("directory %s has invalid first cluster %d", rec.path, rec.first_cluster)
                continue
            if rec.first_cluster in visited:
                logger.warning("directory loop at %s, not descending", rec.path)
                continue
            visited.add(rec.first_cluster)
            visit(rec.first_cluster, rec.path, depth + 1)

    visit(None, "", 0)
    return out


def read_file_content(vol: FatVolume, rec: DirRecord) -> bytes:
    if rec.size == 0 or rec.is_directory:
        return b""
    if not vol.is_valid_cluster(rec.first_cluster):
        logger.warning("%s: first cluster %d out of range, no content", rec.path, rec.first_cluster)
        return b""
    if rec.deleted:
        wanted = math.ceil(rec.size / vol.cluster_size)
        last = min(rec.first_cluster + wanted, vol.total_clusters + 2)
        data = vol.read_clusters(list(range(rec.first_cluster, last)))
    else:
        data = vol.read_clusters(vol.cluster_chain(rec.first_cluster))
    if len(data) < rec.size:
        logger.warning("%s: only %d of %d bytes available", rec.path, len(data), rec.size)
    return data[: rec.size]
