"""Read-only access to raw ("dd") disk images and MBR partition tables."""

from __future__ import annotations

import hashlib
import logging
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path

logger = logging.getLogger(__name__)

MBR_SIGNATURE = b"\x55\xaa"
VALID_SECTOR_SIZES = (512, 1024, 2048, 4096)


class ImageError(Exception):
    pass


class DiskImage:
    """A raw image opened read-only.

    Reads go through ``os.pread`` so several worker threads can share one
    instance. Nothing is ever written to the underlying file.
    """

    def __init__(self, path: Path, size: int, sector_size: int = 512):
        self.path = Path(path)
        self.size = size
        self.sector_size = sector_size
        self.notes: list[str] = []
        self._fd = os.open(self.path, os.O_RDONLY)

    def __repr__(self):
        return f"DiskImage(path={str(self.path)!r}, size={self.size}, sector_size={self.sector_size})"

    def read(self, offset: int, length: int) -> bytes:
        if offset < 0 or length < 0 or offset + length > self.size:
            raise ImageError(
                f"read of {length} bytes at {offset} outside image of {self.size} bytes"
            )
        chunks = []
        while length:
            chunk = os.pread(self._fd, length, offset)
            if not chunk:
                raise ImageError(f"short read at offset {offset}")
            chunks.append(chunk)
            offset += len(chunk)
            length -= len(chunk)
        return b"".join(chunks)

    def read_sector(self, lba: int, count: int = 1) -> bytes:
        return self.read(lba * self.sector_size, count * self.sector_size)

    def sha256(self, block_size: int = 1 << 20) -> str:
        """Hash of the whole file, including any tail beyond ``size``."""
        h = hashlib.sha256()
        pos = 0
        while True:
            chunk = os.pread(self._fd, block_size, pos)
            if not chunk:
                break
            h.update(chunk)
            pos += len(chunk)
        return h.hexdigest()

    def close(self):
        if self._fd is not None:
            os.close(self._fd)
            self._fd = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def __del__(self):
        try:
            self.close()
        except Exception:
            pass


@dataclass(frozen=True)
class PartitionEntry:
    index: int
    start_lba: int
    length: int
    type_code: int
    synthetic: bool = field(default=False, compare=False)

    def byte_range(self, sector_size: int) -> tuple[int, int]:
        return self.start_lba * sector_size, self.length * sector_size


def open_image(path, sector_size: int = 512) -> DiskImage:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"image not found: {path}")
    if sector_size not in VALID_SECTOR_SIZES:
        raise ImageError(f"unsupported sector size {sector_size}")
    raw_size = path.stat().st_size
    if raw_size == 0:
        raise ImageError("empty image")
    size = raw_size - raw_size % sector_size
    if size == 0:
        raise ImageError(f"image smaller than one {sector_size}-byte sector")
    img = DiskImage(path, size, sector_size)
    if size != raw_size:
        msg = (
            f"image size {raw_size} is not a multiple of {sector_size}; "
            f"trailing {raw_size - size} bytes ignored"
        )
        logger.warning(msg)
        img.notes.append(msg)
    return img


def looks_like_fat_boot_sector(sector: bytes) -> bool:
    """Cheap BPB sanity check used to tell a superfloppy from an MBR."""
    if len(sector) < 512 or sector[510:512] != MBR_SIGNATURE:
        return False
    if not (sector[0] == 0xEB and sector[2] == 0x90) and sector[0] != 0xE9:
        return False
    bps, spc, reserved, fats = struct.unpack_from("<HBHB", sector, 11)
    if bps not in VALID_SECTOR_SIZES:
        return False
    if spc == 0 or spc & (spc - 1) or spc > 128:
        return False
    return reserved > 0 and fats > 0


def parse_partitions(img: DiskImage) -> list[PartitionEntry]:
    sector0 = img.read(0, 512)
    total_sectors = img.size // img.sector_size
    if looks_like_fat_boot_sector(sector0):
        return [PartitionEntry(0, 0, total_sectors, 0, synthetic=True)]
    if sector0[510:512] != MBR_SIGNATURE:
        return []

    entries: list[PartitionEntry] = []
    for i in range(4):
        raw = sector0[446 + 16 * i : 446 + 16 * (i + 1)]
        status, type_code = raw[0], raw[4]
        start, length = struct.unpack_from("<II", raw, 8)
        if type_code == 0 or length == 0:
            continue
        if status not in (0x00, 0x80):
            logger.warning("partition %d: bad status byte 0x%02x, skipped", i, status)
            continue
        if start + length > total_sectors:
            logger.warning(
                "partition %d (lba %d + %d) exceeds image of %d sectors, skipped",
                i, start, length, total_sectors,
            )
            continue
        clash = [e for e in entries if start < e.start_lba + e.length and e.start_lba < start + length]
        if clash:
            logger.warning("partition %d overlaps partition %d, skipped", i, clash[0].index)
            continue
        entries.append(PartitionEntry(i, start, length, type_code))
    return entries
