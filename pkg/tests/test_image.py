import logging

import pytest

from memcard.fixtures import format_image
from memcard.image import ImageError, open_image, parse_partitions


def test_size_from_file(tmp_path):
    path = tmp_path / "big.dd"
    with open(path, "wb") as fh:
        fh.truncate(2 << 30)
    with open_image(path) as img:
        assert (img.size, img.sector_size) == (2147483648, 512)


def test_empty_image_rejected(tmp_path):
    path = tmp_path / "empty.dd"
    path.write_bytes(b"")
    with pytest.raises(ImageError, match="empty image"):
        open_image(path)


def test_missing_image(tmp_path):
    with pytest.raises(FileNotFoundError):
        open_image(tmp_path / "nope.dd")


def test_partial_sector_truncated_with_warning(tmp_path, caplog):
    path = tmp_path / "odd.dd"
    path.write_bytes(bytes(1000))
    with caplog.at_level(logging.WARNING), open_image(path) as img:
        assert img.size == 512
        assert img.notes
    assert any("512" in r.getMessage() for r in caplog.records)


def test_reads_are_bounds_checked(tmp_path):
    path = tmp_path / "small.dd"
    path.write_bytes(bytes(1024))
    with open_image(path) as img:
        assert img.read(512, 512) == bytes(512)
        with pytest.raises(ImageError):
            img.read(1000, 100)
        with pytest.raises(ImageError):
            img.read(-1, 1)


def test_image_opened_read_only(tmp_path):
    path = tmp_path / "ro.dd"
    path.write_bytes(bytes(4096))
    path.chmod(0o444)
    with open_image(path) as img:
        assert img.read_sector(0) == bytes(512)


def test_mbr_partition_found(tmp_path):
    path = tmp_path / "mbr.dd"
    format_image(path, "FAT32", 128 << 20, mbr_start_lba=8192)
    with open_image(path) as img:
        parts = parse_partitions(img)
    assert [(p.start_lba, p.length, p.synthetic) for p in parts] == [(8192, (128 << 20) // 512, False)]


def test_superfloppy_gives_whole_image_entry(tmp_path):
    path = tmp_path / "floppy.dd"
    format_image(path, "FAT12", 4 << 20)
    with open_image(path) as img:
        parts = parse_partitions(img)
        assert len(parts) == 1
        assert parts[0].synthetic and parts[0].start_lba == 0 and parts[0].length * 512 == img.size


def test_all_zero_image_has_no_partitions(tmp_path):
    path = tmp_path / "zero.dd"
    path.write_bytes(bytes(64 * 1024))
    with open_image(path) as img:
        assert parse_partitions(img) == []


def test_out_of_bounds_partition_skipped(tmp_path, caplog):
    path = tmp_path / "bad.dd"
    format_image(path, "FAT16", 16 << 20, mbr_start_lba=2048)
    raw = bytearray(path.read_bytes())
    # second entry points past the end of the image
    raw[462:478] = bytes([0, 0, 2, 0, 0x06, 0xFE, 0xFF, 0xFF]) + (10**6).to_bytes(4, "little") + (10**6).to_bytes(4, "little")
    path.write_bytes(bytes(raw))
    with caplog.at_level(logging.WARNING), open_image(path) as img:
        parts = parse_partitions(img)
    assert [p.start_lba for p in parts] == [2048]
    assert caplog.records
