"""
Triage and carving on a synthetic card
======================================

Build a small FAT16 card image, delete a picture, then get the files back
twice: once from the directory entries and once by carving raw bytes.
"""

import tempfile
from pathlib import Path

from memcard.carver import scan
from memcard.fat import parse_fat_volume, walk_directory_tree
from memcard.fixtures import build_image, make_jpeg, make_png
from memcard.image import open_image, parse_partitions
from memcard.triage import detect_platform, extract_all

work = Path(tempfile.mkdtemp(prefix="memcard-demo-"))

# three pictures and a note; the second JPEG gets deleted afterwards
files = {
    "/DCIM/IMG0001.JPG": make_jpeg(1, (120, 90)),
    "/DCIM/IMG0002.JPG": make_jpeg(2, (120, 90)),
    "/Pictures/logo.png": make_png(3),
    "/Documents/notes.txt": b"call back after 5\n",
}
card = build_image(work / "card.dd", "FAT16", 16 << 20, files, delete=("/DCIM/IMG0002.JPG",), mbr_start_lba=2048)

img = open_image(card.path)
part = parse_partitions(img)[0]
vol = parse_fat_volume(img, part)
print(f"partition at LBA {part.start_lba}, {vol.variant}")

# deleted entries come back with '_' in place of the lost first character
for rec in walk_directory_tree(vol, include_deleted=True):
    print(f"{'deleted ' if rec.deleted else '        '}{rec.path}")

print(detect_platform(walk_directory_tree(vol)))

artifacts = extract_all(vol, work / "out")
for a in artifacts:
    print(a.origin.ljust(18), a.output_path)

# carving ignores the file system entirely
for hit in scan(img, chunk_size=64 * 1024):
    print(f"carved {hit.signature} at {hit.offset:#x}, {hit.length} bytes")
img.close()
