"""Synthetic evidence generator for tests and demos.

Filesystem images are written by pyfatfs, pictures by Pillow, databases by
the stdlib sqlite3 engine: all independent of the parsers in this package,
so the ground truth they return can serve as a test oracle.

Requires the ``fixtures`` extra.
"""

from __future__ import annotations

import hashlib
import io
import os
import random
import sqlite3
import struct
import tempfile
import zipfile
from dataclasses import dataclass, field
from pathlib import Path

from cryptography.hazmat.primitives import padding
from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes

FAT_TYPES = {"FAT12": 12, "FAT16": 16, "FAT32": 32}

# the classic 28-column WhatsApp "messages" layout
MESSAGE_COLUMNS = [
    ("_id", "INTEGER PRIMARY KEY AUTOINCREMENT"),
    ("key_remote_jid", "TEXT NOT NULL"),
    ("key_from_me", "INTEGER"),
    ("key_id", "TEXT NOT NULL"),
    ("status", "INTEGER"),
    ("needs_push", "INTEGER"),
    ("data", "TEXT"),
    ("timestamp", "INTEGER"),
    ("media_url", "TEXT"),
    ("media_mime_type", "TEXT"),
    ("media_wa_type", "TEXT"),
    ("media_size", "INTEGER"),
    ("media_name", "TEXT"),
    ("media_hash", "TEXT"),
    ("media_duration", "INTEGER"),
    ("origin", "INTEGER"),
    ("latitude", "REAL"),
    ("longitude", "REAL"),
    ("thumb_image", "TEXT"),
    ("remote_resource", "TEXT"),
    ("received_timestamp", "INTEGER"),
    ("send_timestamp", "INTEGER"),
    ("receipt_server_timestamp", "INTEGER"),
    ("receipt_device_timestamp", "INTEGER"),
    ("raw_data", "BLOB"),
    ("recipient_count", "INTEGER"),
    ("read_device_timestamp", "INTEGER"),
    ("played_device_timestamp", "INTEGER"),
]


def sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


# -- media -------------------------------------------------------------------

def make_jpeg(seed: int, size: tuple[int, int] = (64, 48), quality: int = 85) -> bytes:
    from PIL import Image

    rng = random.Random(seed)
    w, h = size
    img = Image.frombytes("RGB", size, bytes(rng.randrange(256) for _ in range(w * h * 3)))
    buf = io.BytesIO()
    img.save(buf, format="JPEG", quality=quality)
    return buf.getvalue()


def make_png(seed: int, size: tuple[int, int] = (48, 32)) -> bytes:
    from PIL import Image

    rng = random.Random(seed)
    w, h = size
    img = Image.frombytes("RGB", size, bytes(rng.randrange(256) for _ in range(w * h * 3)))
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return buf.getvalue()


def reference_media(name: str) -> bytes:
    """Encoder-produced AMR / 3GP / MP4 samples shipped with the test suite."""
    here = Path(__file__).resolve()
    for base in (here.parents[2] / "tests" / "data", Path.cwd() / "tests" / "data"):
        candidate = base / name
        if candidate.is_file():
            return candidate.read_bytes()
    raise FileNotFoundError(name)


def make_thumb_dat(jpegs: list[bytes], seed: int = 0) -> bytes:
    """Opaque container: random record headers around embedded JPEG streams."""
    rng = random.Random(seed)
    out = bytearray(b"THMB" + struct.pack("<I", len(jpegs)))
    for i, jpeg in enumerate(jpegs):
        header = struct.pack("<II", i, len(jpeg)) + bytes(rng.randrange(0xD8) for _ in range(24))
        out += header + jpeg
    out += bytes(rng.randrange(0xD8) for _ in range(37))
    return bytes(out)


# -- databases ---------------------------------------------------------------

@dataclass
class Msg:
    jid: str
    from_me: int
    data: str | None
    timestamp: int
    media_name: str | None = None
    thumb: bytes | None = None


def make_message_store(messages: list[Msg], page_size: int = 4096) -> bytes:
    """A plaintext message store with the 28-column ``messages`` table."""
    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "messagestore.db")
        con = sqlite3.connect(path)
        con.execute(f"PRAGMA page_size={page_size}")
        cols = ", ".join(f"{n} {t}" for n, t in MESSAGE_COLUMNS)
        con.execute(f"CREATE TABLE messages ({cols})")
        con.execute("CREATE TABLE chat_list (_id INTEGER PRIMARY KEY AUTOINCREMENT, key_remote_jid TEXT UNIQUE)")
        for i, m in enumerate(messages):
            con.execute(
                "INSERT INTO messages (key_remote_jid, key_from_me, key_id, status, data, timestamp,"
                " media_name, raw_data, media_wa_type, received_timestamp)"
                " VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?, ?)",
                (m.jid, m.from_me, f"K{i:06d}", 0, m.data, m.timestamp, m.media_name, m.thumb,
                 "1" if m.media_name else "0", m.timestamp + 500),
            )
        for jid in sorted({m.jid for m in messages}):
            con.execute("INSERT INTO chat_list (key_remote_jid) VALUES (?)", (jid,))
        con.commit()
        con.close()
        return Path(path).read_bytes()


_INT_EDGES = [0, 1, -1, 127, -128, 255, 32767, -32768, 2**23 - 1, -(2**23), 2**31 - 1, -(2**31),
              2**47 - 1, -(2**47), 2**63 - 1, -(2**63)]
_DECL_TYPES = ["INTEGER", "TEXT", "BLOB", "REAL", "NUMERIC", "", "VARCHAR(20)", "DOUBLE"]


def _random_value(rng: random.Random, big: bool):
    kind = rng.randrange(7)
    if kind == 0:
        return None
    if kind == 1:
        return rng.choice(_INT_EDGES) if rng.random() < 0.5 else rng.randrange(-(2**40), 2**40)
    if kind == 2:
        return rng.uniform(-1e12, 1e12)
    if kind in (3, 4):
        n = rng.randrange(20_000, 120_000) if big else rng.randrange(0, 60)
        return "".join(rng.choices("aZ09 <>&é€日本語😀", k=n))
    n = rng.randrange(20_000, 120_000) if big else rng.randrange(0, 40)
    return rng.randbytes(n)


def make_random_database(seed: int, with_messages: bool | None = None) -> bytes:
    """A database written by the stdlib engine with random tables, types, encodings and overflow."""
    rng = random.Random(seed)
    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "r.db")
        con = sqlite3.connect(path)
        con.execute(f"PRAGMA page_size={rng.choice([512, 1024, 4096, 8192, 65536])}")
        con.execute(f"PRAGMA encoding='{rng.choice(['UTF-8', 'UTF-16le', 'UTF-16be'])}'")
        for t in range(rng.randrange(1, 4)):
            ncols = rng.randrange(1, 8)
            cols = [f"c{i} {rng.choice(_DECL_TYPES)}" for i in range(ncols)]
            alias = rng.random() < 0.4
            if alias:
                cols.insert(0, "id INTEGER PRIMARY KEY")
            con.execute(f"CREATE TABLE t{t} ({', '.join(cols)})")
            big_rate = rng.choice([0.0, 0.02, 0.1])
            for _ in range(rng.randrange(0, 400)):
                vals = [_random_value(rng, rng.random() < big_rate) for _ in range(ncols)]
                if alias:
                    vals.insert(0, rng.choice([None, None, rng.randrange(-(2**40), 2**40)]))
                try:
                    con.execute(f"INSERT INTO t{t} VALUES ({', '.join('?' * len(vals))})", vals)
                except sqlite3.IntegrityError:
                    pass
            if rng.random() < 0.3:
                con.execute(f"DELETE FROM t{t} WHERE rowid % 3 = 0")
        if with_messages if with_messages is not None else seed % 4 == 0:
            cols = ", ".join(f"{n} {t}" for n, t in MESSAGE_COLUMNS)
            con.execute(f"CREATE TABLE messages ({cols})")
            for i in range(rng.randrange(1, 200)):
                con.execute(
                    "INSERT INTO messages (key_remote_jid, key_from_me, key_id, data, timestamp, raw_data, latitude)"
                    " VALUES (?, ?, ?, ?, ?, ?, ?)",
                    (f"3161{rng.randrange(10**7):07d}@s.whatsapp.net", rng.randrange(2), f"K{i}",
                     _random_value(rng, rng.random() < 0.05), 1392197250043 + rng.randrange(10**9),
                     rng.randbytes(rng.randrange(0, 3000)) if rng.random() < 0.3 else None, rng.uniform(-90, 90)),
                )
        con.commit()
        con.close()
        return Path(path).read_bytes()


def reference_rows(data: bytes, table: str) -> list[tuple[int, list]]:
    """``SELECT rowid, *`` through the stdlib engine, shaped like ``read_table`` output."""
    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "ref.db")
        Path(path).write_bytes(data)
        con = sqlite3.connect(path)
        try:
            rows = con.execute(f'SELECT rowid, * FROM "{table}" ORDER BY rowid').fetchall()
        finally:
            con.close()
    return [(r[0], list(r[1:])) for r in rows]


def reference_tables(data: bytes) -> list[str]:
    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "ref.db")
        Path(path).write_bytes(data)
        con = sqlite3.connect(path)
        try:
            return [r[0] for r in con.execute("SELECT name FROM sqlite_master WHERE type='table' ORDER BY rowid")]
        finally:
            con.close()


def encrypt_store(plaintext: bytes, key: bytes, mode: str = "aes_cbc", iv: bytes | None = None) -> bytes:
    padder = padding.PKCS7(128).padder()
    padded = padder.update(plaintext) + padder.finalize()
    cipher_mode = modes.CBC(iv) if mode == "aes_cbc" else modes.ECB()
    enc = Cipher(algorithms.AES(key), cipher_mode).encryptor()
    return enc.update(padded) + enc.finalize()


def make_bbb(path, key_entry: str, key_bytes: bytes, hex_key: bool = False):
    """A zip-format device backup carrying the key under ``key_entry``."""
    with zipfile.ZipFile(path, "w") as zf:
        zf.writestr("Manifest.xml", "<BlackBerry_Backup><Databases/></BlackBerry_Backup>")
        zf.writestr(key_entry, key_bytes.hex() if hex_key else key_bytes)
        zf.writestr("Databases/Address Book.dat", os.urandom(64))


# -- filesystem images -------------------------------------------------------

def write_mbr(path, start_lba: int, length: int, type_code: int = 0x0C):
    entry = struct.pack("<B3sB3sII", 0x00, b"\x00\x02\x00", type_code, b"\xfe\xff\xff", start_lba, length)
    mbr = bytearray(512)
    mbr[446:462] = entry
    mbr[510:512] = b"\x55\xaa"
    with open(path, "r+b") as fh:
        fh.write(mbr)


def format_image(path, variant: str, size: int, mbr_start_lba: int | None = None) -> int:
    """Create a blank FAT image; returns the filesystem byte offset."""
    from pyfatfs.PyFat import PyFat

    offset = 0 if mbr_start_lba is None else mbr_start_lba * 512
    with open(path, "wb") as fh:
        fh.truncate(offset + size)
    pf = PyFat(offset=offset)
    pf.mkfs(str(path), FAT_TYPES[variant], size=size, label="NO NAME")
    pf.close()
    if mbr_start_lba is not None:
        write_mbr(path, mbr_start_lba, size // 512)
    return offset


def write_files(path, files: dict[str, bytes], offset: int = 0):
    from pyfatfs.PyFatFS import PyFatFS

    fs = PyFatFS(str(path), offset=offset, utc=True)
    try:
        for fpath, data in files.items():
            parent = fpath.rsplit("/", 1)[0]
            if parent:
                fs.makedirs(parent, recreate=True)
            fs.writebytes(fpath, data)
    finally:
        fs.close()


def delete_file(path, fs_path: str, offset: int = 0):
    """Delete the way an OS does: tombstone the entries, free the chain, keep the data."""
    from pyfatfs.PyFatFS import PyFatFS

    fs = PyFatFS(str(path), offset=offset, utc=True)
    try:
        entry = fs._get_dir_entry(fs_path)
        blob = bytes(entry)
        cluster = entry.get_cluster()
        if cluster:
            fs.fs.free_cluster_chain(cluster)
            fs.fs.flush_fat()
    finally:
        fs.close()

    with open(path, "r+b") as fh:
        image = fh.read()
        pos = image.find(blob, offset)
        if pos < 0 or image.find(blob, pos + 1) >= 0:
            raise RuntimeError(f"could not locate a unique directory entry for {fs_path}")
        for rec in range(pos, pos + len(blob), 32):
            fh.seek(rec)
            fh.write(b"\xe5")


@dataclass
class PlantedFile:
    path: str
    data: bytes
    deleted: bool = False

    @property
    def sha256(self) -> str:
        return sha256(self.data)


@dataclass
class CardImage:
    path: Path
    variant: str
    volume_offset: int
    files: list[PlantedFile] = field(default_factory=list)

    def allocated(self) -> list[PlantedFile]:
        return [f for f in self.files if not f.deleted]

    def deleted(self) -> list[PlantedFile]:
        return [f for f in self.files if f.deleted]


def build_image(path, variant: str, size: int, files: dict[str, bytes], delete: tuple[str, ...] = (),
                mbr_start_lba: int | None = None) -> CardImage:
    path = Path(path)
    offset = format_image(path, variant, size, mbr_start_lba)
    write_files(path, files, offset)
    for fpath in delete:
        delete_file(path, fpath, offset)
    planted = [PlantedFile(p, d, p in delete) for p, d in files.items()]
    return CardImage(path, variant, offset, planted)


def random_corpus(seed: int, count: int, max_size: int = 5 << 20, big_files: int = 2) -> dict[str, bytes]:
    """Mixed tree of ``count`` files, sizes from 0 B up to ``max_size``."""
    rng = random.Random(seed)
    dirs = ["", "/DCIM", "/DCIM/Camera", "/Documents", "/Sounds", "/Videos/long folder name"]
    out: dict[str, bytes] = {}
    sizes = [0, 1, 511, 512, 513] + [max_size] * big_files
    while len(sizes) < count:
        sizes.append(rng.choice([rng.randrange(1, 4096), rng.randrange(4096, 200_000)]))
    for i, n in enumerate(sizes[:count]):
        d = rng.choice(dirs)
        if i % 3 == 0:
            name = f"File number {i} with a long name.bin"
        else:
            name = f"F{i:05d}.DAT"
        out[f"{d}/{name}"] = rng.randbytes(n)
    return out


# -- a phone memory card -----------------------------------------------------

@dataclass
class PhoneCard:
    image: CardImage
    key: bytes
    iv: bytes
    bbb_path: Path
    bbb_entry: str
    stores: dict[str, list[Msg]]
    current_name: str
    pictures: dict[str, bytes]


SCENARIO_CONTACT = "31621312345@s.whatsapp.net"
SCENARIO_DELETED_TS = 1393251314000  # 2014-02-24 14:15:14 UTC
SCENARIO_BACKUP = "messagestore.db.d.1393504046326.bak"


def build_phone_card(workdir, seed: int = 7, mode: str = "aes_cbc", key_len: int = 32) -> PhoneCard:
    """BlackBerry-style card: encrypted current store, dated backups, pictures.

    The message only present in ``SCENARIO_BACKUP`` is the deleted one; a deleted
    JPEG and a deleted earlier backup are left for the recovery paths.
    """
    workdir = Path(workdir)
    workdir.mkdir(parents=True, exist_ok=True)
    rng = random.Random(seed)
    key = bytes(rng.randrange(256) for _ in range(key_len))
    iv = bytes(rng.randrange(256) for _ in range(16))

    bob = "31687654321@s.whatsapp.net"
    group = "31611111111-1392000000@g.us"
    base = [
        Msg(SCENARIO_CONTACT, 1, "Hoi, ben je thuis?", 1392197000000),
        Msg(SCENARIO_CONTACT, 0, "Ja <b>kom maar</b> & bel aan", 1392197060000),
        Msg(bob, 0, None, 1392198000000, media_name="IMG0001.JPG", thumb=make_jpeg(seed + 100, (16, 12))),
        Msg(group, 1, "group hello", 1392199000000),
    ]
    later = [
        Msg(bob, 1, "nice picture", 1393000000000),
        Msg(SCENARIO_CONTACT, 1, "see you tomorrow", 1393251300),  # seconds on purpose
    ]
    deleted_msg = Msg(SCENARIO_CONTACT, 0, "delete this after reading", SCENARIO_DELETED_TS)
    missing_media = Msg(bob, 0, None, 1393300000000, media_name="IMG0099.JPG", thumb=make_jpeg(seed + 101, (16, 12)))
    stores = {
        "messageStore.db.w.1392197250043.bak": base,
        SCENARIO_BACKUP: base + later + [deleted_msg],
        "messagestore.db": base + later + [missing_media],
    }
    current_name = "messagestore.db"

    pictures = {
        "/BlackBerry/pictures/IMG0001.JPG": make_jpeg(seed + 1, (96, 64)),
        "/BlackBerry/pictures/IMG0002.JPG": make_jpeg(seed + 2, (80, 60)),
        "/BlackBerry/pictures/IMG0003.PNG": make_png(seed + 3),
    }
    files: dict[str, bytes] = dict(pictures)
    for name, msgs in stores.items():
        files[f"/WhatsApp/{name}"] = encrypt_store(make_message_store(msgs), key, mode, iv if mode == "aes_cbc" else None)
    # a backup that was later removed from the card
    early = "messageStore.db.w.1392100000000.bak"
    files[f"/WhatsApp/{early}"] = encrypt_store(make_message_store(base[:2]), key, mode, iv if mode == "aes_cbc" else None)
    files["/BlackBerry/system/key.dat"] = bytes(rng.randrange(256) for _ in range(48))
    files["/BlackBerry/pictures/thumb.dat"] = make_thumb_dat([make_jpeg(seed + 10 + i, (20, 16)) for i in range(3)], seed)
    files["/BlackBerry/voicenotes/VN0001.AMR"] = reference_media("voice.amr")
    files["/Documents/notes.txt"] = b"meeting at the harbour, 10:00\n"
    files["/DCIM/DELETED1.JPG"] = make_jpeg(seed + 20, (72, 54))

    image = build_image(
        workdir / "card.dd", "FAT16", 32 << 20, files,
        delete=("/DCIM/DELETED1.JPG", f"/WhatsApp/{early}"),
        mbr_start_lba=2048,
    )
    bbb_entry = "Databases/WhatsApp/key.bin"
    bbb_path = workdir / "device.bbb"
    make_bbb(bbb_path, bbb_entry, key)
    return PhoneCard(image, key, iv, bbb_path, bbb_entry, stores, current_name, pictures)
