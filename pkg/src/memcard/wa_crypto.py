"""Decryption of BlackBerry WhatsApp message stores.

The cipher parameters (mode, key, IV, where the key lives inside a ``.bbb``
backup) are supplied by configuration rather than hard-coded. Android
crypt5/crypt7 stores are recognised and refused: their keys are bound to
the user's account.
"""

from __future__ import annotations

import logging
import re
import string
import zipfile
from dataclasses import dataclass, field
from pathlib import Path

from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes

from .sqlite import MAGIC as SQLITE_MAGIC

logger = logging.getLogger(__name__)

KEY_LENGTHS = (16, 24, 32)
CIPHER_MODES = ("aes_ecb", "aes_cbc")
SCHEMES = ("blackberry", "android_crypt5", "android_crypt7", "unknown")

# "_" stands for the lost first letter of a recovered deleted entry
_STORE_NAME = re.compile(r"^[m_]essagestore\.db(\..+)?$", re.I)
_HEX = set(string.hexdigits.encode())


class KeyMaterialError(ValueError):
    pass


class UnsupportedSchemeError(ValueError):
    pass


class DecryptionError(ValueError):
    pass


@dataclass(frozen=True)
class KeyMaterial:
    key_bytes: bytes = field(repr=False)
    iv: bytes | None = field(default=None, repr=False)
    source: str = "raw_key_file"
    cipher_mode: str = "aes_cbc"

    def __post_init__(self):
        if len(self.key_bytes) not in KEY_LENGTHS:
            raise KeyMaterialError(f"bad key length {len(self.key_bytes)} (expected 16, 24 or 32 bytes)")
        if self.cipher_mode not in CIPHER_MODES:
            raise KeyMaterialError(f"unknown cipher mode {self.cipher_mode!r}")
        if self.cipher_mode == "aes_cbc" and (self.iv is None or len(self.iv) != 16):
            raise KeyMaterialError("aes_cbc needs a 16-byte IV")
        if self.cipher_mode == "aes_ecb" and self.iv is not None:
            raise KeyMaterialError("aes_ecb takes no IV")
        if self.source not in ("raw_key_file", "bbb_container"):
            raise KeyMaterialError(f"unknown key source {self.source!r}")


def decode_key_bytes(raw: bytes) -> bytes:
    """Binary keys are taken verbatim; hex text (either case) is decoded."""
    if len(raw) in KEY_LENGTHS and not set(raw) <= _HEX:
        return raw
    text = raw.strip()
    if text and len(text) % 2 == 0 and set(text) <= _HEX and len(text) // 2 in KEY_LENGTHS:
        return bytes.fromhex(text.decode("ascii"))
    if len(raw) in KEY_LENGTHS:
        return raw
    raise KeyMaterialError(f"bad key length: {len(raw)} bytes is neither a raw nor a hex-encoded AES key")


def load_key_material(path, cipher_mode: str = "aes_cbc", key_path_inside_container: str | None = None,
                      iv_hex: str | None = None) -> KeyMaterial:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"key material not found: {path}")
    iv = bytes.fromhex(iv_hex) if iv_hex else None

    if path.suffix.lower() == ".bbb" or zipfile.is_zipfile(path):
        if not key_path_inside_container:
            raise KeyMaterialError("a .bbb container needs the key entry path (wa.bbb_key_entry)")
        try:
            with zipfile.ZipFile(path) as zf:
                try:
                    raw = zf.read(key_path_inside_container)
                except KeyError:
                    raise KeyMaterialError(f"container entry missing: {key_path_inside_container}") from None
        except zipfile.BadZipFile as exc:
            raise KeyMaterialError(f"unreadable container {path.name}: {exc}") from None
        return KeyMaterial(decode_key_bytes(raw), iv, "bbb_container", cipher_mode)

    return KeyMaterial(decode_key_bytes(path.read_bytes()), iv, "raw_key_file", cipher_mode)


def is_plaintext(head: bytes) -> bool:
    return head.startswith(SQLITE_MAGIC)


def detect_scheme(filename: str, head: bytes) -> str:
    name = filename.rsplit("/", 1)[-1].lower()
    if name.endswith(".crypt5"):
        return "android_crypt5"
    if name.endswith(".crypt7"):
        return "android_crypt7"
    if is_plaintext(head):
        return "unknown"
    if _STORE_NAME.match(name):
        return "blackberry"
    return "unknown"


@dataclass(frozen=True)
class EncryptedStore:
    filename: str
    data: bytes = field(repr=False)

    @property
    def scheme_guess(self) -> str:
        return detect_scheme(self.filename, self.data[:32])

    @property
    def note(self) -> str:
        if self.scheme_guess == "unknown" and is_plaintext(self.data[:32]):
            return "already plaintext"
        return ""


def aes_decrypt(data: bytes, key: KeyMaterial) -> bytes:
    """Raw block decryption, no padding or magic checks."""
    mode = modes.CBC(key.iv) if key.cipher_mode == "aes_cbc" else modes.ECB()
    dec = Cipher(algorithms.AES(key.key_bytes), mode).decryptor()
    return dec.update(data) + dec.finalize()


def _strip_pkcs7(data: bytes, filename: str) -> bytes:
    if data:
        n = data[-1]
        if 1 <= n <= 16 and len(data) >= n and data[-n:] == bytes([n]) * n:
            return data[:-n]
    logger.warning("%s: invalid PKCS#7 padding, keeping raw tail", filename)
    return data


def decrypt_store(store: EncryptedStore, key: KeyMaterial) -> bytes:
    scheme = store.scheme_guess
    if scheme.startswith("android_"):
        raise UnsupportedSchemeError(
            f"unsupported: account-bound Android scheme ({scheme}) for {store.filename}"
        )
    if scheme != "blackberry":
        raise UnsupportedSchemeError(
            f"{store.filename} is not a BlackBerry message store ({store.note or 'unrecognised name'})"
        )
    data = store.data
    if not data or len(data) % 16:
        raise DecryptionError(f"{store.filename}: ciphertext length {len(data)} is not a multiple of 16")
    plain = aes_decrypt(data, key)
    if not is_plaintext(plain):
        raise DecryptionError(f"{store.filename}: wrong key or mode")
    return _strip_pkcs7(plain, store.filename)
