import logging
import os

import pytest

from memcard.fixtures import Msg, encrypt_store, make_bbb, make_message_store, sha256
from memcard.wa_crypto import (
    DecryptionError,
    EncryptedStore,
    KeyMaterial,
    KeyMaterialError,
    UnsupportedSchemeError,
    aes_decrypt,
    decrypt_store,
    detect_scheme,
    load_key_material,
)

# NIST SP 800-38A, appendix F
SP800_PLAIN = bytes.fromhex(
    "6bc1bee22e409f96e93d7e117393172aae2d8a571e03ac9c9eb76fac45af8e51"
    "30c81c46a35ce411e5fbc1191a0a52eff69f2445df4f9b17ad2b417be66c3710"
)
SP800_ECB = {
    "2b7e151628aed2a6abf7158809cf4f3c":
        "3ad77bb40d7a3660a89ecaf32466ef97f5d3d58503b9699de785895a96fdbaaf"
        "43b1cd7f598ece23881b00e3ed0306887b0c785e27e8ad3f8223207104725dd4",
    "8e73b0f7da0e6452c810f32b809079e562f8ead2522c6b7b":
        "bd334f1d6e45f25ff712a214571fa5cc974104846d0ad3ad7734ecb3ecee4eef"
        "ef7afd2270e2e60adce0ba2face6444e9a4b41ba738d6c72fb16691603c18e0e",
    "603deb1015ca71be2b73aef0857d77811f352c073b6108d72d9810a30914dff4":
        "f3eed1bdb5d2a03c064b5a7e3db181f8591ccb10d410ed26dc5ba74a31362870"
        "b6ed21b99ca6f4f9f153e7b1beafed1d23304b7a39f9f3ff067d8d8f9e24ecc7",
}
SP800_CBC128 = (
    "7649abac8119b246cee98e9b12e9197d5086cb9b507219ee95db113a917678b2"
    "73bed6b8e3c1743b7116e69e222295163ff1caa1681fac09120eca307586e1a7"
)

STORE = "messageStore.db.w.1392197250043.bak"


@pytest.fixture(scope="module")
def plaintext():
    return make_message_store([Msg("31611111111@s.whatsapp.net", 1, "hello", 1392197250043)])


@pytest.mark.parametrize("key", sorted(SP800_ECB))
def test_known_answer_ecb(key):
    km = KeyMaterial(bytes.fromhex(key), None, cipher_mode="aes_ecb")
    assert aes_decrypt(bytes.fromhex(SP800_ECB[key]), km) == SP800_PLAIN


def test_known_answer_cbc():
    km = KeyMaterial(bytes.fromhex("2b7e151628aed2a6abf7158809cf4f3c"), bytes(range(16)), cipher_mode="aes_cbc")
    assert aes_decrypt(bytes.fromhex(SP800_CBC128), km) == SP800_PLAIN


def test_raw_key_file(tmp_path):
    key = os.urandom(32)
    (tmp_path / "k.bin").write_bytes(key)
    assert load_key_material(tmp_path / "k.bin", "aes_ecb").key_bytes == key


def test_hex_key_file(tmp_path):
    key = os.urandom(32)
    (tmp_path / "k.hex").write_text(key.hex().upper() + "\n")
    km = load_key_material(tmp_path / "k.hex", "aes_cbc", iv_hex="00" * 16)
    assert km.key_bytes == key and km.source == "raw_key_file"


def test_bbb_container(tmp_path):
    key = os.urandom(24)
    make_bbb(tmp_path / "dev.bbb", "Databases/WhatsApp/key.bin", key)
    km = load_key_material(tmp_path / "dev.bbb", "aes_ecb", "Databases/WhatsApp/key.bin")
    assert km.key_bytes == key and km.source == "bbb_container"


def test_bbb_missing_entry(tmp_path):
    make_bbb(tmp_path / "dev.bbb", "a/key.bin", os.urandom(16))
    with pytest.raises(KeyMaterialError, match="entry missing"):
        load_key_material(tmp_path / "dev.bbb", "aes_ecb", "b/key.bin")


def test_unreadable_container(tmp_path):
    (tmp_path / "bad.bbb").write_bytes(b"PK\x03\x04 broken")
    with pytest.raises(KeyMaterialError):
        load_key_material(tmp_path / "bad.bbb", "aes_ecb", "x")


def test_bad_key_length(tmp_path):
    (tmp_path / "k").write_bytes(os.urandom(20))
    with pytest.raises(KeyMaterialError, match="bad key length"):
        load_key_material(tmp_path / "k", "aes_ecb")


def test_key_not_in_repr():
    key = bytes(range(16))
    km = KeyMaterial(key, bytes(16), cipher_mode="aes_cbc")
    assert key.hex() not in repr(km) and str(key) not in repr(km)


@pytest.mark.parametrize("key_len", [16, 24, 32])
@pytest.mark.parametrize("mode", ["aes_cbc", "aes_ecb"])
def test_round_trip(plaintext, key_len, mode):
    key, iv = os.urandom(key_len), os.urandom(16) if mode == "aes_cbc" else None
    store = EncryptedStore(STORE, encrypt_store(plaintext, key, mode, iv))
    assert sha256(decrypt_store(store, KeyMaterial(key, iv, cipher_mode=mode))) == sha256(plaintext)


def test_flipped_key_byte_rejected(plaintext):
    key, iv = os.urandom(32), os.urandom(16)
    store = EncryptedStore(STORE, encrypt_store(plaintext, key, "aes_cbc", iv))
    wrong = bytes([key[0] ^ 1]) + key[1:]
    with pytest.raises(DecryptionError, match="wrong key or mode"):
        decrypt_store(store, KeyMaterial(wrong, iv, cipher_mode="aes_cbc"))


def test_wrong_mode_rejected(plaintext):
    key = os.urandom(16)
    store = EncryptedStore(STORE, encrypt_store(plaintext, key, "aes_ecb"))
    with pytest.raises(DecryptionError):
        decrypt_store(store, KeyMaterial(key, os.urandom(16), cipher_mode="aes_cbc"))


@pytest.mark.parametrize("name", ["msgstore.db.crypt7", "msgstore.db.crypt5"])
def test_android_refused(name):
    with pytest.raises(UnsupportedSchemeError, match="unsupported: account-bound Android scheme"):
        decrypt_store(EncryptedStore(name, os.urandom(64)), KeyMaterial(os.urandom(16), None, cipher_mode="aes_ecb"))


def test_bad_padding_warns_but_keeps_data(plaintext, caplog):
    key = os.urandom(16)
    # no padding at all: length already a block multiple
    body = plaintext[: len(plaintext) // 16 * 16]
    body = body[:-1] + b"\x00"
    from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes

    enc = Cipher(algorithms.AES(key), modes.ECB()).encryptor()
    store = EncryptedStore(STORE, enc.update(body) + enc.finalize())
    with caplog.at_level(logging.WARNING):
        assert decrypt_store(store, KeyMaterial(key, None, cipher_mode="aes_ecb")) == body
    assert "PKCS#7" in caplog.text


def test_ragged_ciphertext():
    with pytest.raises(DecryptionError):
        decrypt_store(EncryptedStore(STORE, b"x" * 33), KeyMaterial(os.urandom(16), None, cipher_mode="aes_ecb"))


@pytest.mark.parametrize("name,head,scheme", [
    ("msgstore.db.crypt5", b"", "android_crypt5"),
    ("/sd/WhatsApp/Databases/msgstore-2014-02-01.1.db.crypt7", b"\x00" * 32, "android_crypt7"),
    ("messagestore.db", b"SQLite format 3\x00", "unknown"),
    ("messageStore.db.w.1392197250043.bak", os.urandom(32).replace(b"S", b"s"), "blackberry"),
    ("photo.jpg", b"\xff\xd8\xff", "unknown"),
])
def test_detect_scheme(name, head, scheme):
    assert detect_scheme(name, head) == scheme


def test_plaintext_noted():
    store = EncryptedStore("messagestore.db", b"SQLite format 3\x00" + bytes(100))
    assert store.note == "already plaintext"
