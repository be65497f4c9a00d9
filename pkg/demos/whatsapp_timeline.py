"""
Rebuilding a WhatsApp timeline from encrypted stores
====================================================

The phone card fixture carries an encrypted current store plus dated
backups. Decrypt each one, merge them and look at what the current store
no longer has.
"""

import tempfile

from memcard.fixtures import build_phone_card, encrypt_store, make_message_store
from memcard.report import format_timestamp
from memcard.sqlite import open_db
from memcard.wa_crypto import EncryptedStore, KeyMaterial, decrypt_store, detect_scheme
from memcard.wa_merge import MessageStoreSet, classify_store_file, extract_messages, merge

card = build_phone_card(tempfile.mkdtemp(prefix="memcard-demo-"))
key = KeyMaterial(card.key, card.iv, cipher_mode="aes_cbc")

stores = MessageStoreSet()
for name, msgs in card.stores.items():
    blob = encrypt_store(make_message_store(msgs), card.key, "aes_cbc", card.iv)
    print(name, "->", detect_scheme(name, blob[:16]))
    plain = decrypt_store(EncryptedStore(name, blob), key)
    prov = classify_store_file(name)
    stores.add(prov, extract_messages(open_db(plain), prov))

# oldest backup first, the current store last
print([p.filename for p in stores.inventory])

timeline = merge(stores)
print(f"{timeline.message_count} messages, {timeline.deleted_count} deleted")
for jid, msgs in timeline.contacts:
    print(jid)
    for m in msgs:
        flag = "DELETED" if m.deleted else ""
        print(f"  {format_timestamp(m.timestamp_ms)} {m.direction:8} {m.data or m.media_name!s:30} {m.source_db} {flag}")

# a wrong key is caught by the SQLite header check
wrong = KeyMaterial(bytes(32), card.iv, cipher_mode="aes_cbc")
try:
    decrypt_store(EncryptedStore("messagestore.db", encrypt_store(make_message_store([]), card.key, "aes_cbc", card.iv)), wrong)
except ValueError as exc:
    print("rejected:", exc)
