import logging

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from memcard.fixtures import SCENARIO_BACKUP, SCENARIO_CONTACT, SCENARIO_DELETED_TS, Msg, make_message_store
from memcard.sqlite import open_db
from memcard.wa_merge import (
    CONFLICT,
    DbProvenance,
    MessageStoreSet,
    StoreFormatError,
    WaMessage,
    classify_store_file,
    classify_store_files,
    extract_messages,
    merge,
    merge_oracle,
    phone_number,
)

CURRENT = DbProvenance("messagestore.db", "current")


def test_classify_store_names():
    s = classify_store_files(["messagestore.db", "messageStore.db.w.1392197250043.bak"])
    assert s.current.provenance == CURRENT
    assert [e.provenance.backup_epoch_ms for e in s.backups] == [1392197250043]
    s = classify_store_files([SCENARIO_BACKUP])
    assert s.current is None and s.backups[0].provenance.backup_epoch_ms == 1393504046326


def test_classify_empty():
    s = classify_store_files([])
    assert s.current is None and s.backups == [] and s.ordered() == []


def test_classify_ignores_and_warns(caplog):
    with caplog.at_level(logging.WARNING):
        s = classify_store_files(["notes.txt", "messagestore.db.w.12ab.bak", "msgstore.db.crypt7"])
    assert s.ordered() == []
    assert "not numeric" in caplog.text


def test_backups_sorted_by_epoch():
    s = classify_store_files(["messagestore.db.d.1393504046326.bak", "MESSAGESTORE.DB",
                              "messageStore.db.w.1392197250043.bak", "messagestore.db.w.1392100000000.bak"])
    assert [e.provenance.filename for e in s.ordered()] == [
        "messagestore.db.w.1392100000000.bak", "messageStore.db.w.1392197250043.bak",
        "messagestore.db.d.1393504046326.bak", "MESSAGESTORE.DB"]


def test_recovered_and_decrypted_names():
    assert classify_store_file("_essageStore.db.w.1392100000000.bak").backup_epoch_ms == 1392100000000
    assert classify_store_file("messageStore.db_dec").kind == "current"


def test_extract_messages_ground_truth():
    truth = [
        Msg("31611111111@s.whatsapp.net", 0, "a", 1392197250043),
        Msg("31611111111@s.whatsapp.net", 1, "b", 1392197260043),
        Msg("31622222222@s.whatsapp.net", 0, None, 1392197270043, media_name="IMG0001.JPG", thumb=b"\xff\xd8\xffthumb"),
        Msg("31622222222@s.whatsapp.net", 1, "d", 1392197280),
        Msg("31622222222@s.whatsapp.net", 0, "e", 1392197290043),
    ]
    msgs = extract_messages(open_db(make_message_store(truth)), CURRENT)
    assert [(m.key_remote_jid, m.key_from_me, m.data, m.media_name, m.media_thumb) for m in msgs] == [
        (t.jid, t.from_me, t.data, t.media_name, t.thumb) for t in truth]
    assert [m.timestamp_ms for m in msgs] == [1392197250043, 1392197260043, 1392197270043, 1392197280000,
                                              1392197290043]
    assert msgs[1].direction == "outgoing" and {m.source_db for m in msgs} == {"messagestore.db"}


def test_extract_empty_table():
    assert extract_messages(open_db(make_message_store([])), CURRENT) == []


def test_missing_column_named(tmp_path):
    import sqlite3

    path = tmp_path / "m.db"
    con = sqlite3.connect(path)
    con.execute("CREATE TABLE messages (_id INTEGER PRIMARY KEY, key_remote_jid, key_from_me, data)")
    con.commit()
    con.close()
    with pytest.raises(StoreFormatError, match="timestamp"):
        extract_messages(open_db(path.read_bytes()), CURRENT)


def _m(jid, ts, data="x", me=0):
    return WaMessage(jid, me, data, ts)


def _set(*stores):
    s = MessageStoreSet()
    for prov, msgs in stores:
        s.add(prov, msgs)
    return s


def test_current_and_backup_message_not_deleted():
    b1 = DbProvenance("messagestore.db.w.1.bak", "backup", 1)
    t = merge(_set((b1, [_m("a@s.whatsapp.net", 5)]), (CURRENT, [_m("a@s.whatsapp.net", 5)])))
    (msg,) = t.messages()
    assert (msg.source_db, msg.deleted) == ("messagestore.db", False)


def test_backup_only_message_deleted():
    b1 = DbProvenance("messageStore.db.w.1392197250043.bak", "backup", 1392197250043)
    b2 = DbProvenance(SCENARIO_BACKUP, "backup", 1393504046326)
    common = _m(SCENARIO_CONTACT, 1392197000000)
    gone = _m(SCENARIO_CONTACT, SCENARIO_DELETED_TS, "bye")
    t = merge(_set((b1, [common]), (b2, [common, gone]), (CURRENT, [common])))
    by_ts = {m.timestamp_ms: m for m in t.messages()}
    assert (by_ts[SCENARIO_DELETED_TS].source_db, by_ts[SCENARIO_DELETED_TS].deleted) == (SCENARIO_BACKUP, True)
    assert (by_ts[1392197000000].source_db, by_ts[1392197000000].deleted) == ("messagestore.db", False)


def test_self_merge_idempotent():
    msgs = [_m("a@s.whatsapp.net", i, f"t{i}") for i in range(5)]
    once = merge(_set((CURRENT, msgs)))
    twice = merge(_set((DbProvenance("messagestore.db.w.1.bak", "backup", 1), msgs), (CURRENT, msgs)))
    assert [m for m in once.messages()] == [m for m in twice.messages()]


def test_no_current_store_indeterminate():
    t = merge(_set((DbProvenance("messagestore.db.w.1.bak", "backup", 1), [_m("a@x", 1)])))
    assert [m.deleted for m in t.messages()] == [None]


def test_conflict_annotated_latest_text_wins():
    b1 = DbProvenance("messagestore.db.w.1.bak", "backup", 1)
    t = merge(_set((b1, [_m("a@x", 1, "old")]), (CURRENT, [_m("a@x", 1, "new")])))
    (msg,) = t.messages()
    assert msg.data == "new" and msg.annotations == (CONFLICT,)


def test_contacts_and_messages_ordered():
    t = merge(_set((CURRENT, [_m("b@x", 3), _m("a@x", 2), _m("b@x", 1)])))
    assert [jid for jid, _ in t.contacts] == ["a@x", "b@x"]
    assert [m.timestamp_ms for m in t.contacts[1][1]] == [1, 3]


def test_phone_number():
    assert phone_number("31621312345@s.whatsapp.net") == "31621312345"
    assert phone_number("31611111111-1392000000@g.us") == "31611111111-1392000000@g.us"


def test_oracle_empty_and_single():
    assert merge_oracle(MessageStoreSet()).contacts == ()
    s = _set((CURRENT, [_m("a@x", 1), _m("b@x", 2)]))
    assert {m.source_db for m in merge_oracle(s).messages()} == {"messagestore.db"}


# small alphabets force key collisions across stores
_msg = st.builds(_m, st.sampled_from(["1@s.whatsapp.net", "2@s.whatsapp.net", "g@g.us"]),
                 st.integers(1, 12), st.sampled_from(["x", "y", None]), st.integers(0, 1))


@st.composite
def store_sets(draw):
    n = draw(st.integers(0, 7))
    has_current = n > 0 and draw(st.booleans())
    epochs = draw(st.lists(st.integers(10**12, 10**12 + 50), min_size=n, max_size=n))
    s = MessageStoreSet()
    for i, epoch in enumerate(epochs):
        msgs = draw(st.lists(_msg, max_size=12))
        if has_current and i == n - 1:
            s.add(CURRENT, msgs)
        elif draw(st.integers(0, 9)) == 0:
            s.add(DbProvenance(f"sqlite_{i:08x}.db", "carved"), msgs)
        else:
            s.add(DbProvenance(f"messagestore.db.w.{epoch}.bak{i}", "backup", epoch), msgs)
    return s


@settings(max_examples=200, deadline=None)
@given(store_sets())
def test_merge_equals_oracle(stores):
    assert merge(stores) == merge_oracle(stores)


@settings(max_examples=100, deadline=None)
@given(store_sets())
def test_merge_invariants(stores):
    t = merge(stores)
    names = {p.filename for p in t.source_inventory}
    current = {m.key for m in stores.current.messages} if stores.current else None
    last_seen = {}
    for e in stores.ordered():
        for m in e.messages:
            last_seen[m.key] = e.provenance.filename
    for jid, msgs in t.contacts:
        assert [m.timestamp_ms for m in msgs] == sorted(m.timestamp_ms for m in msgs)
        assert len({m.key for m in msgs}) == len(msgs)
        for m in msgs:
            assert m.key_remote_jid == jid and m.source_db in names
            assert m.source_db == last_seen[m.key]
            if m.deleted:
                assert m.key not in current
