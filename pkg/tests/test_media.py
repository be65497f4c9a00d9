import logging
import shlex
import sys

from memcard.artifacts import FileArtifact, sha256_bytes
from memcard.fixtures import make_jpeg, make_thumb_dat, reference_media
from memcard.media import extract_thumbs, transcode, transcode_all

PY = shlex.quote(sys.executable)
COPY = PY + " -c 'import shutil,sys; shutil.copyfile(sys.argv[1], sys.argv[2])' {in} {out}"
FAIL = PY + " -c 'raise SystemExit(1)' {in} {out}"


def test_three_thumbs_hash_equal():
    jpegs = [make_jpeg(i, (20 + i, 16)) for i in range(3)]
    got = extract_thumbs(make_thumb_dat(jpegs))
    assert [sha256_bytes(t.jpeg_bytes) for t in got] == [sha256_bytes(j) for j in jpegs]
    assert [t.index for t in got] == [0, 1, 2]


def test_truncated_thumb_excluded(caplog):
    jpegs = [make_jpeg(i) for i in range(3)]
    blob = make_thumb_dat([jpegs[0], jpegs[1][:-40], jpegs[2]])
    with caplog.at_level(logging.WARNING):
        got = extract_thumbs(blob)
    assert [t.jpeg_bytes for t in got] == [jpegs[0], jpegs[2]]
    assert "no end marker" in caplog.text


def test_no_thumbs():
    assert extract_thumbs(b"THMB" + bytes(200)) == []
    assert extract_thumbs(b"") == []


def _audio(out_dir):
    data = reference_media("voice.amr")
    (out_dir / "audio").mkdir()
    (out_dir / "audio" / "VN0001.AMR").write_bytes(data)
    return FileArtifact("/BlackBerry/voicenotes/VN0001.AMR", "audio", sha256_bytes(data), len(data),
                        "allocated", "audio/VN0001.AMR"), data


def test_transcode_writes_sibling(tmp_path):
    art, data = _audio(tmp_path)
    conv = transcode(art, COPY, tmp_path)
    assert conv.output_path == "audio/VN0001.wma"
    assert (tmp_path / "audio/VN0001.wma").read_bytes() == data
    assert (tmp_path / "audio/VN0001.AMR").read_bytes() == data
    assert (conv.source_path, conv.origin) == (art.source_path, art.origin)


def test_transcode_without_command(tmp_path):
    art, _ = _audio(tmp_path)
    assert transcode(art, None, tmp_path) is None
    assert transcode_all([art], "", tmp_path) == []


def test_transcode_failure_warns(tmp_path, caplog):
    art, data = _audio(tmp_path)
    with caplog.at_level(logging.WARNING):
        assert transcode(art, FAIL, tmp_path) is None
    assert "exit status 1" in caplog.text
    assert sorted(p.name for p in (tmp_path / "audio").iterdir()) == ["VN0001.AMR"]


def test_missing_converter(tmp_path, caplog):
    art, _ = _audio(tmp_path)
    with caplog.at_level(logging.WARNING):
        assert transcode(art, "/nonexistent/converter {in} {out}", tmp_path) is None
    assert "failed" in caplog.text


def test_transcode_all_distinct_names(tmp_path):
    data = reference_media("voice.amr")
    (tmp_path / "audio").mkdir()
    arts = []
    for name in ("A.AMR", "A.amr3", "B.AMR"):
        (tmp_path / "audio" / name).write_bytes(data)
        arts.append(FileArtifact("/x/" + name, "audio", sha256_bytes(data), len(data), "allocated", "audio/" + name))
    (tmp_path / "audio" / "C.jpg").write_bytes(b"")
    arts.append(FileArtifact("/x/C.jpg", "pictures", sha256_bytes(b""), 0, "allocated", "audio/C.jpg"))
    out = transcode_all(arts, COPY, tmp_path, workers=3)
    names = [a.output_path for a in out]
    assert len(names) == 3 and len({n.lower() for n in names}) == 3
    assert all(n.endswith(".wma") for n in names)
