import errno
import json
import re

import pytest

from conftest import run_cli
from memcard import cli
from memcard.cli import ConfigError, build_parser, main, validate_config


def _args(*argv):
    return build_parser().parse_args(list(argv))


def test_precedence_flag_env_file(tmp_path):
    img = tmp_path / "card.dd"
    img.write_bytes(bytes(512))
    conf = tmp_path / "memcard.conf"
    conf.write_text(f"# settings\nimage = {img}\ncase_number = FILE\nexaminer = file\nworkers = 2\nsector_size = 4096\n")
    env = {"MEMCARD_CASE_NUMBER": "ENV", "MEMCARD_EXAMINER": "env", "MEMCARD_CONFIG": str(conf)}
    cfg = validate_config(_args("--out", str(tmp_path / "o"), "--examiner", "flag"), env)
    assert (cfg.examiner, cfg.case_number, cfg.workers, cfg.sector_size) == ("flag", "ENV", 2, 4096)
    assert "config examiner = flag (flag)" in cfg.echo
    assert "config case_number = ENV (env)" in cfg.echo
    assert "config workers = 2 (file)" in cfg.echo
    assert "config carve = True (default)" in cfg.echo


def test_unknown_config_key(tmp_path):
    conf = tmp_path / "c.conf"
    conf.write_text("colour = blue\n")
    with pytest.raises(ConfigError, match="unknown"):
        validate_config(_args("--config", str(conf)), {})


def test_missing_case_number(phone_card, tmp_path, capsys):
    rc = main(["--image", str(phone_card.image.path), "--out", str(tmp_path / "o")], env={})
    assert rc == cli.EXIT_CONFIG
    assert "case number" in capsys.readouterr().err
    assert not (tmp_path / "o").exists()


def test_absent_key_fails_before_work(phone_card, tmp_path):
    out = tmp_path / "o"
    rc = run_cli(phone_card, out, key=False, env={"MEMCARD_KEY": str(tmp_path / "nokey.bin")})
    assert rc == cli.EXIT_CONFIG and not out.exists()


def test_key_and_bbb_conflict(phone_card, tmp_path):
    key = tmp_path / "k.bin"
    key.write_bytes(phone_card.key)
    assert run_cli(phone_card, tmp_path / "o", "--key", str(key)) == cli.EXIT_CONFIG


@pytest.mark.parametrize("flag,value", [("--sector-size", "1000"), ("--workers", "0")])
def test_bad_numbers(phone_card, tmp_path, flag, value):
    assert run_cli(phone_card, tmp_path / "o", flag, value) == cli.EXIT_CONFIG


def test_existing_manifest_refused(phone_card, tmp_path):
    out = tmp_path / "o"
    out.mkdir()
    (out / "manifest.json").write_text("[]")
    assert run_cli(phone_card, out) == cli.EXIT_CONFIG
    assert (out / "manifest.json").read_text() == "[]"


def test_unreadable_image(tmp_path):
    rc = main(["--image", str(tmp_path / "missing.dd"), "--out", str(tmp_path / "o"), "--case-number", "1"], env={})
    assert rc == cli.EXIT_IMAGE
    log = (tmp_path / "o" / "run.log").read_text()
    assert "stage=image status=degraded" in log and "stage=report status=skipped" in log


def test_garbage_image_degrades(tmp_path, fixed_clock):
    img = tmp_path / "noise.dd"
    img.write_bytes(bytes(range(256)) * 64)
    rc = main(["--image", str(img), "--out", str(tmp_path / "o"), "--case-number", "1"], env={})
    assert rc == cli.EXIT_OK
    doc = json.loads((tmp_path / "o" / "report.json").read_text())
    assert {s["name"]: s["status"] for s in doc["stages"]}["triage"] == "skipped"


@pytest.fixture(scope="module")
def full_run(phone_card, tmp_path_factory):
    mp = pytest.MonkeyPatch()
    mp.setenv("SOURCE_DATE_EPOCH", "1400000000")
    try:
        out = tmp_path_factory.mktemp("cli") / "out"
        rc = run_cli(phone_card, out)
    finally:
        mp.undo()
    return rc, out


def test_run_log_stage_lines(full_run):
    rc, out = full_run
    assert rc == cli.EXIT_OK
    lines = re.findall(r"stage=(\w+) status=(\w+) seconds=[\d.]+", (out / "run.log").read_text())
    assert [n for n, _ in lines] == list(cli.STAGES)
    assert dict(lines)["decrypt"] == "ok"


def test_secrets_never_written(full_run, phone_card):
    _rc, out = full_run
    log = (out / "run.log").read_text()
    assert "config wa.iv_hex = <redacted> (flag)" in log
    needles = [phone_card.key, phone_card.key.hex().encode(), phone_card.key.hex().upper().encode(),
               phone_card.iv.hex().encode()]
    for path in out.rglob("*"):
        if path.is_file():
            data = path.read_bytes()
            assert not any(n in data for n in needles), path


def test_decrypted_stores_in_manifest(full_run):
    _rc, out = full_run
    manifest = json.loads((out / "manifest.json").read_text())
    dec = [a for a in manifest if a["output_path"].startswith("decrypted/")]
    assert len(dec) == 4 and {a["category"] for a in dec} == {"databases"}
    assert any(a["origin"] == "recovered_deleted" for a in dec)


def test_rerun_refused(full_run, phone_card):
    assert run_cli(phone_card, full_run[1]) == cli.EXIT_CONFIG


def test_no_key_warns(phone_card, tmp_path, fixed_clock):
    out = tmp_path / "o"
    assert run_cli(phone_card, out, key=False) == cli.EXIT_OK
    doc = json.loads((out / "report.json").read_text())
    assert "[decrypt] encrypted stores present, no key material supplied" in doc["warnings"]
    assert doc["counts"]["messages"] == 0


def test_unwritable_out(phone_card, tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert run_cli(phone_card, blocker / "out") == cli.EXIT_OUTPUT


def test_disk_full_during_report(phone_card, tmp_path, monkeypatch):
    def full(*_a, **_k):
        raise OSError(errno.ENOSPC, "No space left on device")

    monkeypatch.setattr(cli, "render_html", full)
    out = tmp_path / "o"
    assert run_cli(phone_card, out) == cli.EXIT_OUTPUT
    assert "stage=report status=degraded" in (out / "run.log").read_text()


def test_version(capsys):
    with pytest.raises(SystemExit):
        main(["--version"])
    assert capsys.readouterr().out.startswith("memcard ")
