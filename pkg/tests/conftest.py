from __future__ import annotations

import re
from html.parser import HTMLParser
from pathlib import Path
from urllib.parse import unquote, urlsplit

import pytest

from memcard.cli import main
from memcard.artifacts import sha256_file
from memcard.fixtures import build_phone_card

RUN_EPOCH = "1400000000"


@pytest.fixture(scope="session")
def phone_card(tmp_path_factory):
    return build_phone_card(tmp_path_factory.mktemp("card"))


@pytest.fixture
def fixed_clock(monkeypatch):
    monkeypatch.setenv("SOURCE_DATE_EPOCH", RUN_EPOCH)


def run_cli(card, out: Path, *extra, key=True, env=None) -> int:
    argv = ["--image", str(card.image.path), "--out", str(out), "--case-name", "Harbour",
            "--case-number", "2014-0042", "--item-number", "3", "--examiner", "J. Doe"]
    if key:
        argv += ["--bbb", str(card.bbb_path), "--bbb-key-entry", card.bbb_entry, "--iv", card.iv.hex()]
    before = sha256_file(card.image.path)
    rc = main([*argv, *extra], env=env or {})
    assert sha256_file(card.image.path) == before, "input image modified"
    return rc


class _Links(HTMLParser):
    def __init__(self):
        super().__init__()
        self.links: list[tuple[str, str]] = []
        self.ids: set[str] = set()

    def handle_starttag(self, tag, attrs):
        attrs = dict(attrs)
        if "id" in attrs:
            self.ids.add(attrs["id"])
        for name in ("href", "src"):
            if attrs.get(name) is not None:
                self.links.append((tag, attrs[name]))


def broken_links(html_path: Path) -> list[str]:
    """Links that escape the output directory, point nowhere or use a scheme."""
    root = html_path.parent.resolve()
    parser = _Links()
    parser.feed(html_path.read_text(encoding="utf-8"))
    bad = []
    for tag, link in parser.links:
        if tag == "img" and link.startswith("data:image/"):
            continue
        parts = urlsplit(link)
        if parts.scheme or parts.netloc:
            bad.append(link)
            continue
        if not parts.path:
            if parts.fragment not in parser.ids:
                bad.append(link)
            continue
        target = (root / unquote(parts.path)).resolve()
        if root not in target.parents or not target.is_file():
            bad.append(link)
    return bad


def html_message_rows(html: str) -> int:
    return len(re.findall(r'<tr class="(?:incoming|outgoing)', html))


ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
