"""HTML and JSON reports built from one immutable bundle.

Both renderers are pure functions of the bundle, so identical inputs give
byte-identical files. Every link in the HTML is relative and points inside
the output directory; evidence text is always escaped.
"""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass
from datetime import datetime, timezone
from html import escape
from pathlib import Path
from urllib.parse import quote

from .artifacts import FileArtifact, sort_key
from .wa_merge import CONFLICT, INDETERMINATE, MergedTimeline, WaMessage, phone_number

SCHEMA_VERSION = "1.0"
THUMB_LIMIT = 64 * 1024
HTML_NAME = "report.html"
JSON_NAME = "report.json"
_IMAGE_MIME = ((b"\xff\xd8\xff", "image/jpeg"), (b"\x89PNG\r\n\x1a\n", "image/png"), (b"GIF8", "image/gif"))


@dataclass(frozen=True)
class CaseMeta:
    case_name: str
    case_number: str
    item_number: str
    examiner: str
    image_hash: str
    tool_version: str
    run_timestamp_utc: str

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass(frozen=True)
class ReportBundle:
    case: CaseMeta
    timeline: MergedTimeline
    inventory: tuple[FileArtifact, ...] = ()
    warnings: tuple[str, ...] = ()
    platform: dict | None = None
    stores: tuple[dict, ...] = ()  # per encrypted store: filename, scheme, status, output_path
    stages: tuple[dict, ...] = ()  # name, status, detail
    carve_hits: tuple[dict, ...] = ()  # offset, length, signature, content_hash, duplicate_of_allocated, output_path


def format_timestamp(epoch_ms: int) -> str:
    if epoch_ms < 0:
        raise ValueError("negative timestamp")
    return datetime.fromtimestamp(epoch_ms // 1000, tz=timezone.utc).strftime("%Y-%m-%d %H:%M:%S")


def media_index(inventory) -> dict[str, str]:
    """Lower-case file name -> output path, allocated files preferred over recovered ones."""
    rank = {"allocated": 0, "recovered_deleted": 1}
    index: dict[str, tuple] = {}
    for a in sorted(inventory, key=sort_key):
        if a.origin not in rank:
            continue
        name = a.source_path.rsplit("/", 1)[-1].lower()
        derived = a.output_path.rsplit("/", 1)[-1].lower() != name  # converted or decrypted sibling
        cand = (rank[a.origin], derived, a.source_path, a.output_path)
        if name not in index or cand < index[name]:
            index[name] = cand
    return {k: v[-1] for k, v in index.items()}


def _media_path(m: WaMessage, index: dict[str, str]) -> str | None:
    return index.get(m.media_name.lower()) if m.media_name else None


def _thumb_uri(thumb: bytes | None) -> str | None:
    if not thumb or len(thumb) > THUMB_LIMIT:
        return None
    for magic, mime in _IMAGE_MIME:
        if thumb.startswith(magic):
            return f"data:{mime};base64,{base64.b64encode(thumb).decode('ascii')}"
    return None


def _deleted_label(m: WaMessage) -> str:
    if m.deleted is None:
        return INDETERMINATE
    return "deleted" if m.deleted else ""


def counts(bundle: ReportBundle) -> dict:
    tl = bundle.timeline
    return {
        "contacts": len(tl.contacts),
        "messages": tl.message_count,
        "deleted_messages": tl.deleted_count,
        "source_databases": len(tl.source_inventory),
        "artifacts": len(bundle.inventory),
        "warnings": len(bundle.warnings),
    }


# -- JSON ----------------------------------------------------------------------

def _message_dict(m: WaMessage, index: dict[str, str]) -> dict:
    return {
        "key_remote_jid": m.key_remote_jid,
        "key_from_me": m.key_from_me,
        "direction": m.direction,
        "data": m.data,
        "timestamp_ms": m.timestamp_ms,
        "timestamp_utc": format_timestamp(m.timestamp_ms),
        "media_name": m.media_name,
        "media_path": _media_path(m, index),
        "media_thumb": base64.b64encode(m.media_thumb).decode("ascii") if m.media_thumb else None,
        "source_db": m.source_db,
        "deleted": m.deleted,
        "annotations": list(m.annotations),
    }


def bundle_dict(bundle: ReportBundle) -> dict:
    index = media_index(bundle.inventory)
    return {
        "schema_version": SCHEMA_VERSION,
        "case": bundle.case.to_dict(),
        "counts": counts(bundle),
        "platform": bundle.platform,
        "current_db": bundle.timeline.current_db,
        "source_inventory": [
            {"filename": p.filename, "kind": p.kind, "backup_epoch_ms": p.backup_epoch_ms}
            for p in bundle.timeline.source_inventory
        ],
        "contacts": [
            {"jid": jid, "label": phone_number(jid), "messages": [_message_dict(m, index) for m in msgs]}
            for jid, msgs in bundle.timeline.contacts
        ],
        "encrypted_stores": [dict(s) for s in bundle.stores],
        "carve_hits": [dict(h) for h in bundle.carve_hits],
        "inventory": [a.to_dict() for a in sorted(bundle.inventory, key=sort_key)],
        "stages": [dict(s) for s in bundle.stages],
        "warnings": list(bundle.warnings),
    }


def json_text(bundle: ReportBundle) -> str:
    return json.dumps(bundle_dict(bundle), indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def _write(path: Path, text: str) -> Path:
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    tmp.replace(path)
    return path


def render_json(bundle: ReportBundle, out_dir) -> Path:
    return _write(Path(out_dir) / JSON_NAME, json_text(bundle))


# -- HTML ----------------------------------------------------------------------

_CSS = """
body { font-family: sans-serif; margin: 2em; }
table { border-collapse: collapse; margin-bottom: 1.5em; }
th, td { border: 1px solid #999; padding: 3px 6px; vertical-align: top; text-align: left; }
tr.outgoing td.msg { background: #eef7ee; }
tr.deleted td { background: #fbe3e3; }
.flag { color: #a00; font-weight: bold; }
.note { color: #555; font-style: italic; }
img.thumb { max-width: 96px; max-height: 96px; display: block; }
"""


def _href(rel_path: str) -> str:
    return escape(quote(rel_path, safe="/~"))


def _case_rows(case: CaseMeta) -> list[str]:
    fields = (
        ("Casename", case.case_name),
        ("Casenumber", case.case_number),
        ("Itemnumber", case.item_number),
        ("Examiner", case.examiner),
        ("Image SHA-256", case.image_hash),
        ("Tool version", case.tool_version),
        ("Run (UTC)", case.run_timestamp_utc),
    )
    return [f"<tr><th>{escape(k)}</th><td>{escape(v)}</td></tr>" for k, v in fields]


def _message_row(m: WaMessage, index: dict[str, str]) -> str:
    classes = [m.direction] + (["deleted"] if m.deleted else [])
    text = escape(m.data) if m.data is not None else ""
    media = ""
    if m.media_name or m.media_thumb:
        uri = _thumb_uri(m.media_thumb)
        img = f'<img class="thumb" alt="thumbnail" src="{uri}">' if uri else ""
        target = _media_path(m, index)
        if target:
            media = f'<div>{img}<a href="{_href(target)}">picture</a></div>'
        else:
            media = f'<div>{img}picture <span class="note">(not recovered)</span></div>'
        if m.media_name:
            media += f'<div class="note">{escape(m.media_name)}</div>'
    notes = "".join(f'<div class="note">{escape(a)}</div>' for a in m.annotations if a == CONFLICT)
    label = _deleted_label(m)
    flag = f'<div class="flag">{escape(label)}</div>' if label else ""
    arrow = "&rarr; sent" if m.key_from_me else "&larr; received"
    return (
        f'<tr class="{" ".join(classes)}">'
        f"<td>{format_timestamp(m.timestamp_ms)}</td>"
        f"<td>{arrow}</td>"
        f'<td class="msg">{text}{media}{notes}</td>'
        f"<td>{escape(m.source_db)}{flag}</td>"
        "</tr>"
    )


def _inventory_table(artifacts) -> list[str]:
    rows = ["<table><tr><th>File</th><th>Source</th><th>Category</th><th>Origin</th><th>Size</th><th>SHA-256</th></tr>"]
    for a in artifacts:
        rows.append(
            f'<tr><td><a href="{_href(a.output_path)}">{escape(a.output_path)}</a></td>'
            f"<td>{escape(a.source_path)}</td><td>{a.category}</td><td>{a.origin}</td>"
            f"<td>{a.size}</td><td><code>{a.content_hash}</code></td></tr>"
        )
    rows.append("</table>")
    return rows


def html_text(bundle: ReportBundle) -> str:
    tl = bundle.timeline
    index = media_index(bundle.inventory)
    c = counts(bundle)
    out = [
        "<!DOCTYPE html>",
        '<html lang="en"><head><meta charset="utf-8">',
        f"<title>Memory card report {escape(bundle.case.case_number)}</title>",
        f"<style>{_CSS}</style></head><body>",
        "<h1>Memory card examination report</h1>",
        "<table>", *_case_rows(bundle.case), "</table>",
        '<p class="note">All times are UTC.</p>',
    ]
    if bundle.platform:
        out.append(f"<p>Platform: {escape(bundle.platform.get('platform', ''))} "
                   f"({escape(bundle.platform.get('confidence', ''))})</p>")
    out.append(
        f'<p id="counts">Contacts: {c["contacts"]}, messages: {c["messages"]}, '
        f'deleted messages: {c["deleted_messages"]}, source databases: {c["source_databases"]}, '
        f'files: {c["artifacts"]}</p>'
    )

    out.append("<h2>Chats</h2>")
    if not tl.contacts:
        out.append('<p class="note">No WhatsApp contacts recovered.</p>')
    else:
        if tl.current_db is None:
            out.append(f'<p class="note">Deleted status: {escape(INDETERMINATE)}.</p>')
        out.append("<ul>")
        for n, (jid, msgs) in enumerate(tl.contacts, 1):
            out.append(f'<li><a href="#contact-{n}">{escape(phone_number(jid))}</a> ({len(msgs)})</li>')
        out.append("</ul>")
        for n, (jid, msgs) in enumerate(tl.contacts, 1):
            out.append(f'<h3 id="contact-{n}">{escape(phone_number(jid))}</h3>')
            out.append("<table><tr><th>Timestamp (UTC)</th><th>Direction</th><th>Message</th><th>Filename</th></tr>")
            out.extend(_message_row(m, index) for m in msgs)
            out.append("</table>")

    out.append("<h2>Source databases</h2><table><tr><th>Filename</th><th>Kind</th><th>Backup time (UTC)</th></tr>")
    for p in tl.source_inventory:
        when = format_timestamp(p.backup_epoch_ms) if p.backup_epoch_ms is not None else ""
        out.append(f"<tr><td>{escape(p.filename)}</td><td>{escape(p.kind)}</td><td>{when}</td></tr>")
    out.append("</table>")

    if bundle.stores:
        out.append("<h2>Encrypted stores</h2><table><tr><th>File</th><th>Scheme</th><th>Status</th></tr>")
        for s in bundle.stores:
            out.append(f"<tr><td>{escape(str(s.get('filename', '')))}</td><td>{escape(str(s.get('scheme', '')))}</td>"
                       f"<td>{escape(str(s.get('status', '')))}</td></tr>")
        out.append("</table>")

    duplicates = {h["output_path"] for h in bundle.carve_hits if h.get("duplicate_of_allocated")}
    inventory = sorted(bundle.inventory, key=sort_key)
    out.append("<h2>Extracted files</h2>")
    out.extend(_inventory_table(a for a in inventory if a.output_path not in duplicates))
    if duplicates:
        out.append("<h2>Carved copies of allocated files</h2>")
        out.extend(_inventory_table(a for a in inventory if a.output_path in duplicates))

    if bundle.warnings:
        out.append("<h2>Warnings</h2><ul>")
        out.extend(f"<li>{escape(w)}</li>" for w in bundle.warnings)
        out.append("</ul>")
    out.append("</body></html>")
    return "\n".join(out) + "\n"


def render_html(bundle: ReportBundle, out_dir) -> Path:
    return _write(Path(out_dir) / HTML_NAME, html_text(bundle))

