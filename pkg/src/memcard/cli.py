"""Command line front end: one invocation runs the whole examination.

Settings resolve as flags > ``MEMCARD_*`` environment > key=value config
file > defaults. Exit status is 0 for any completed run (even a degraded
one), 2 for bad configuration, 3 for an unreadable image and 4 when the
output directory cannot be written.
"""

from __future__ import annotations

import argparse
import errno
import logging
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .artifacts import MANIFEST_NAME, FileArtifact, allocate_path, sha256_bytes, sort_key, write_manifest, write_new_file
from .carver import dedup_against_allocated, export_hits, load_signatures, scan
from .fat import FatError, parse_fat_volume, walk_directory_tree
from .image import VALID_SECTOR_SIZES, ImageError, open_image, parse_partitions
from .media import extract_thumbs, transcode_all
from .report import CaseMeta, ReportBundle, render_html, render_json
from .sqlite import SQLiteError, open_db
from .triage import detect_platform, extract_records
from .wa_crypto import (
    CIPHER_MODES,
    DecryptionError,
    EncryptedStore,
    KeyMaterial,
    KeyMaterialError,
    decrypt_store,
    is_plaintext,
    load_key_material,
)
from .wa_merge import (
    DbProvenance,
    MessageStoreSet,
    StoreFormatError,
    classify_store_file,
    extract_messages,
    merge,
)

logger = logging.getLogger("memcard")

EXIT_OK, EXIT_CONFIG, EXIT_IMAGE, EXIT_OUTPUT = 0, 2, 3, 4
STAGES = ("image", "triage", "carve", "decrypt", "merge", "media", "report")
NO_KEY_NOTE = "encrypted stores present, no key material supplied"
RUN_LOG = "run.log"


class ConfigError(ValueError):
    pass


# -- configuration -------------------------------------------------------------

def _bool(value: str) -> bool:
    v = str(value).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {value!r}")


# config key -> (RunConfig field, parser, default, secret)
SETTINGS = {
    "case_name": ("case_name", str, "", False),
    "case_number": ("case_number", str, None, False),
    "item_number": ("item_number", str, "", False),
    "examiner": ("examiner", str, "", False),
    "image": ("image_path", Path, None, False),
    "out": ("out_dir", Path, None, False),
    "key": ("key_path", Path, None, False),
    "bbb": ("bbb_path", Path, None, False),
    "include_deleted": ("include_deleted", _bool, True, False),
    "carve": ("carve", _bool, True, False),
    "merge_carved_baks": ("merge_carved_baks", _bool, True, False),
    "sector_size": ("sector_size", int, 512, False),
    "signatures": ("signature_registry_path", Path, None, False),
    "workers": ("workers", int, 4, False),
    "convert.command": ("convert_command", str, None, False),
    "convert.timeout": ("convert_timeout", float, 120.0, False),
    "wa.cipher_mode": ("cipher_mode", str, "aes_cbc", False),
    "wa.iv_hex": ("iv_hex", str, None, True),
    "wa.bbb_key_entry": ("bbb_key_entry", str, None, False),
}


def env_name(key: str) -> str:
    return "MEMCARD_" + key.upper().replace(".", "_")


@dataclass(frozen=True)
class RunConfig:
    image_path: Path
    out_dir: Path
    case_number: str
    case_name: str = ""
    item_number: str = ""
    examiner: str = ""
    key_path: Path | None = None
    bbb_path: Path | None = None
    include_deleted: bool = True
    carve: bool = True
    merge_carved_baks: bool = True
    sector_size: int = 512
    signature_registry_path: Path | None = None
    workers: int = 4
    convert_command: str | None = None
    convert_timeout: float = 120.0
    cipher_mode: str = "aes_cbc"
    iv_hex: str | None = field(default=None, repr=False)
    bbb_key_entry: str | None = None
    key_material: KeyMaterial | None = field(default=None, repr=False, compare=False)
    echo: tuple[str, ...] = field(default=(), compare=False)


def read_config_file(path) -> dict[str, str]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None
    values = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or key not in SETTINGS:
            raise ConfigError(f"{path}:{n}: unknown or malformed setting {line!r}")
        values[key] = value.strip()
    return values


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="memcard", description="Examine a memory card image and report its contents.")
    p.add_argument("--image", help="raw (dd) image of the card")
    p.add_argument("--out", help="output directory (must be empty or absent)")
    p.add_argument("--case-name")
    p.add_argument("--case-number")
    p.add_argument("--item-number")
    p.add_argument("--examiner")
    p.add_argument("--key", help="raw or hex key file for the message stores")
    p.add_argument("--bbb", help=".bbb device backup carrying the key")
    p.add_argument("--bbb-key-entry", help="path of the key inside the .bbb container")
    p.add_argument("--cipher-mode", choices=CIPHER_MODES)
    p.add_argument("--iv", help="hex IV for aes_cbc")
    p.add_argument("--no-carve", dest="carve", action="store_const", const="false")
    p.add_argument("--include-deleted", action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--no-merge-carved-baks", dest="merge_carved_baks", action="store_const", const="false")
    p.add_argument("--sector-size", type=int)
    p.add_argument("--signatures", help="carving signature registry (TSV)")
    p.add_argument("--convert-command", help="external converter, e.g. 'ffmpeg -i {in} {out}'")
    p.add_argument("--workers", type=int)
    p.add_argument("--config", help="key=value settings file")
    p.add_argument("--version", action="version", version=f"memcard {__version__}")
    return p


_FLAG_KEYS = {
    "image": "image", "out": "out", "case_name": "case_name", "case_number": "case_number",
    "item_number": "item_number", "examiner": "examiner", "key": "key", "bbb": "bbb",
    "bbb_key_entry": "wa.bbb_key_entry", "cipher_mode": "wa.cipher_mode", "iv": "wa.iv_hex",
    "carve": "carve", "include_deleted": "include_deleted", "merge_carved_baks": "merge_carved_baks",
    "sector_size": "sector_size", "signatures": "signatures", "convert_command": "convert.command",
    "workers": "workers",
}


def validate_config(args: argparse.Namespace, env=None) -> RunConfig:
    env = os.environ if env is None else env
    config_path = args.config or env.get("MEMCARD_CONFIG")
    from_file = read_config_file(config_path) if config_path else {}
    from_flags = {}
    for attr, key in _FLAG_KEYS.items():
        value = getattr(args, attr, None)
        if value is not None:
            from_flags[key] = value if not isinstance(value, bool) else str(value).lower()

    resolved, echo = {}, []
    for key, (attr, parse, default, secret) in SETTINGS.items():
        for source, values in (("flag", from_flags), ("env", env), ("file", from_file)):
            lookup = env_name(key) if source == "env" else key
            if lookup in values and values[lookup] not in (None, ""):
                raw = values[lookup]
                break
        else:
            source, raw = "default", None
        try:
            value = default if raw is None else (raw if isinstance(raw, bool) else parse(str(raw)))
        except (ValueError, ConfigError) as exc:
            raise ConfigError(f"bad value for {key}: {exc}") from None
        resolved[attr] = value
        shown = "<redacted>" if secret and value is not None else value
        echo.append(f"config {key} = {shown} ({source})")

    if resolved["image_path"] is None:
        raise ConfigError("missing image path (--image)")
    if resolved["out_dir"] is None:
        raise ConfigError("missing output directory (--out)")
    if not resolved["case_number"]:
        raise ConfigError("missing case number (--case-number)")
    if resolved["sector_size"] not in VALID_SECTOR_SIZES:
        raise ConfigError(f"sector size must be one of {VALID_SECTOR_SIZES}")
    if resolved["workers"] < 1:
        raise ConfigError("workers must be at least 1")
    if resolved["cipher_mode"] not in CIPHER_MODES:
        raise ConfigError(f"cipher mode must be one of {CIPHER_MODES}")
    sig = resolved["signature_registry_path"]
    if sig is not None and not sig.is_file():
        raise ConfigError(f"signature registry not found: {sig}")

    out = resolved["out_dir"]
    if (out / MANIFEST_NAME).exists():
        raise ConfigError(f"{out} already holds a manifest; refusing to overwrite evidence output")
    if out.exists() and (not out.is_dir() or any(out.iterdir())):
        raise ConfigError(f"output directory {out} is not empty")

    key_path, bbb_path = resolved["key_path"], resolved["bbb_path"]
    if key_path and bbb_path:
        raise ConfigError("give either --key or --bbb, not both")
    material = None
    source = key_path or bbb_path
    if source is not None:
        if not source.is_file():
            raise ConfigError(f"key material not found: {source}")
        mode = resolved["cipher_mode"]
        try:
            material = load_key_material(
                source,
                mode,
                key_path_inside_container=resolved["bbb_key_entry"],
                iv_hex=resolved["iv_hex"] if mode == "aes_cbc" else None,
            )
        except (KeyMaterialError, ValueError) as exc:
            raise ConfigError(str(exc)) from None
    return RunConfig(**resolved, key_material=material, echo=tuple(echo))


# -- pipeline ------------------------------------------------------------------

@dataclass
class StageResult:
    name: str
    status: str = "ok"
    detail: str = ""

    def degrade(self, detail: str):
        self.status = "degraded"
        self.detail = "; ".join(d for d in (self.detail, detail) if d)


class _Collector(logging.Handler):
    """Keeps warnings per stage for the report."""

    def __init__(self):
        super().__init__(logging.WARNING)
        self.stage = "setup"
        self.by_stage: dict[str, list[str]] = {}

    def emit(self, record):
        self.by_stage.setdefault(self.stage, []).append(record.getMessage())


def run_timestamp() -> str:
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    when = datetime.fromtimestamp(int(epoch), tz=timezone.utc) if epoch else datetime.now(timezone.utc)
    return when.strftime("%Y-%m-%d %H:%M:%S")


_UNWRITABLE = {errno.ENOSPC, errno.EROFS, errno.EACCES, errno.EDQUOT}


class Pipeline:
    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.out = cfg.out_dir
        self.stages: list[StageResult] = []
        self.artifacts: list[FileArtifact] = []
        self.carve_hits: list[dict] = []
        self.stores: list[dict] = []
        self.plaintexts: list[tuple[DbProvenance, bytes]] = []
        self.platform = None
        self.timeline = merge(MessageStoreSet())
        self.hash_before = ""
        self.output_failed = False
        self.collector = _Collector()

    # logging and stage bookkeeping

    def _open_log(self):
        self.out.mkdir(parents=True, exist_ok=True)
        self.log_handler = logging.FileHandler(self.out / RUN_LOG, encoding="utf-8")
        self.log_handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s"))
        self.log_handler.setLevel(logging.INFO)
        self._old_level = logger.level
        logger.setLevel(logging.INFO)
        logger.addHandler(self.log_handler)
        logger.addHandler(self.collector)

    def _close_log(self):
        logger.removeHandler(self.collector)
        logger.removeHandler(self.log_handler)
        logger.setLevel(self._old_level)
        self.log_handler.close()

    @contextmanager
    def stage(self, name: str):
        result = StageResult(name)
        self.collector.stage = name
        t0 = time.perf_counter()
        try:
            yield result
        except Exception as exc:  # degrade, don't abort
            if isinstance(exc, OSError) and exc.errno in _UNWRITABLE:
                self.output_failed = True
            logger.warning("%s stage failed: %s: %s", name, type(exc).__name__, exc)
            result.degrade(f"{type(exc).__name__}: {exc}")
        self._record(result, time.perf_counter() - t0)

    def _record(self, result: StageResult, seconds: float):
        self.stages.append(result)
        logger.info("stage=%s status=%s seconds=%.3f%s", result.name, result.status, seconds,
                    f" detail={result.detail}" if result.detail else "")

    def _skip_rest(self, reason: str):
        for name in STAGES[len(self.stages):]:
            self._record(StageResult(name, "skipped", reason), 0.0)

    def _sanitize(self, text: str) -> str:
        for path, label in ((self.out.resolve(), "<out>"), (self.out, "<out>"),
                            (self.cfg.image_path.resolve(), self.cfg.image_path.name),
                            (self.cfg.image_path, self.cfg.image_path.name)):
            text = text.replace(str(path), label)
        return text

    def warnings(self) -> tuple[str, ...]:
        out = []
        for name in ("setup", *STAGES):
            seen = sorted(set(self._sanitize(w) for w in self.collector.by_stage.get(name, [])))
            out.extend(f"[{name}] {w}" for w in seen)
        return tuple(out)

    # stages

    def run(self) -> int:
        try:
            self._open_log()
        except OSError as exc:
            print(f"memcard: cannot write to {self.out}: {exc}", file=sys.stderr)
            return EXIT_OUTPUT
        try:
            for line in self.cfg.echo:
                logger.info(line)
            return self._run()
        finally:
            self._close_log()

    def _run(self) -> int:
        cfg = self.cfg
        t0 = time.perf_counter()
        try:
            img = open_image(cfg.image_path, cfg.sector_size)
        except (OSError, ImageError) as exc:
            logger.error("cannot read image %s: %s", cfg.image_path, exc)
            self._record(StageResult("image", "degraded", f"unreadable image: {exc}"), time.perf_counter() - t0)
            self._skip_rest("unreadable image")
            return EXIT_IMAGE
        with img:
            try:
                self.hash_before = img.sha256()
            except OSError as exc:
                logger.error("cannot read image %s: %s", cfg.image_path, exc)
                self._record(StageResult("image", "degraded", f"unreadable image: {exc}"), time.perf_counter() - t0)
                self._skip_rest("unreadable image")
                return EXIT_IMAGE
            volumes = []
            with self.stage("image") as st:
                logger.info("image sha256 %s, %d bytes", self.hash_before, img.size)
                for part in parse_partitions(img):
                    try:
                        volumes.append(parse_fat_volume(img, part))
                    except FatError as exc:
                        logger.warning("partition %d: no usable FAT volume: %s", part.index, exc)
                if not volumes:
                    st.degrade("no FAT volume found; only carving applies")
                if img.notes:
                    st.degrade("; ".join(img.notes))
            self._triage(volumes)
            self._carve(img)
            self._decrypt()
            self._merge()
            self._media()
            hash_after = img.sha256()
        if hash_after != self.hash_before:
            logger.error("image hash changed during the run: %s -> %s", self.hash_before, hash_after)
        return self._report()

    def _triage(self, volumes):
        with self.stage("triage") as st:
            if not volumes:
                st.status, st.detail = "skipped", "no FAT volume"
                return
            multi = len(volumes) > 1
            records_all = []
            for n, vol in enumerate(volumes, 1):
                try:
                    records = walk_directory_tree(vol, include_deleted=self.cfg.include_deleted)
                except (FatError, ImageError) as exc:
                    logger.warning("volume %d: directory walk failed: %s", n, exc)
                    st.degrade(f"volume {n} unreadable")
                    continue
                records_all.extend(records)
                sub = f"volume{n}" if multi else ""
                arts = extract_records(vol, records, self.out / sub if sub else self.out,
                                       source_prefix=f"/{sub}" if sub else "", workers=self.cfg.workers)
                if sub:
                    arts = [replace(a, output_path=f"{sub}/{a.output_path}") for a in arts]
                self.artifacts.extend(arts)
            guess = detect_platform(records_all)
            self.platform = {"platform": guess.platform, "confidence": guess.confidence,
                             "evidence": list(guess.evidence)}
            logger.info("platform %s (%s): %s", guess.platform, guess.confidence, ", ".join(guess.evidence))
            write_manifest(self.out, self.artifacts)

    def _carve(self, img):
        with self.stage("carve") as st:
            if not self.cfg.carve:
                st.status, st.detail = "skipped", "disabled"
                return
            sigs = load_signatures(self.cfg.signature_registry_path)
            chunk = max(1 << 20, 2 * max((s.span for s in sigs), default=1))
            hits = dedup_against_allocated(scan(img, sigs, chunk_size=chunk, workers=self.cfg.workers),
                                           self.artifacts)
            write_manifest(self.out, self.artifacts)
            carved = export_hits(img, hits, self.out, sigs)
            for hit, art in zip(hits, carved):
                self.carve_hits.append({
                    "offset": hit.offset, "length": hit.length, "signature": hit.signature,
                    "content_hash": hit.content_hash, "duplicate_of_allocated": hit.duplicate_of_allocated,
                    "output_path": art.output_path,
                })
            self.artifacts.extend(carved)
            st.detail = f"{len(hits)} hits, {sum(h.duplicate_of_allocated for h in hits)} duplicates of allocated files"

    def _provenance_name(self, art: FileArtifact, taken: set[str]) -> str:
        name = art.source_path.rsplit("/", 1)[-1]
        if name.lower() in taken:
            name = art.source_path
        taken.add(name.lower())
        return name

    def _decrypt(self):
        with self.stage("decrypt") as st:
            key = self.cfg.key_material
            candidates = []
            for a in sorted(self.artifacts, key=sort_key):
                if a.origin == "carved":
                    continue
                base = a.source_path.rsplit("/", 1)[-1]
                low = base.lower()
                if classify_store_file(base) or low.endswith((".crypt5", ".crypt7")):
                    candidates.append(a)
            taken: set[str] = set()
            missing_key = False
            decrypted = []
            for a in candidates:
                name = self._provenance_name(a, taken)
                data = (self.out / a.output_path).read_bytes()
                store = EncryptedStore(name, data)
                scheme = store.scheme_guess
                entry = {"filename": name, "source_path": a.source_path, "scheme": scheme, "output_path": None}
                if is_plaintext(data):
                    entry.update(status="already plaintext", output_path=a.output_path)
                    self.plaintexts.append((name, data))
                elif scheme.startswith("android_"):
                    entry["status"] = f"unsupported: account-bound Android scheme ({scheme})"
                    logger.warning("%s: %s", name, entry["status"])
                elif key is None:
                    entry["status"] = "encrypted, not decrypted (no key material)"
                    missing_key = True
                else:
                    try:
                        plain = decrypt_store(store, key)
                    except (DecryptionError, ValueError) as exc:
                        entry["status"] = f"failed: {exc}"
                        logger.warning("%s: decryption failed: %s", name, exc)
                        st.degrade(f"{name} not decrypted")
                    else:
                        rel = allocate_path(self.out, "decrypted", f"{name.rsplit('/', 1)[-1]}_dec",
                                            {x.output_path.lower() for x in self.artifacts})
                        write_new_file(self.out / rel, plain)
                        decrypted.append(FileArtifact(a.source_path, "databases", sha256_bytes(plain), len(plain),
                                                      a.origin, rel))
                        entry.update(status="decrypted", output_path=rel)
                        self.plaintexts.append((name, plain))
                self.stores.append(entry)
            self.artifacts.extend(decrypted)
            if missing_key:
                logger.warning(NO_KEY_NOTE)
                if not decrypted:
                    st.status = "skipped"
                st.detail = NO_KEY_NOTE
            elif not candidates:
                st.status, st.detail = "skipped", "no message stores found"
            if decrypted:
                write_manifest(self.out, self.artifacts)

    def _load_store(self, item):
        prov, data = item
        try:
            return prov, extract_messages(open_db(data), prov), None
        except (SQLiteError, StoreFormatError, KeyError, IndexError) as exc:
            return prov, None, exc

    def _merge(self):
        with self.stage("merge") as st:
            items = []
            for name, data in self.plaintexts:
                prov = classify_store_file(name)
                if prov is None:
                    logger.info("%s: not a message store name, left out of the merge", name)
                    continue
                items.append((prov, data))
            known = {sha256_bytes(d) for _, d in self.plaintexts}
            carved = []
            if self.cfg.merge_carved_baks:
                for h in self.carve_hits:
                    if h["signature"] != "sqlite" or h["duplicate_of_allocated"] or h["content_hash"] in known:
                        continue
                    known.add(h["content_hash"])
                    name = h["output_path"].rsplit("/", 1)[-1]
                    carved.append((DbProvenance(name, "carved"), (self.out / h["output_path"]).read_bytes()))
            stores = MessageStoreSet()
            with ThreadPoolExecutor(max_workers=self.cfg.workers) as pool:
                results = list(pool.map(self._load_store, items + carved))
            for prov, msgs, exc in results:
                if exc is None:
                    stores.add(prov, msgs)
                elif prov.kind == "carved":
                    logger.info("carved database %s holds no message store: %s", prov.filename, exc)
                else:
                    logger.warning("%s: unreadable message store: %s", prov.filename, exc)
                    st.degrade(f"{prov.filename} unreadable")
            self.timeline = merge(stores)
            if not stores.ordered():
                st.status, st.detail = "skipped", "no readable message stores"
            elif stores.current is None:
                logger.warning("no current message store; deleted status is indeterminate")
                st.degrade("no current database")
            else:
                st.detail = (f"{len(stores.ordered())} stores, {self.timeline.message_count} messages, "
                             f"{self.timeline.deleted_count} deleted")

    def _media(self):
        with self.stage("media") as st:
            thumbs = [a for a in self.artifacts if a.category == "thumb_dat" and a.origin != "carved"]
            derived = []
            taken = {a.output_path.lower() for a in self.artifacts}
            for a in sorted(thumbs, key=sort_key):
                entries = extract_thumbs((self.out / a.output_path).read_bytes(), a.source_path)
                stem = a.source_path.rsplit("/", 1)[-1].rsplit(".", 1)[0]
                for e in entries:
                    rel = allocate_path(self.out, "thumb/extracted", f"{stem}_{e.index:03d}.jpg", taken)
                    write_new_file(self.out / rel, e.jpeg_bytes)
                    derived.append(FileArtifact(a.source_path, "pictures", sha256_bytes(e.jpeg_bytes),
                                                len(e.jpeg_bytes), a.origin, rel))
            converted = []
            if self.cfg.convert_command:
                originals = [a for a in self.artifacts if a.category in ("audio", "video")]
                converted = transcode_all(originals, self.cfg.convert_command, self.out,
                                          workers=self.cfg.workers, timeout=self.cfg.convert_timeout)
                failed = len(originals) - len(converted)
                if failed:
                    st.degrade(f"{failed} of {len(originals)} conversions failed")
            self.artifacts.extend(derived + converted)
            if not thumbs and not self.cfg.convert_command:
                st.status, st.detail = "skipped", "no thumb.dat and no convert command"
            elif st.status == "ok":
                st.detail = f"{len(derived)} thumbnails, {len(converted)} conversions"

    def _report(self) -> int:
        cfg = self.cfg
        self.collector.stage = "report"
        t0 = time.perf_counter()
        result = StageResult("report")
        degraded = [s for s in self.stages if s.status == "degraded"]
        for s in degraded:
            self.collector.by_stage.setdefault(s.name, []).append(f"stage degraded: {s.detail}")
        case = CaseMeta(cfg.case_name, cfg.case_number, cfg.item_number, cfg.examiner,
                        self.hash_before, __version__, run_timestamp())
        bundle = ReportBundle(
            case=case,
            timeline=self.timeline,
            inventory=tuple(sorted(self.artifacts, key=sort_key)),
            warnings=self.warnings(),
            platform=self.platform,
            stores=tuple(self.stores),
            stages=tuple({"name": s.name, "status": s.status, "detail": self._sanitize(s.detail)}
                         for s in self.stages),
            carve_hits=tuple(self.carve_hits),
        )
        try:
            write_manifest(self.out, self.artifacts)
            render_json(bundle, self.out)
            render_html(bundle, self.out)
        except OSError as exc:
            logger.error("cannot write report: %s", exc)
            result.degrade(str(exc))
            self._record(result, time.perf_counter() - t0)
            return EXIT_OUTPUT
        self._record(result, time.perf_counter() - t0)
        return EXIT_OUTPUT if self.output_failed else EXIT_OK


def run_pipeline(cfg: RunConfig) -> int:
    return Pipeline(cfg).run()


def main(argv=None, env=None) -> int:
    args = build_parser().parse_args(argv)
    console = logging.StreamHandler()
    console.setLevel(logging.WARNING)
    console.setFormatter(logging.Formatter("memcard: %(message)s"))
    logger.addHandler(console)
    try:
        try:
            cfg = validate_config(args, env)
        except ConfigError as exc:
            print(f"memcard: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        return run_pipeline(cfg)
    finally:
        logger.removeHandler(console)


if __name__ == "__main__":
    sys.exit(main())
