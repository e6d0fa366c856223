"""Links-CSV intake and robust retrieval.

The CSV is the interface between source-specific link gathering and the
automated pipeline: one row per (session, transcript URL), grouped here into
SessionRecords. Retrieval dispatches URLs to handlers (direct HTTP with byte
-range resume, local files, or external commands) and converts media to the
canonical WAV via a configured command.
"""

from __future__ import annotations

import csv
import hashlib
import re
import shlex
import shutil
import subprocess
import urllib.parse
from dataclasses import dataclass
from pathlib import Path

import requests

from .errors import (
    ConversionFailed,
    DownloadFailed,
    DuplicateTranscript,
    HandlerNotFound,
    SchemaError,
)
from .jobstore import JobStore, SessionRecord

CSV_COLUMNS = (
    "session_id",
    "video_id",
    "media_url",
    "transcript_id",
    "transcript_url",
    "transcript_format",
    "language",
)


def parse_links_csv(path: str | Path) -> list[SessionRecord]:
    """Parse the links CSV into SessionRecords.

    Rows sharing a session_id merge into one record; they must agree on
    video_id, media_url and language. A repeated (session_id, transcript_id,
    transcript_format) raises DuplicateTranscript; transcript_id may repeat
    across formats because one transcript is often published in several.
    """
    records: dict[str, SessionRecord] = {}
    seen: set[tuple[str, str, str]] = set()
    with open(path, "r", encoding="utf-8-sig", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise SchemaError("empty CSV", line=1)
        missing_cols = set(CSV_COLUMNS) - set(reader.fieldnames)
        if missing_cols:
            raise SchemaError(f"missing columns {sorted(missing_cols)}", line=1)
        for rownum, row in enumerate(reader, 2):
            values = {}
            for col in CSV_COLUMNS:
                val = (row.get(col) or "").strip()
                if not val and col != "video_id":
                    raise SchemaError(f"missing {col}", line=rownum)
                values[col] = val
            sid = values["session_id"]
            key = (sid, values["transcript_id"], values["transcript_format"].lower())
            if key in seen:
                raise DuplicateTranscript(
                    f"row {rownum}: duplicate transcript "
                    f"{values['transcript_id']!r} ({values['transcript_format']}) "
                    f"in session {sid!r}"
                )
            seen.add(key)
            rec = records.get(sid)
            if rec is None:
                rec = SessionRecord(
                    session_id=sid,
                    video_id=values["video_id"],
                    media_url=values["media_url"],
                    language=values["language"],
                )
                records[sid] = rec
            else:
                for col in ("video_id", "media_url", "language"):
                    if getattr(rec, col) != values[col]:
                        raise SchemaError(
                            f"{col} differs from earlier rows of session {sid!r}",
                            line=rownum,
                        )
            rec.transcripts.append(
                {
                    "transcript_id": values["transcript_id"],
                    "url": values["transcript_url"],
                    "format": values["transcript_format"].lower(),
                }
            )
    return [records[sid] for sid in sorted(records)]


# --- download handlers ---------------------------------------------------------


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _http_fetch(url: str, dest: Path, *, timeout_s: float = 60.0) -> None:
    """Direct HTTP(S) download with byte-range resume via a .part file."""
    part = dest.with_name(dest.name + ".part")
    headers = {}
    mode = "wb"
    offset = 0
    if part.exists():
        offset = part.stat().st_size
        if offset > 0:
            headers["Range"] = f"bytes={offset}-"
            mode = "ab"
    try:
        with requests.get(url, headers=headers, stream=True, timeout=timeout_s) as resp:
            if offset and resp.status_code == 200:
                # Server ignored the range; restart from scratch.
                mode = "wb"
            elif resp.status_code not in (200, 206):
                raise DownloadFailed(f"{url}: HTTP {resp.status_code}")
            with open(part, mode) as fh:
                # Modest chunk size so a dropped connection still leaves the
                # already-received bytes on disk for the range-resume retry.
                for chunk in resp.iter_content(1 << 14):
                    fh.write(chunk)
            expected = resp.headers.get("Content-Length")
            if expected is not None:
                got = part.stat().st_size - (offset if mode == "ab" else 0)
                if got != int(expected):
                    raise DownloadFailed(
                        f"{url}: truncated body ({got} of {expected} bytes)"
                    )
    except requests.RequestException as exc:
        raise DownloadFailed(f"{url}: {exc}") from exc
    part.replace(dest)


def _file_fetch(url: str, dest: Path, *, timeout_s: float = 60.0) -> None:
    src = Path(urllib.parse.urlparse(url).path)
    if not src.exists():
        raise DownloadFailed(f"{url}: no such file")
    shutil.copyfile(src, dest)


def _command_handler(command: str):
    def fetch(url: str, dest: Path, *, timeout_s: float = 600.0) -> None:
        argv = [
            a.replace("{url}", url).replace("{out}", str(dest))
            for a in shlex.split(command)
        ]
        try:
            proc = subprocess.run(argv, capture_output=True, timeout=timeout_s)
        except (subprocess.TimeoutExpired, OSError) as exc:
            raise DownloadFailed(f"{argv[0]}: {exc}") from exc
        if proc.returncode != 0 or not dest.exists():
            raise DownloadFailed(
                f"{argv[0]} exited {proc.returncode}: "
                f"{proc.stderr.decode('utf-8', 'replace')[:200]}"
            )

    return fetch


@dataclass
class HandlerRegistry:
    """URL-pattern dispatch for retrieval.

    Built-ins cover direct http(s) and file:// URLs; custom entries map a
    regex to an external command with {url}/{out} placeholders, so new source
    types need no changes to core logic.
    """

    custom: list[tuple[re.Pattern, object]] | None = None

    def __post_init__(self):
        if self.custom is None:
            self.custom = []

    @classmethod
    def from_config(cls, entries: list[dict]) -> "HandlerRegistry":
        custom = []
        for entry in entries:
            custom.append((re.compile(entry["pattern"]), _command_handler(entry["command"])))
        return cls(custom=custom)

    def resolve(self, url: str):
        for pattern, handler in self.custom:
            if pattern.search(url):
                return handler
        scheme = urllib.parse.urlparse(url).scheme.lower()
        if scheme in ("http", "https"):
            return _http_fetch
        if scheme == "file":
            return _file_fetch
        raise HandlerNotFound(f"no handler for URL {url!r}")


def convert_media(src: Path, dest: Path, command: str | None) -> None:
    """Convert downloaded media to canonical WAV via the configured command.

    With no command configured a .wav source is copied through; anything else
    fails, since decoding arbitrary containers is the external tool's job.
    """
    if command:
        argv = [
            a.replace("{in}", str(src)).replace("{out}", str(dest))
            for a in shlex.split(command)
        ]
        try:
            proc = subprocess.run(argv, capture_output=True, timeout=3600.0)
        except (subprocess.TimeoutExpired, OSError) as exc:
            raise ConversionFailed(f"{argv[0]}: {exc}") from exc
        if proc.returncode != 0 or not dest.exists():
            raise ConversionFailed(
                f"{argv[0]} exited {proc.returncode}: "
                f"{proc.stderr.decode('utf-8', 'replace')[:200]}"
            )
        return
    if src.suffix.lower() == ".wav":
        shutil.copyfile(src, dest)
        return
    raise ConversionFailed(
        f"{src.name}: no convert command configured for non-WAV media"
    )


def media_suffix(url: str) -> str:
    path = urllib.parse.urlparse(url).path
    suffix = Path(path).suffix
    return suffix if suffix else ".bin"


def fetch(
    record: SessionRecord,
    registry: HandlerRegistry,
    store: JobStore,
    *,
    convert_command: str | None = None,
    timeout_s: float = 600.0,
) -> SessionRecord:
    """Retrieve media and transcripts for one claimed session.

    Artifacts land at deterministic per-session paths, so a retried fetch
    overwrites rather than duplicates. Raises HandlerNotFound /
    DownloadFailed / ConversionFailed; the caller owns job-state bookkeeping.
    """
    art = store.artifact_dir(record.session_id)
    handler = registry.resolve(record.media_url)
    media_src = art / f"media.src{media_suffix(record.media_url)}"
    handler(record.media_url, media_src, timeout_s=timeout_s)
    media_wav = art / "media.wav"
    convert_media(media_src, media_wav, convert_command)

    tdir = art / "transcripts"
    tdir.mkdir(exist_ok=True)
    for entry in record.transcripts:
        t_handler = registry.resolve(entry["url"])
        dest = tdir / f"{entry['transcript_id']}.{entry['format']}"
        t_handler(entry["url"], dest, timeout_s=timeout_s)
        record.artifacts[dest.name] = _sha256(dest)

    record.artifacts["media.wav"] = _sha256(media_wav)
    store.put(record)
    return record
