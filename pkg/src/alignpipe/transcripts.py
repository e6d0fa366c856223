"""Candidate transcript parsing.

Built-in parsers cover txt, srt and html; binary formats (pdf, docx, ...) are
delegated to an external extractor command, and an optional external cleaning
hook can strip non-speech material before normalization. Parsers are total
over arbitrary bytes: they return text or raise a typed error, never crash.
"""

from __future__ import annotations

import html.parser
import re
import shlex
import subprocess
from dataclasses import dataclass, field

from .errors import (
    ExtractorFailed,
    ExtractorTimeout,
    HookFailed,
    InvalidEncoding,
    NoCuesFound,
    UnknownFormat,
)
from .textnorm import NormProfile, NormText, normalize

FORMAT_TXT = "txt"
FORMAT_SRT = "srt"
FORMAT_HTML = "html"
FORMAT_EXTERNAL = "external"

CLEANING_NONE = "none"
CLEANING_LLM = "llm"

# Default system prompt for the external cleaning hook. Versioned so outputs
# record exactly which instructions produced them; override via config.
DEFAULT_CLEANING_PROMPT_VERSION = "v1"
DEFAULT_CLEANING_PROMPT = (
    "You are a multilingual assistant specialized in processing parliamentary "
    "transcripts. Your task is to clean the provided transcript page by removing "
    "all unnecessary metadata, annotations etc. while preserving only the literal "
    "spoken dialogue. Please follow these instructions:\n"
    "Remove the speaker labels that appear as headers before each speaker's dialogue.\n"
    "Remove all annotations, procedural notes, timestamps, and non-verbal cues.\n"
    "Ensure that only and all the spoken dialogue is in your response.\n"
    "Respond in the same language as the input and do not alter the spoken text.\n"
)


@dataclass(frozen=True)
class ParsedText:
    """Raw text recovered from one transcript file plus parser warnings."""

    text: str
    warnings: tuple[str, ...] = ()


@dataclass
class TranscriptDocument:
    """One parsed candidate transcript, normalized and ready to align."""

    transcript_id: str
    format: str
    raw_text: str
    norm: NormText
    cleaning: str = CLEANING_NONE
    cleaning_prompt_version: str | None = None
    extractor: str | None = None
    warnings: list[str] = field(default_factory=list)


def parse_txt(data: bytes) -> ParsedText:
    """UTF-8 text (BOM tolerated), newlines canonicalized to \\n."""
    try:
        text = data.decode("utf-8-sig")
    except UnicodeDecodeError as exc:
        raise InvalidEncoding(str(exc)) from exc
    return ParsedText(text.replace("\r\n", "\n").replace("\r", "\n"))


_SRT_TIMESTAMP = re.compile(
    r"^\s*\d{1,2}:\d{2}:\d{2}[,.]\d{1,3}\s*-->\s*\d{1,2}:\d{2}:\d{2}[,.]\d{1,3}"
)


def parse_srt(data: bytes) -> ParsedText:
    """Concatenate SRT cue text in order, separated by spaces.

    Indices and timestamps are discarded; malformed cues are skipped and
    counted as warnings. Raises NoCuesFound when zero cues parse.
    """
    text = parse_txt(data).text
    pieces: list[str] = []
    warnings: list[str] = []
    blocks = re.split(r"\n\s*\n", text)
    for block in blocks:
        lines = [ln for ln in block.split("\n") if ln.strip()]
        if not lines:
            continue
        idx = 0
        # optional numeric index line
        if lines[0].strip().isdigit():
            idx = 1
        if idx >= len(lines) or not _SRT_TIMESTAMP.match(lines[idx]):
            warnings.append(f"skipped malformed cue: {lines[0][:40]!r}")
            continue
        cue_text = " ".join(ln.strip() for ln in lines[idx + 1 :]).strip()
        if cue_text:
            pieces.append(cue_text)
    if not pieces:
        raise NoCuesFound("no parseable SRT cues")
    return ParsedText(" ".join(pieces), tuple(warnings))


_BLOCK_TAGS = {
    "p", "div", "br", "li", "ul", "ol", "tr", "td", "th", "table",
    "h1", "h2", "h3", "h4", "h5", "h6", "blockquote", "section",
    "article", "header", "footer", "title", "pre",
}
_SKIP_TAGS = {"script", "style"}


class _TextExtractor(html.parser.HTMLParser):
    def __init__(self) -> None:
        super().__init__(convert_charrefs=True)
        self._parts: list[str] = []
        self._skip_depth = 0

    def handle_starttag(self, tag, attrs):
        if tag in _SKIP_TAGS:
            self._skip_depth += 1
        elif tag in _BLOCK_TAGS:
            self._parts.append("\n")

    def handle_endtag(self, tag):
        if tag in _SKIP_TAGS and self._skip_depth > 0:
            self._skip_depth -= 1
        elif tag in _BLOCK_TAGS:
            self._parts.append("\n")

    def handle_data(self, data):
        if self._skip_depth == 0:
            self._parts.append(data)

    def text(self) -> str:
        joined = "".join(self._parts)
        lines = [re.sub(r"[ \t]+", " ", ln).strip() for ln in joined.split("\n")]
        return "\n".join(ln for ln in lines if ln)


def parse_html(data: bytes) -> ParsedText:
    """Visible text content: script/style removed, block tags break lines,
    entities decoded. Lenient; never raises on malformed markup."""
    try:
        text = data.decode("utf-8-sig", errors="replace")
    except Exception:  # pragma: no cover - errors="replace" cannot fail
        text = data.decode("latin-1")
    extractor = _TextExtractor()
    try:
        extractor.feed(text)
        extractor.close()
    except Exception:
        pass  # lenient: keep whatever was collected
    return ParsedText(extractor.text())


def parse_external(path: str, extractor_command: str, timeout_s: float = 300.0) -> ParsedText:
    """Run an external extractor that writes plain text to stdout.

    The command may contain an {in} placeholder for the file path; otherwise
    the path is appended as the final argument.
    """
    if "{in}" in extractor_command:
        argv = [a.replace("{in}", path) for a in shlex.split(extractor_command)]
    else:
        argv = shlex.split(extractor_command) + [path]
    try:
        proc = subprocess.run(argv, capture_output=True, timeout=timeout_s)
    except subprocess.TimeoutExpired as exc:
        raise ExtractorTimeout(f"{argv[0]} exceeded {timeout_s}s") from exc
    except OSError as exc:
        raise ExtractorFailed(f"{argv[0]}: {exc}") from exc
    if proc.returncode != 0:
        raise ExtractorFailed(
            f"{argv[0]} exited {proc.returncode}: {proc.stderr.decode('utf-8', 'replace')[:200]}"
        )
    return ParsedText(proc.stdout.decode("utf-8", errors="replace"))


def llm_clean(
    page_text: str,
    hook_command: str,
    prompt: str = DEFAULT_CLEANING_PROMPT,
    timeout_s: float = 300.0,
) -> str:
    """Pass text through an external cleaning hook.

    Protocol: the hook receives two length-prefixed UTF-8 blocks on stdin
    ("<byte_len>\\n<bytes>" for the system prompt, then the page text) and
    writes cleaned text to stdout. Non-zero exit raises HookFailed; the caller
    is expected to fall back to the uncleaned text.
    """
    prompt_b = prompt.encode("utf-8")
    text_b = page_text.encode("utf-8")
    payload = (
        str(len(prompt_b)).encode() + b"\n" + prompt_b
        + str(len(text_b)).encode() + b"\n" + text_b
    )
    argv = shlex.split(hook_command)
    try:
        proc = subprocess.run(argv, input=payload, capture_output=True, timeout=timeout_s)
    except subprocess.TimeoutExpired as exc:
        raise HookFailed(f"{argv[0]} exceeded {timeout_s}s") from exc
    except OSError as exc:
        raise HookFailed(f"{argv[0]}: {exc}") from exc
    if proc.returncode != 0:
        raise HookFailed(
            f"{argv[0]} exited {proc.returncode}: {proc.stderr.decode('utf-8', 'replace')[:200]}"
        )
    return proc.stdout.decode("utf-8", errors="replace")


BUILTIN_PARSERS = {
    "txt": parse_txt,
    "srt": parse_srt,
    "html": parse_html,
    "htm": parse_html,
}


class ParserRegistry:
    """Maps a declared format/extension to exactly one parser.

    Formats listed in external_formats dispatch to the configured extractor
    command; anything unregistered raises UnknownFormat up front, before any
    download or parse work is spent on it.
    """

    def __init__(self, external_extractors: dict[str, str] | None = None):
        self._builtin = dict(BUILTIN_PARSERS)
        self._external = dict(external_extractors or {})

    def knows(self, fmt: str) -> bool:
        fmt = fmt.lower().lstrip(".")
        return fmt in self._builtin or fmt in self._external

    def check(self, fmt: str) -> None:
        if not self.knows(fmt):
            raise UnknownFormat(f"no parser registered for format {fmt!r}")

    def kind(self, fmt: str) -> str:
        fmt = fmt.lower().lstrip(".")
        if fmt in self._builtin:
            return fmt if fmt != "htm" else "html"
        if fmt in self._external:
            return FORMAT_EXTERNAL
        raise UnknownFormat(f"no parser registered for format {fmt!r}")

    def parse_bytes(self, fmt: str, data: bytes) -> ParsedText:
        fmt = fmt.lower().lstrip(".")
        if fmt in self._builtin:
            return self._builtin[fmt](data)
        raise UnknownFormat(f"format {fmt!r} requires a file path (external extractor)")

    def parse_file(self, fmt: str, path: str) -> tuple[ParsedText, str | None]:
        """Parse a transcript file; returns (parsed, extractor_command_or_None)."""
        fmt = fmt.lower().lstrip(".")
        if fmt in self._builtin:
            with open(path, "rb") as fh:
                return self._builtin[fmt](fh.read()), None
        if fmt in self._external:
            cmd = self._external[fmt]
            return parse_external(path, cmd), cmd
        raise UnknownFormat(f"no parser registered for format {fmt!r}")


def build_document(
    transcript_id: str,
    fmt: str,
    parsed: ParsedText,
    profile: NormProfile,
    *,
    extractor: str | None = None,
    clean_hook: str | None = None,
    clean_prompt: str = DEFAULT_CLEANING_PROMPT,
    clean_prompt_version: str = DEFAULT_CLEANING_PROMPT_VERSION,
) -> TranscriptDocument:
    """Assemble a TranscriptDocument, applying the optional cleaning hook.

    Hook failures fall back to the uncleaned text and are recorded as a
    warning rather than failing the pair.
    """
    warnings = list(parsed.warnings)
    raw_text = parsed.text
    cleaning = CLEANING_NONE
    prompt_version = None
    if clean_hook:
        try:
            raw_text = llm_clean(parsed.text, clean_hook, clean_prompt)
            cleaning = CLEANING_LLM
            prompt_version = clean_prompt_version
        except HookFailed as exc:
            warnings.append(f"cleaning hook failed, using uncleaned text: {exc}")
            raw_text = parsed.text
    return TranscriptDocument(
        transcript_id=transcript_id,
        format=fmt,
        raw_text=raw_text,
        norm=normalize(raw_text, profile),
        cleaning=cleaning,
        cleaning_prompt_version=prompt_version,
        extractor=extractor,
        warnings=warnings,
    )
