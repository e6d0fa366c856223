"""ASR bridge: machine transcriptions for each utterance, the alignment queries.

Recognition itself is strictly out-of-process (any model can sit behind the
adapter command); precomputed transcriptions can also be loaded from JSONL so
alignment runs without audio at all. After this module the aligner operates
purely on text.
"""

from __future__ import annotations

import json
import shlex
import subprocess
from dataclasses import dataclass
from pathlib import Path

from .errors import AdapterFailed, SchemaError
from .segmenter import SegmenterConfig, SpeechInterval
from .textnorm import NormProfile, NormText, normalize


@dataclass(frozen=True)
class AsrSegment:
    """One utterance: audio time span plus its machine transcription."""

    segment_id: str
    start_s: float
    end_s: float
    asr_text_raw: str
    asr_norm: NormText
    asr_model_tag: str = "external"

    @property
    def usable(self) -> bool:
        return len(self.asr_norm.tokens) > 0

    def duration(self) -> float:
        return self.end_s - self.start_s


def segment_id_for(session_id: str, index: int) -> str:
    return f"{session_id}_{index:05d}"


def transcribe_via_adapter(
    audio_path: str,
    intervals: list[SpeechInterval],
    adapter_command: str,
    *,
    session_id: str,
    profile: NormProfile,
    model_tag: str = "external",
    timeout_s: float = 3600.0,
) -> tuple[list[AsrSegment], list[str]]:
    """Transcribe intervals through an external ASR adapter.

    The adapter receives one JSON document on stdin:
        {"audio_path": ..., "intervals": [{"i": 0, "start_s": ..., "end_s": ...}, ...]}
    and emits one JSON line per interval: {"i": index, "text": "..."}.
    Missing indices or empty text yield unusable segments with a warning;
    a non-zero exit raises AdapterFailed.
    """
    request = {
        "audio_path": str(audio_path),
        "intervals": [
            {"i": i, "start_s": iv.start_s, "end_s": iv.end_s}
            for i, iv in enumerate(intervals)
        ],
    }
    argv = shlex.split(adapter_command)
    try:
        proc = subprocess.run(
            argv,
            input=json.dumps(request).encode("utf-8"),
            capture_output=True,
            timeout=timeout_s,
        )
    except subprocess.TimeoutExpired as exc:
        raise AdapterFailed(f"{argv[0]} exceeded {timeout_s}s") from exc
    except OSError as exc:
        raise AdapterFailed(f"{argv[0]}: {exc}") from exc
    if proc.returncode != 0:
        raise AdapterFailed(
            f"{argv[0]} exited {proc.returncode}: {proc.stderr.decode('utf-8', 'replace')[:200]}"
        )

    warnings: list[str] = []
    texts: dict[int, str] = {}
    for lineno, line in enumerate(proc.stdout.decode("utf-8", "replace").splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        try:
            obj = json.loads(line)
            idx = int(obj["i"])
            text = str(obj["text"])
        except (json.JSONDecodeError, KeyError, TypeError, ValueError):
            warnings.append(f"unparseable adapter line {lineno}: {line[:60]!r}")
            continue
        if idx in texts:
            warnings.append(f"duplicate adapter output for interval {idx}; first wins")
            continue
        texts[idx] = text

    segments: list[AsrSegment] = []
    for i, iv in enumerate(intervals):
        text = texts.get(i)
        if text is None:
            warnings.append(f"adapter produced no output for interval {i}")
            text = ""
        seg = AsrSegment(
            segment_id=segment_id_for(session_id, i),
            start_s=iv.start_s,
            end_s=iv.end_s,
            asr_text_raw=text,
            asr_norm=normalize(text, profile),
            asr_model_tag=model_tag,
        )
        if not seg.usable:
            warnings.append(f"segment {seg.segment_id} has empty transcription; unusable")
        segments.append(seg)
    return segments, warnings


def load_precomputed(
    jsonl_path: str | Path,
    *,
    profile: NormProfile,
    seg_cfg: SegmenterConfig | None = None,
    model_tag: str = "precomputed",
) -> list[AsrSegment]:
    """Load precomputed ASR output from JSONL.

    Each line: {"segment_id", "start_s", "end_s", "text"}. Raises SchemaError
    with the offending line number on missing fields, bad time spans, or
    durations outside the segmenter bounds.
    """
    segments: list[AsrSegment] = []
    seen_ids: set[str] = set()
    eps = 1e-9
    with open(jsonl_path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"invalid JSON: {exc}", line=lineno) from exc
            if not isinstance(obj, dict):
                raise SchemaError("expected a JSON object", line=lineno)
            missing = {"segment_id", "start_s", "end_s", "text"} - obj.keys()
            if missing:
                raise SchemaError(f"missing fields {sorted(missing)}", line=lineno)
            try:
                seg_id = str(obj["segment_id"])
                start_s = float(obj["start_s"])
                end_s = float(obj["end_s"])
                text = str(obj["text"])
            except (TypeError, ValueError) as exc:
                raise SchemaError(f"bad field types: {exc}", line=lineno) from exc
            if end_s <= start_s:
                raise SchemaError(f"end_s {end_s} <= start_s {start_s}", line=lineno)
            if seg_cfg is not None:
                dur = end_s - start_s
                if dur < seg_cfg.min_len_s - eps or dur > seg_cfg.max_len_s + eps:
                    raise SchemaError(
                        f"duration {dur:.3f}s outside "
                        f"[{seg_cfg.min_len_s}, {seg_cfg.max_len_s}]",
                        line=lineno,
                    )
            if seg_id in seen_ids:
                raise SchemaError(f"duplicate segment_id {seg_id!r}", line=lineno)
            seen_ids.add(seg_id)
            segments.append(
                AsrSegment(
                    segment_id=seg_id,
                    start_s=start_s,
                    end_s=end_s,
                    asr_text_raw=text,
                    asr_norm=normalize(text, profile),
                    asr_model_tag=model_tag,
                )
            )
    segments.sort(key=lambda s: s.start_s)
    return segments


def dump_segments_jsonl(segments: list[AsrSegment], path: str | Path) -> None:
    """Write segments in the precomputed-ASR schema (the transcribe stage's
    output doubles as load_precomputed() input)."""
    with open(path, "w", encoding="utf-8") as fh:
        for seg in segments:
            fh.write(
                json.dumps(
                    {
                        "segment_id": seg.segment_id,
                        "start_s": seg.start_s,
                        "end_s": seg.end_s,
                        "text": seg.asr_text_raw,
                    },
                    ensure_ascii=False,
                    sort_keys=True,
                )
                + "\n"
            )
