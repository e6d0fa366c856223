"""CER-tier filtering, output JSON emission, duration stats and session splits.

Durations accumulate as integer milliseconds and CER values serialize as
6-decimal strings, so emitted files are byte-stable across runs and safe to
compare in crash-resume checks.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

from .aligner import AlignmentMatch
from .asr import AsrSegment
from .cer import to_fraction
from .errors import WriteFailed
from .selector import PairSummary

DEFAULT_TIERS = (Fraction(3, 10), Fraction(2, 10), Fraction(1, 10))
SPLIT_NAMES = ("train", "dev", "test")
DEFAULT_SPLIT_RATIOS = (Fraction(98, 100), Fraction(1, 100), Fraction(1, 100))


def tier_key(threshold: Fraction) -> str:
    return f"{float(threshold):.2f}"


def format_cer(match: AlignmentMatch) -> str:
    return f"{match.cer.distance / match.cer.denom:.6f}"


@dataclass
class TierStats:
    """Aligned duration bucketed by CER threshold."""

    thresholds: tuple[Fraction, ...] = DEFAULT_TIERS
    total_ms: int = 0
    tier_ms: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        for t in self.thresholds:
            self.tier_ms.setdefault(tier_key(t), 0)

    def add_match(self, duration_ms: int, cer: Fraction) -> None:
        self.total_ms += duration_ms
        for t in self.thresholds:
            if cer < t:
                self.tier_ms[tier_key(t)] += duration_ms

    def merge(self, other: "TierStats") -> None:
        self.total_ms += other.total_ms
        for key, ms in other.tier_ms.items():
            self.tier_ms[key] = self.tier_ms.get(key, 0) + ms

    @property
    def total_seconds(self) -> float:
        return self.total_ms / 1000.0

    def hours(self, threshold: Fraction) -> float:
        return self.tier_ms[tier_key(threshold)] / 3_600_000.0

    def to_dict(self) -> dict:
        return {
            "total_aligned_s": round(self.total_ms / 1000.0, 3),
            "tier_hours": {
                key: round(ms / 3_600_000.0, 6)
                for key, ms in sorted(self.tier_ms.items())
            },
        }


def filter_tier(
    matches: list[AlignmentMatch | None], threshold: float | str | Fraction
) -> list[AlignmentMatch]:
    """Matches with CER strictly below the threshold (null matches dropped)."""
    frac = to_fraction(threshold)
    return [m for m in matches if m is not None and m.cer.lt_bound(frac)]


def tier_stats_for(
    segments: list[AsrSegment],
    matches: list[AlignmentMatch | None],
    thresholds: tuple[Fraction, ...] = DEFAULT_TIERS,
) -> TierStats:
    stats = TierStats(thresholds=thresholds)
    for seg, match in zip(segments, matches):
        if match is None:
            continue
        stats.add_match(round((seg.end_s - seg.start_s) * 1000.0), match.cer.fraction)
    return stats


# --- output files ------------------------------------------------------------


def _atomic_write_text(path: Path, text: str) -> None:
    try:
        tmp = path.with_name(path.name + ".tmp")
        tmp.write_text(text, encoding="utf-8")
        os.replace(tmp, path)
    except OSError as exc:
        raise WriteFailed(f"{path}: {exc}") from exc


def pair_summary_dict(summary: PairSummary) -> dict:
    return {
        "transcript_id": summary.transcript_id,
        "format": summary.format,
        "median_cer": (
            f"{float(summary.median_cer):.6f}" if summary.median_cer is not None else None
        ),
        "accepted_fraction": round(summary.accepted_fraction, 6),
        "match_count": summary.match_count,
        "total_aligned_s": round(summary.total_aligned_ms / 1000.0, 3),
    }


def emit_session_summary(
    path: str | Path,
    *,
    session_id: str,
    media_ref: str,
    language: str,
    norm_profile: dict,
    aligner_config: dict,
    pair_summaries: list[PairSummary],
    selection: list[tuple[str, str]],
    stats: TierStats,
    segment_count: int,
    usable_segment_count: int,
) -> dict:
    """Write the per-session summary JSON; returns the document."""
    doc = {
        "session_id": session_id,
        "media": media_ref,
        "language": language,
        "norm_profile": norm_profile,
        "aligner_config": aligner_config,
        "segment_count": segment_count,
        "usable_segment_count": usable_segment_count,
        "pairs": [
            pair_summary_dict(s)
            for s in sorted(pair_summaries, key=lambda s: (s.transcript_id, s.format))
        ],
        "selected": [
            {"transcript_id": tid, "format": fmt} for tid, fmt in sorted(selection)
        ]
        or None,
        "tier_stats": stats.to_dict(),
    }
    _atomic_write_text(
        Path(path), json.dumps(doc, ensure_ascii=False, indent=2, sort_keys=True) + "\n"
    )
    return doc


def emit_alignment_file(
    path: str | Path,
    *,
    session_id: str,
    transcript_id: str,
    fmt: str,
    segments: list[AsrSegment],
    matches: list[AlignmentMatch | None],
) -> dict:
    """Write one alignment JSON: a record per segment, matched or not."""
    records = []
    for seg, match in zip(segments, matches):
        rec = {
            "segment_id": seg.segment_id,
            "start_s": round(seg.start_s, 3),
            "end_s": round(seg.end_s, 3),
            "asr_text": seg.asr_text_raw,
            "matched_text": match.matched_text if match else None,
            "cer": format_cer(match) if match else None,
            "stage": match.stage if match else None,
            "accepted": match.accepted if match else False,
        }
        records.append(rec)
    doc = {
        "session_id": session_id,
        "transcript_id": transcript_id,
        "format": fmt,
        "segments": records,
    }
    _atomic_write_text(
        Path(path), json.dumps(doc, ensure_ascii=False, indent=2, sort_keys=True) + "\n"
    )
    return doc


# --- splits ------------------------------------------------------------------


@dataclass(frozen=True)
class SplitAssignment:
    assignment: dict[str, str]
    ratios: tuple[Fraction, Fraction, Fraction]
    seed: int

    def split_of(self, session_id: str) -> str:
        return self.assignment[session_id]


def assign_splits(
    session_ids: list[str],
    ratios: tuple | list = DEFAULT_SPLIT_RATIOS,
    seed: int = 0,
) -> SplitAssignment:
    """Deterministic session-exclusive split assignment.

    Sessions order by the hash of (seed, session_id); cuts fall at the exact
    cumulative ratio boundaries, so realized counts are within one session of
    the targets.
    """
    fracs = tuple(to_fraction(r) for r in ratios)
    if len(fracs) != 3 or sum(fracs) != 1:
        raise ValueError("ratios must be three values summing to 1")
    ordered = sorted(
        set(session_ids),
        key=lambda sid: (
            hashlib.sha256(f"{seed}:{sid}".encode("utf-8")).hexdigest(),
            sid,
        ),
    )
    n = len(ordered)
    cut1 = (n * fracs[0].numerator) // fracs[0].denominator
    cum2 = fracs[0] + fracs[1]
    cut2 = (n * cum2.numerator) // cum2.denominator
    assignment = {}
    for i, sid in enumerate(ordered):
        if i < cut1:
            assignment[sid] = "train"
        elif i < cut2:
            assignment[sid] = "dev"
        else:
            assignment[sid] = "test"
    return SplitAssignment(assignment=assignment, ratios=fracs, seed=seed)


# --- corpus-level aggregation -------------------------------------------------


def corpus_stats(summaries: list[dict]) -> dict[str, dict]:
    """Aggregate emitted session summaries into a per-language tier table.

    Sums are exact: per-session tier milliseconds are reconstructed from the
    rounded hour values only if raw values are absent, so callers should pass
    the original summary documents.
    """
    table: dict[str, dict] = {}
    for doc in summaries:
        lang = doc.get("language") or "und"
        tier = doc["tier_stats"]
        row = table.setdefault(
            lang,
            {"sessions": 0, "total_aligned_s": 0.0, "tier_hours": {}},
        )
        row["sessions"] += 1
        row["total_aligned_s"] = round(row["total_aligned_s"] + tier["total_aligned_s"], 3)
        for key, hours in tier["tier_hours"].items():
            row["tier_hours"][key] = round(row["tier_hours"].get(key, 0.0) + hours, 6)
    return dict(sorted(table.items()))


def manifest_row(
    *,
    segment_id: str,
    audio_path: str,
    start_s: float,
    end_s: float,
    text: str,
    cer: str,
    language: str,
    split: str,
) -> str:
    """One training-ready manifest line (JSONL)."""
    return json.dumps(
        {
            "segment_id": segment_id,
            "audio_path": audio_path,
            "start_s": round(start_s, 3),
            "end_s": round(end_s, 3),
            "text": text,
            "cer": cer,
            "language": language,
            "split": split,
        },
        ensure_ascii=False,
        sort_keys=True,
    )
