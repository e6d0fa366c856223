"""Resolve (audio x candidate transcripts x formats) ambiguity by median CER.

Every candidate pair is aligned; the best format per transcript wins by
median CER, then transcripts are kept per the configured criteria. Medians
are exact rationals; an even-count median is the lower middle element so no
averaging leaves the rational domain.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from .aligner import AlignmentMatch
from .asr import AsrSegment

CRITERIA_LOWEST = "lowest_median"
CRITERIA_ALL_BELOW = "all_below"


@dataclass(frozen=True)
class SelectionCriteria:
    kind: str = CRITERIA_LOWEST
    threshold: Fraction | None = None

    def __post_init__(self):
        if self.kind not in (CRITERIA_LOWEST, CRITERIA_ALL_BELOW):
            raise ValueError(f"unknown selection criteria {self.kind!r}")
        if self.kind == CRITERIA_ALL_BELOW and self.threshold is None:
            raise ValueError("all_below requires a threshold")


@dataclass(frozen=True)
class PairSummary:
    """Aggregate alignment quality of one (transcript_id, format) pair."""

    transcript_id: str
    format: str
    median_cer: Fraction | None
    accepted_fraction: float
    match_count: int
    total_aligned_ms: int

    @property
    def total_aligned_seconds(self) -> float:
        return self.total_aligned_ms / 1000.0


def median_lower(values: list[Fraction]) -> Fraction:
    """Median with the even-count case resolved to the lower middle element."""
    if not values:
        raise ValueError("median of empty list")
    ordered = sorted(values)
    return ordered[(len(ordered) - 1) // 2]


def summarize_pair(
    transcript_id: str,
    fmt: str,
    segments: list[AsrSegment],
    matches: list[AlignmentMatch | None],
) -> PairSummary:
    """Build the PairSummary for one aligned pair.

    Default-stage matches count toward the median: failed alignments are
    exactly what should penalize a wrong pairing.
    """
    cers: list[Fraction] = []
    accepted = 0
    total_ms = 0
    for seg, match in zip(segments, matches):
        if match is None:
            continue
        cers.append(match.cer.fraction)
        if match.accepted:
            accepted += 1
        total_ms += round((seg.end_s - seg.start_s) * 1000.0)
    count = len(cers)
    return PairSummary(
        transcript_id=transcript_id,
        format=fmt,
        median_cer=median_lower(cers) if count else None,
        accepted_fraction=(accepted / count) if count else 0.0,
        match_count=count,
        total_aligned_ms=total_ms,
    )


def _median_key(summary: PairSummary) -> Fraction:
    # Pairs with no matches sort after everything real.
    return summary.median_cer if summary.median_cer is not None else Fraction(10**9)


def select_format(per_format: list[PairSummary]) -> PairSummary:
    """Best format for one transcript: minimum median CER, ties to the larger
    match count, then lexicographic format name."""
    if not per_format:
        raise ValueError("select_format needs at least one summary")
    return min(per_format, key=lambda s: (_median_key(s), -s.match_count, s.format))


def select_transcripts(
    per_transcript: list[PairSummary], criteria: SelectionCriteria
) -> list[PairSummary]:
    """Keep transcripts per the configured criteria.

    lowest_median keeps the single best (ties to larger match count, then
    transcript id); all_below keeps every summary with median <= threshold,
    possibly none.
    """
    if not per_transcript:
        return []
    if criteria.kind == CRITERIA_LOWEST:
        best = min(
            per_transcript,
            key=lambda s: (_median_key(s), -s.match_count, s.transcript_id),
        )
        if best.median_cer is None:
            return []
        return [best]
    threshold = criteria.threshold
    return [
        s
        for s in per_transcript
        if s.median_cer is not None and s.median_cer <= threshold
    ]
