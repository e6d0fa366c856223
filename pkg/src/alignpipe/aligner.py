"""Two-stage dynamic alignment of ASR segments against a transcript.

For each segment: a coarse sliding-window scan (window size = the segment's
word count) walks the transcript from the last matched position, gating on
CER; a refined sweep then varies start position and window length within a
local margin and keeps the span minimizing CER. Segments whose refined CER
exceeds the acceptance threshold retry the coarse scan from the transcript
start, and as a last resort a default match around the last matched position
is stored regardless of CER so coverage accounting stays complete.

All CER comparisons are exact integer comparisons: every window of one
segment shares the same denominator (the ASR text length), so candidate
ordering and tie-breaking reduce to comparing raw distances.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from .asr import AsrSegment
from .cer import CerPattern, CerValue, max_distance_within, to_fraction
from .errors import EmptyTranscript, NoCandidates, OutOfRange
from .textnorm import NormText, window_char_len, window_text

STAGE_COARSE_SEQ = "coarse_seq"
STAGE_COARSE_GLOBAL = "coarse_global"
STAGE_DEFAULT = "default_match"


@dataclass(frozen=True)
class AlignerConfig:
    """Thresholds for the two-stage search; stored in every manifest.

    theta gates acceptance, coarse_gate ends the coarse scan early, k bounds
    the fallback candidate count and margin_words the refined sweep. Windows
    whose CER exceeds skip_high_cer_threshold advance the scan by
    floor(window_size * skip_stride_fraction) instead of 1; skipped ranges are
    re-scanned as soon as the scan re-enters a low-CER region, so results stay
    identical to a stride-1 scan.
    """

    theta: Fraction = Fraction(3, 10)
    coarse_gate: Fraction = Fraction(3, 10)
    k: int = 3
    margin_words: int = 15
    skip_high_cer_threshold: Fraction = Fraction(7, 10)
    skip_stride_fraction: Fraction = Fraction(1, 2)

    def __post_init__(self):
        object.__setattr__(self, "theta", to_fraction(self.theta))
        object.__setattr__(self, "coarse_gate", to_fraction(self.coarse_gate))
        object.__setattr__(
            self, "skip_high_cer_threshold", to_fraction(self.skip_high_cer_threshold)
        )
        object.__setattr__(
            self, "skip_stride_fraction", to_fraction(self.skip_stride_fraction)
        )
        if not (0 < self.theta <= 1):
            raise ValueError("theta must be in (0, 1]")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.margin_words < 0:
            raise ValueError("margin_words must be >= 0")

    def to_dict(self) -> dict:
        return {
            "theta": str(self.theta),
            "coarse_gate": str(self.coarse_gate),
            "k": self.k,
            "margin_words": self.margin_words,
            "skip_high_cer_threshold": str(self.skip_high_cer_threshold),
            "skip_stride_fraction": str(self.skip_stride_fraction),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AlignerConfig":
        kwargs = {}
        for name in ("theta", "coarse_gate", "skip_high_cer_threshold", "skip_stride_fraction"):
            if name in d:
                kwargs[name] = to_fraction(d[name])
        for name in ("k", "margin_words"):
            if name in d:
                kwargs[name] = int(d[name])
        return cls(**kwargs)


@dataclass
class AlignerState:
    """Carries the transcript position between sequential segments."""

    last_end_idx: int = 0


@dataclass(frozen=True)
class Candidate:
    """A coarse-scan hit: window start token plus its exact distance."""

    start_idx: int
    distance: int


@dataclass(frozen=True)
class AlignmentMatch:
    """One (segment -> transcript span) result; span is half-open in tokens."""

    segment_id: str
    start_idx: int
    end_idx: int
    matched_text: str
    cer: CerValue
    stage: str
    accepted: bool


def coarse_search(
    asr: AsrSegment, t: NormText, start_idx: int, cfg: AlignerConfig
) -> list[Candidate]:
    """Slide a window of the segment's word count across the transcript.

    Returns a single candidate at the first window whose CER is below the
    coarse gate, else the k lowest-CER windows seen (ties broken by earliest
    start). High-CER stretches are strided over and re-scanned on re-entry
    into a low-CER region, keeping the outcome equal to a stride-1 scan.
    """
    token_count = len(t.tokens)
    if token_count == 0:
        raise EmptyTranscript("transcript has no tokens")
    if not (0 <= start_idx <= token_count):
        raise OutOfRange(f"start_idx {start_idx} outside [0, {token_count}]")

    n = len(asr.asr_norm.tokens)
    last_start = token_count - n
    if n == 0 or start_idx > last_start:
        return []

    ref = asr.asr_norm.char_form
    denom = len(ref)
    pattern = CerPattern(ref)
    k_high = max_distance_within(cfg.skip_high_cer_threshold, denom)
    gate = cfg.coarse_gate
    # Largest distance strictly below the gate; folded into the query bound so
    # a gate hit is always detected exactly, whatever the config relation
    # between gate and skip threshold.
    gate_max = (gate.numerator * denom - 1) // gate.denominator
    stride = max(1, (n * cfg.skip_stride_fraction.numerator)
                 // cfg.skip_stride_fraction.denominator)

    # k lowest (distance, start) seen, ties by earliest start.
    best: list[tuple[int, int]] = []

    def evaluate(pos: int) -> int | None:
        """Distance of the window at pos, or None when provably above the skip
        threshold, the gate, and the current k-th best."""
        if len(best) < cfg.k:
            bound = None
        else:
            # Equality matters: an earlier position tying the k-th best must
            # displace it, so the bound is inclusive of the incumbent.
            bound = max(k_high, gate_max, best[-1][0])
        text = window_text(t, pos, n)
        if bound is None:
            d = pattern.distance(text)
        else:
            d = pattern.distance_at_most(text, bound)
        if d is not None:
            entry = (d, pos)
            if len(best) < cfg.k or entry < best[-1]:
                best.append(entry)
                best.sort()
                del best[cfg.k:]
        return d

    def gate_hit(d: int) -> bool:
        return d <= gate_max

    # Phase 1: strided probe. High-CER windows advance by `stride`; the
    # skipped ranges are remembered for the catch-up pass.
    skipped: list[tuple[int, int]] = []
    hit: Candidate | None = None
    pos = start_idx
    while pos <= last_start:
        d = evaluate(pos)
        if d is not None and gate_hit(d):
            hit = Candidate(pos, d)
            break
        if (d is None or d > k_high) and stride > 1:
            nxt = pos + stride
            if pos + 1 < min(nxt, last_start + 1):
                skipped.append((pos + 1, min(nxt, last_start + 1)))
            pos = nxt
        else:
            pos += 1

    # Phase 2: catch-up rescan of skipped ranges in position order, so the
    # outcome (first gate hit, or exact k lowest) equals a stride-1 scan.
    limit = hit.start_idx if hit is not None else last_start + 1
    for lo, hi in skipped:
        for q in range(lo, min(hi, limit)):
            dq = evaluate(q)
            if dq is not None and gate_hit(dq):
                return [Candidate(q, dq)]
    if hit is not None:
        return [hit]
    return [Candidate(p, d) for d, p in best]


def refined_search(
    candidates: list[Candidate],
    asr: AsrSegment,
    t: NormText,
    cfg: AlignerConfig,
    stage: str,
) -> AlignmentMatch:
    """Exhaustive local sweep around the candidates, minimizing CER.

    Start positions vary within +/- margin_words of each candidate and window
    lengths within [max(1, L - margin), L + margin] where L is the segment
    word count. The sweep walks (start, length) in ascending order and keeps
    strictly better CER only, so ties resolve to the smallest CER, then start,
    then length. One prefix-distance pass per start position scores every
    window length at once.
    """
    if not candidates:
        raise NoCandidates("refined search needs at least one candidate")
    token_count = len(t.tokens)
    if token_count == 0:
        raise EmptyTranscript("transcript has no tokens")

    ref = asr.asr_norm.char_form
    denom = len(ref)
    pattern = CerPattern(ref)
    margin = cfg.margin_words
    L = len(asr.asr_norm.tokens)
    w_lo = max(1, L - margin)
    w_cap = L + margin

    starts: set[int] = set()
    for cand in candidates:
        lo = max(0, cand.start_idx - margin)
        hi = min(token_count - 1, cand.start_idx + margin)
        starts.update(range(lo, hi + 1))

    best_d: int | None = None
    best_s = -1
    best_w = 0
    for s in sorted(starts):
        w_hi = min(w_cap, token_count - s)
        if w_lo > w_hi:
            continue
        text = window_text(t, s, w_hi)
        prefs = pattern.prefix_distances(text)
        for w in range(w_lo, w_hi + 1):
            d = prefs[window_char_len(t, s, w)]
            if best_d is None or d < best_d:
                best_d, best_s, best_w = d, s, w

    if best_d is None:
        raise NoCandidates("no feasible window in the refined grid")

    value = CerValue(best_d, denom)
    return AlignmentMatch(
        segment_id=asr.segment_id,
        start_idx=best_s,
        end_idx=best_s + best_w,
        matched_text=window_text(t, best_s, best_w),
        cer=value,
        stage=stage,
        accepted=value.le_bound(cfg.theta),
    )


def align_segment(
    asr: AsrSegment, t: NormText, last_end_idx: int, cfg: AlignerConfig
) -> AlignmentMatch:
    """Run the full per-segment procedure: sequential coarse + refine, global
    restart, then default match around the last matched position."""
    token_count = len(t.tokens)
    if token_count == 0:
        raise EmptyTranscript("transcript has no tokens")

    match: AlignmentMatch | None = None
    cands = coarse_search(asr, t, last_end_idx, cfg)
    if cands:
        match = refined_search(cands, asr, t, cfg, STAGE_COARSE_SEQ)

    if match is None or not match.cer.le_bound(cfg.theta):
        gcands = coarse_search(asr, t, 0, cfg)
        gmatch = refined_search(gcands, asr, t, cfg, STAGE_COARSE_GLOBAL) if gcands else None
        if gmatch is not None and gmatch.cer.le_bound(cfg.theta):
            match = gmatch
        else:
            anchor = min(last_end_idx, token_count - 1)
            match = refined_search(
                [Candidate(anchor, 0)], asr, t, cfg, STAGE_DEFAULT
            )
    return match


def align_session(
    segments: list[AsrSegment], t: NormText, cfg: AlignerConfig
) -> list[AlignmentMatch | None]:
    """Align every segment in order, carrying the last matched end index.

    Returns one entry per segment; unusable (empty-transcription) segments
    yield None and do not move the sequential position.
    """
    if len(t.tokens) == 0:
        raise EmptyTranscript("transcript has no tokens")
    state = AlignerState()
    out: list[AlignmentMatch | None] = []
    for seg in segments:
        if not seg.usable:
            out.append(None)
            continue
        match = align_segment(seg, t, state.last_end_idx, cfg)
        out.append(match)
        state.last_end_idx = match.end_idx
    return out
