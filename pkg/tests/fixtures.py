"""Synthetic fixture generators shared by aligner, selector and pipeline tests."""

from __future__ import annotations

import random

from alignpipe.asr import AsrSegment, segment_id_for
from alignpipe.textnorm import DEFAULT_PROFILE, NormText, normalize

WORDS = (
    "the of and to in is that it for on with as his they at be this from have "
    "or by one had not but what all were when we there can an your which their "
    "said if do will each about how up out them then she many some so these "
    "would other into has more her two like him see time could no make than "
    "first been its who now people my made over did down only way find use may "
    "water long little very after words called just where most know government "
    "house member question report committee minister president budget law vote "
    "debate session motion amendment proposal region citizens policy economy"
).split()

DECOY_WORDS = (
    "applause interruption laughter chairman order order gavel recess quorum "
    "stenographer annex page footnote session adjourned protocol registry"
).split()


def make_sentence(rng: random.Random, n_tokens: int) -> str:
    return " ".join(rng.choice(WORDS) for _ in range(n_tokens))


def noisy_copy(rng: random.Random, text: str, rate: float) -> str:
    """Apply character-level edits (sub/ins/del) at roughly `rate` per char."""
    if rate <= 0:
        return text
    alphabet = "abcdefghijklmnopqrstuvwxyz"
    out = []
    for ch in text:
        r = rng.random()
        if r < rate / 3:
            continue  # deletion
        if r < 2 * rate / 3:
            out.append(rng.choice(alphabet))  # substitution
        else:
            out.append(ch)
            if r < rate:
                out.append(rng.choice(alphabet))  # insertion
    return "".join(out)


def make_segment(session_id: str, index: int, text: str, start_s: float) -> AsrSegment:
    dur = 3.0 + (len(text) % 14)
    return AsrSegment(
        segment_id=segment_id_for(session_id, index),
        start_s=start_s,
        end_s=start_s + dur,
        asr_text_raw=text,
        asr_norm=normalize(text, DEFAULT_PROFILE),
    )


def build_fixture(
    rng: random.Random,
    *,
    n_segments: int,
    seg_tokens=(5, 16),
    noise_rate: float = 0.0,
    decoy_fraction: float = 0.0,
    filler_tokens: int = 0,
):
    """A transcript planted with one contiguous span per segment.

    Returns (segments, transcript NormText, spans) where spans[i] is the
    half-open token range segment i was planted at. Decoy runs are inserted
    between spans amounting to ~decoy_fraction of the final token stream;
    filler_tokens of unrelated text is appended at the end. ASR text receives
    character noise at noise_rate.
    """
    texts: list[str] = []
    seen = set()
    for _ in range(n_segments):
        while True:
            t = make_sentence(rng, rng.randint(*seg_tokens))
            if t not in seen:
                seen.add(t)
                texts.append(t)
                break

    total_tokens = sum(len(t.split()) for t in texts)
    decoy_budget = int(total_tokens * decoy_fraction / max(1e-9, 1.0 - decoy_fraction))

    transcript_tokens: list[str] = []
    spans: list[tuple[int, int]] = []
    for i, text in enumerate(texts):
        if decoy_budget > 0 and (i > 0 or rng.random() < 0.5):
            run = min(decoy_budget, rng.randint(1, 4))
            transcript_tokens.extend(rng.choice(DECOY_WORDS) for _ in range(run))
            decoy_budget -= run
        toks = text.split()
        spans.append((len(transcript_tokens), len(transcript_tokens) + len(toks)))
        transcript_tokens.extend(toks)
    while decoy_budget > 0:
        transcript_tokens.append(rng.choice(DECOY_WORDS))
        decoy_budget -= 1
    if filler_tokens:
        transcript_tokens.extend(rng.choice(WORDS) for _ in range(filler_tokens))

    segments = []
    t0 = 0.0
    for i, text in enumerate(texts):
        asr_text = noisy_copy(rng, text, noise_rate)
        seg = make_segment("fx", i, asr_text, t0)
        t0 = seg.end_s + 1.0
        segments.append(seg)

    transcript = normalize(" ".join(transcript_tokens), DEFAULT_PROFILE)
    return segments, transcript, spans


def random_noise_text(rng: random.Random, n_tokens: int) -> str:
    """Token soup sharing almost no characters with the fixture vocabulary."""
    return " ".join(
        "".join(rng.choice("qxzjvwk") for _ in range(rng.randint(4, 8)))
        for _ in range(n_tokens)
    )
