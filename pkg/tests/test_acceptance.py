"""Acceptance suite: one test per criterion, every tolerance pinned.

Each criterion prints its own PASS line (visible with -s / in captured
output); a test failure is the criterion's FAIL.
"""

import json
import random
import string
import time
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest

from alignpipe.aligner import AlignerConfig, align_session
from alignpipe.cer import CerPattern, banded_cer_at_most, cer, edit_distance, ABOVE_BOUND
from alignpipe.cli import main
from alignpipe.dataset import assign_splits, filter_tier
from alignpipe.segmenter import SegmenterConfig, segment_audio
from alignpipe.selector import SelectionCriteria, select_transcripts, summarize_pair
from alignpipe.textnorm import normalize

from corpus import build_corpus, read_manifest, snapshot_outputs
from fixtures import build_fixture, make_segment, make_sentence, random_noise_text
from oracles import oracle_align_session, oracle_edit_distance

CFG = AlignerConfig()


def _report(criterion: int, description: str) -> None:
    print(f"[PASS] criterion {criterion}: {description}")


def _match_tuple(m):
    return None if m is None else (
        m.start_idx, m.end_idx, m.cer.distance, m.cer.denom, m.stage, m.accepted
    )


def _oracle_tuple(m):
    return None if m is None else (
        m["start_idx"], m["end_idx"], m["cer"].distance, m["cer"].denom,
        m["stage"], m["accepted"],
    )


# --- 1: CER oracle equivalence ---------------------------------------------------


def test_criterion_1_cer_oracle_equivalence():
    rng = random.Random(20240601)
    deadline = 30.0
    start = time.monotonic()
    for i in range(10_000):
        alpha_size = rng.randint(2, 30)
        alphabet = string.ascii_lowercase + string.digits[: max(0, alpha_size - 26)]
        alphabet = alphabet[:alpha_size]
        a = "".join(rng.choice(alphabet) for _ in range(rng.randint(0, 64)))
        b = "".join(rng.choice(alphabet) for _ in range(rng.randint(0, 64)))
        want = oracle_edit_distance(a, b)
        assert edit_distance(a, b) == want, (a, b)
        if b:
            bound = Fraction(rng.randint(0, 12), 10)
            got = banded_cer_at_most(a, b, bound)
            exact = Fraction(want, len(b))
            if exact <= bound:
                assert got is not ABOVE_BOUND and got.fraction == exact, (a, b, bound)
            elif got is not ABOVE_BOUND:
                assert got.fraction == exact, (a, b, bound)
    elapsed = time.monotonic() - start
    assert elapsed < deadline, f"took {elapsed:.1f}s"
    _report(1, f"10,000 pairs, banded + exact agree with full DP ({elapsed:.1f}s < 30s)")


# --- 2: aligner oracle equivalence ------------------------------------------------


def test_criterion_2_aligner_oracle_equivalence():
    deadline = 300.0
    start = time.monotonic()
    for seed in range(500):
        rng = random.Random(91_000 + seed)
        segments, t, _ = build_fixture(
            rng,
            n_segments=rng.randint(5, 20),
            seg_tokens=(5, 16),
            noise_rate=rng.uniform(0.0, 0.4),
            decoy_fraction=rng.uniform(0.0, 0.2),
            filler_tokens=rng.randint(0, 60),
        )
        assert len(t.tokens) <= 500
        got = [_match_tuple(m) for m in align_session(segments, t, CFG)]
        want = [_oracle_tuple(m) for m in oracle_align_session(segments, t, CFG)]
        assert got == want, f"fixture seed {seed}"
    elapsed = time.monotonic() - start
    assert elapsed < deadline, f"took {elapsed:.1f}s"
    _report(2, f"500 fixtures match the stride-1 oracle exactly ({elapsed:.0f}s < 300s)")


# --- 3: verbatim recovery ----------------------------------------------------------


def test_criterion_3_verbatim_recovery():
    for seed in range(100):
        rng = random.Random(37_000 + seed)
        segments, t, spans = build_fixture(rng, n_segments=rng.randint(5, 15))
        matches = align_session(segments, t, CFG)
        prev_end = 0
        for m, (lo, hi) in zip(matches, spans):
            assert m is not None and m.cer.distance == 0
            assert (m.start_idx, m.end_idx) == (lo, hi)
            assert m.start_idx == prev_end
            assert m.end_idx > prev_end  # strictly increasing trace
            prev_end = m.end_idx
        assert prev_end == len(t.tokens)  # spans partition the transcript
    _report(3, "100 verbatim fixtures: CER 0, spans partition, trace increasing")


# --- 4: fallback behavior -----------------------------------------------------------


def test_criterion_4_fallback_behavior():
    for seed in range(50):
        rng = random.Random(41_000 + seed)
        segments, _, _ = build_fixture(rng, n_segments=6, seg_tokens=(6, 10))
        texts = [s.asr_text_raw for s in segments]
        moved = texts[3]
        transcript = normalize(" ".join([moved] + texts[:3] + texts[4:]))
        matches = align_session(segments, transcript, CFG)
        assert matches[3].stage == "coarse_global", f"seed {seed}"
        assert matches[3].accepted

    for seed in range(50):
        rng = random.Random(43_000 + seed)
        segments, t, _ = build_fixture(rng, n_segments=5, seg_tokens=(6, 10))
        noise = make_segment("fx", 99, random_noise_text(rng, 6), 500.0)
        matches = align_session(segments[:3] + [noise] + segments[3:], t, CFG)
        assert matches[3].stage == "default_match", f"seed {seed}"
        assert matches[3].accepted is False
        assert matches[3].cer.fraction > CFG.theta
    _report(4, "50/50 fixtures: out-of-order -> coarse_global, noise -> default_match")


# --- 5: noisy recovery rate ----------------------------------------------------------


def test_criterion_5_noisy_recovery_rate():
    total = 0
    recovered = 0
    for seed in range(200):
        rng = random.Random(53_000 + seed)
        segments, t, spans = build_fixture(
            rng,
            n_segments=rng.randint(5, 12),
            seg_tokens=(6, 14),
            noise_rate=rng.uniform(0.0, 0.10),
            decoy_fraction=0.20,
        )
        matches = align_session(segments, t, CFG)
        for m, (lo, hi) in zip(matches, spans):
            total += 1
            if m is not None and abs(m.start_idx - lo) <= 2 and abs(m.end_idx - hi) <= 2:
                recovered += 1
    rate = recovered / total
    assert rate >= 0.95, f"recovery rate {rate:.4f} < 0.95"
    _report(5, f"{recovered}/{total} segments within ±2 tokens ({rate:.2%} >= 95%)")


# --- 6: selection correctness ---------------------------------------------------------


def test_criterion_6_selection_correctness():
    qualifying = 0
    attempts = 0
    while qualifying < 100:
        attempts += 1
        assert attempts <= 300, "could not build 100 qualifying fixtures"
        rng = random.Random(61_000 + attempts)
        segments, truth, _ = build_fixture(rng, n_segments=5, noise_rate=0.04)
        summaries = [
            summarize_pair("truth", "txt", segments, align_session(segments, truth, CFG))
        ]
        for d in range(3):
            decoy = normalize(
                " ".join(make_sentence(rng, rng.randint(5, 12)) for _ in range(7))
            )
            summaries.append(
                summarize_pair(
                    f"decoy{d}", "txt", segments, align_session(segments, decoy, CFG)
                )
            )
        gap = min(s.median_cer for s in summaries[1:]) - summaries[0].median_cer
        if gap < Fraction(1, 10):
            continue
        qualifying += 1
        chosen = select_transcripts(summaries, SelectionCriteria("lowest_median"))
        assert [s.transcript_id for s in chosen] == ["truth"], f"attempt {attempts}"
    _report(6, f"100/100 qualifying fixtures select the planted transcript")


# --- 7 & 11: end-to-end hermetic run ---------------------------------------------------


@pytest.fixture(scope="module")
def e2e_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("accept_corpus")
    corpus = build_corpus(root)
    start = time.monotonic()
    rc = main(["--config", str(corpus["config"]), "run-all"])
    elapsed = time.monotonic() - start
    return corpus, rc, elapsed


def test_criterion_11_end_to_end_hermetic(e2e_run):
    corpus, rc, elapsed = e2e_run
    assert rc == 0
    assert elapsed < 120.0, f"run-all took {elapsed:.1f}s"
    manifest = read_manifest(corpus["store"])
    assert len(manifest) == sum(corpus["expected_segments"].values())
    assert all(row["cer"] == "0.000000" for row in manifest)
    # per-session counts
    by_session = {}
    for row in manifest:
        sid = row["segment_id"].rsplit("_", 1)[0]
        by_session[sid] = by_session.get(sid, 0) + 1
    assert by_session == corpus["expected_segments"]
    _report(11, f"hermetic corpus through emit in {elapsed:.1f}s < 120s, all CER 0")


def test_criterion_7_tier_consistency(e2e_run):
    corpus, rc, _ = e2e_run
    assert rc == 0
    summaries = sorted(corpus["store"].glob("artifacts/*/summary.json"))
    assert summaries
    for path in summaries:
        doc = json.loads(path.read_text(encoding="utf-8"))
        hours = doc["tier_stats"]["tier_hours"]
        assert hours["0.10"] <= hours["0.20"] <= hours["0.30"]
        assert hours["0.30"] * 3600.0 <= doc["tier_stats"]["total_aligned_s"] + 1e-9

    # filter_tier inclusion over randomized match sets
    rng = random.Random(71)
    segments, t, _ = build_fixture(rng, n_segments=12, noise_rate=0.3)
    matches = align_session(segments, t, CFG)
    thresholds = [0.05, 0.1, 0.2, 0.3, 0.5, 1.0]
    for lo, hi in zip(thresholds, thresholds[1:]):
        inner = {m.segment_id for m in filter_tier(matches, lo)}
        outer = {m.segment_id for m in filter_tier(matches, hi)}
        assert inner <= outer
    _report(7, "tier hour ordering and filter inclusion hold on every summary")


# --- 8: split exclusivity ----------------------------------------------------------------


def test_criterion_8_split_exclusivity():
    sids = [f"session{i:04d}" for i in range(1000)]
    assignment = assign_splits(sids, (0.98, 0.01, 0.01), seed=99)
    counts = {"train": 0, "dev": 0, "test": 0}
    segment_split: dict[str, set] = {}
    for sid in sids:
        split = assignment.split_of(sid)
        counts[split] += 1
        for k in range(3):  # three segments per synthetic session
            segment_split.setdefault(sid, set()).add(split)
    for sid, splits in segment_split.items():
        assert len(splits) == 1, f"{sid} straddles splits"
    assert abs(counts["train"] - 980) <= 1
    assert abs(counts["dev"] - 10) <= 1
    assert abs(counts["test"] - 10) <= 1
    _report(8, f"1000 sessions: counts {counts} within ±1 of targets, no straddle")


# --- 9: crash-resume ---------------------------------------------------------------------


def test_criterion_9_crash_resume(tmp_path):
    corpus = build_corpus(tmp_path / "corpus")

    def fresh_config(tag: str) -> tuple[Path, Path]:
        store = tmp_path / f"store_{tag}"
        cfg = dict(corpus["config_dict"])
        cfg["store_dir"] = str(store)
        path = tmp_path / f"config_{tag}.json"
        path.write_text(json.dumps(cfg), encoding="utf-8")
        return path, store

    def normalized(store: Path) -> dict[str, bytes]:
        return {
            k: v.replace(str(store).encode(), b"STORE")
            for k, v in snapshot_outputs(store).items()
        }

    cfg_ref, store_ref = fresh_config("ref")
    assert main(["--config", str(cfg_ref), "run-all"]) == 0
    reference = normalized(store_ref)
    assert reference

    boundaries = ("ingest", "fetch", "segment", "transcribe", "align",
                  "select", "emit", "splits")
    for boundary in boundaries:
        cfg_b, store_b = fresh_config(f"b_{boundary}")
        assert main(["--config", str(cfg_b), "run-all", "--stop-after", boundary]) == 0
        assert main(["--config", str(cfg_b), "run-all"]) == 0  # resume
        assert normalized(store_b) == reference, f"boundary {boundary}"
    _report(9, f"resume after each of {len(boundaries)} boundaries is byte-identical")


# --- 10: segmenter bounds ------------------------------------------------------------------


def test_criterion_10_segmenter_bounds():
    cfg = SegmenterConfig()
    sr = 16000
    emitted = 0
    for seed in range(100):
        rng = np.random.default_rng(83_000 + seed)
        parts = [np.zeros(int(sr * rng.uniform(0.3, 1.0)))]
        for _ in range(int(rng.integers(1, 5))):
            dur = float(rng.uniform(1.0, 30.0))
            freq = float(rng.uniform(150, 900))
            amp = float(rng.uniform(0.3, 0.7))
            t = np.arange(int(dur * sr)) / sr
            parts.append(amp * np.sin(2 * np.pi * freq * t))
            parts.append(np.zeros(int(sr * rng.uniform(0.5, 2.0))))
        samples = np.concatenate(parts)
        for iv in segment_audio(samples, sr, cfg):
            emitted += 1
            assert cfg.min_len_s <= iv.duration() <= cfg.max_len_s, f"seed {seed}"
    assert emitted > 100  # the fixtures actually produced utterances
    _report(10, f"{emitted} utterances across 100 fixtures all within [3, 20] s")
