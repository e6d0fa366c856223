"""Stage runners tying the modules together over the job store.

Every stage claims eligible sessions, does its work against deterministic
artifact paths, and records the transition. Identical reruns overwrite the
same files with the same bytes, which is what makes crash-resume and
stage-by-stage execution byte-identical to an uninterrupted run.
"""

from __future__ import annotations

import json
import sys
import threading
import time
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

from . import dataset as ds
from .aligner import align_session
from .asr import dump_segments_jsonl, load_precomputed, transcribe_via_adapter
from .audio import read_wav_mono
from .config import PipelineConfig
from .errors import PipelineError, StageOrderViolation
from .ingest import HandlerRegistry, fetch, parse_links_csv
from .jobstore import STAGE_ORDER, STAGE_SOURCES, JobStore, SessionRecord
from .segmenter import SpeechInterval, enforce_duration, frame_energies, segment_audio, vad_adapter
from .selector import PairSummary, select_format, select_transcripts, summarize_pair
from .transcripts import ParserRegistry, build_document

PIPELINE_STAGES = ("fetch", "segment", "transcribe", "align", "select", "emit")


def log_event(event: str, **fields) -> None:
    """Machine-readable progress: one JSON line per event on stdout."""
    print(json.dumps({"event": event, **fields}, ensure_ascii=False, sort_keys=True), flush=True)


def _say(msg: str) -> None:
    print(msg, file=sys.stderr, flush=True)


def open_store(cfg: PipelineConfig) -> JobStore:
    return JobStore(
        cfg.store_dir,
        max_retries=cfg.max_retries,
        lease_timeout_s=cfg.lease_timeout_s,
    )


# --- per-session stage implementations ----------------------------------------


def run_ingest(cfg: PipelineConfig, store: JobStore, links_csv: Path) -> int:
    """Register sessions from the links CSV; returns how many are new."""
    registry = ParserRegistry(cfg.extractors)
    records = parse_links_csv(links_csv)
    for record in records:
        for entry in record.transcripts:
            registry.check(entry["format"])  # UnknownFormat before any download
    added = 0
    for record in records:
        if store.add_session(record):
            added += 1
            log_event("transition", session=record.session_id, to="pending", stage="ingest")
    return added


def stage_fetch(cfg: PipelineConfig, store: JobStore, record: SessionRecord) -> str:
    registry = HandlerRegistry.from_config(cfg.handlers)
    record.job.state = "downloading"
    store.put(record)
    fetch(
        record,
        registry,
        store,
        convert_command=cfg.convert_command,
        timeout_s=cfg.stage_timeout_s,
    )
    return "downloaded"


def _intervals_path(store: JobStore, sid: str) -> Path:
    return store.artifact_dir(sid) / "intervals.json"


def stage_segment(cfg: PipelineConfig, store: JobStore, record: SessionRecord) -> str:
    art = store.artifact_dir(record.session_id)
    wav = art / "media.wav"
    if cfg.vad_command:
        intervals, warnings = vad_adapter(str(wav), cfg.vad_command, timeout_s=cfg.stage_timeout_s)
        for w in warnings:
            log_event("warning", session=record.session_id, stage="segment", message=w)
        intervals = enforce_duration(intervals, cfg.segmenter)
        sample_rate = None
    else:
        samples, sample_rate = read_wav_mono(wav)
        intervals = segment_audio(samples, sample_rate, cfg.segmenter)
    doc = {
        "sample_rate": sample_rate,
        "intervals": [
            {"start_s": round(iv.start_s, 6), "end_s": round(iv.end_s, 6), "source": iv.source}
            for iv in intervals
        ],
    }
    ds._atomic_write_text(
        _intervals_path(store, record.session_id),
        json.dumps(doc, indent=2, sort_keys=True) + "\n",
    )
    return "segmented"


def _load_intervals(store: JobStore, sid: str) -> list[SpeechInterval]:
    doc = json.loads(_intervals_path(store, sid).read_text(encoding="utf-8"))
    return [
        SpeechInterval(iv["start_s"], iv["end_s"], iv.get("source", "energy_vad"))
        for iv in doc["intervals"]
    ]


def stage_transcribe(cfg: PipelineConfig, store: JobStore, record: SessionRecord) -> str:
    art = store.artifact_dir(record.session_id)
    intervals = _load_intervals(store, record.session_id)
    segments, warnings = transcribe_via_adapter(
        str(art / "media.wav"),
        intervals,
        cfg.asr_command,
        session_id=record.session_id,
        profile=cfg.norm_profile,
        model_tag=cfg.asr_model_tag,
        timeout_s=cfg.stage_timeout_s,
    )
    for w in warnings:
        log_event("warning", session=record.session_id, stage="transcribe", message=w)
    dump_segments_jsonl(segments, art / "asr.jsonl")
    return "transcribed"


def stage_align(cfg: PipelineConfig, store: JobStore, record: SessionRecord) -> str:
    art = store.artifact_dir(record.session_id)
    segments = load_precomputed(
        art / "asr.jsonl", profile=cfg.norm_profile, seg_cfg=cfg.segmenter,
        model_tag=cfg.asr_model_tag,
    )
    registry = ParserRegistry(cfg.extractors)
    align_dir = art / "alignments"
    align_dir.mkdir(exist_ok=True)

    pairs: list[dict] = []
    ok_pairs = 0
    for entry in sorted(record.transcripts, key=lambda e: (e["transcript_id"], e["format"])):
        tid, fmt = entry["transcript_id"], entry["format"]
        tpath = art / "transcripts" / f"{tid}.{fmt}"
        pair: dict = {"transcript_id": tid, "format": fmt}
        try:
            parsed, extractor = registry.parse_file(fmt, str(tpath))
            hook = cfg.llm_clean_command if fmt in cfg.llm_clean_formats else None
            doc = build_document(
                tid, fmt, parsed, cfg.norm_profile,
                extractor=extractor,
                clean_hook=hook,
                clean_prompt=cfg.llm_prompt,
                clean_prompt_version=cfg.llm_prompt_version,
            )
            for w in doc.warnings:
                log_event("warning", session=record.session_id, stage="align",
                          transcript=tid, message=w)
            matches = align_session(segments, doc.norm, cfg.aligner)
        except PipelineError as exc:
            pair["error"] = f"{type(exc).__name__}: {exc}"
            pairs.append(pair)
            log_event("warning", session=record.session_id, stage="align",
                      transcript=tid, message=pair["error"])
            continue

        ds.emit_alignment_file(
            align_dir / f"{tid}.{fmt}.json",
            session_id=record.session_id,
            transcript_id=tid,
            fmt=fmt,
            segments=segments,
            matches=matches,
        )
        summary = summarize_pair(tid, fmt, segments, matches)
        pair["summary"] = {
            "median_cer": str(summary.median_cer) if summary.median_cer is not None else None,
            "accepted_fraction": summary.accepted_fraction,
            "match_count": summary.match_count,
            "total_aligned_ms": summary.total_aligned_ms,
        }
        pair["cleaning"] = doc.cleaning
        pair["matches"] = [
            None
            if m is None
            else {
                "segment_id": seg.segment_id,
                "start_s": seg.start_s,
                "end_s": seg.end_s,
                "distance": m.cer.distance,
                "denom": m.cer.denom,
                "stage": m.stage,
                "accepted": m.accepted,
                "matched_text": m.matched_text,
            }
            for seg, m in zip(segments, matches)
        ]
        pairs.append(pair)
        ok_pairs += 1

    if record.transcripts and ok_pairs == 0:
        raise PipelineError("every candidate transcript failed to parse or align")
    ds._atomic_write_text(
        art / "pairs.json",
        json.dumps({"pairs": pairs}, ensure_ascii=False, indent=2, sort_keys=True) + "\n",
    )
    return "aligned"


def _load_pairs(store: JobStore, sid: str) -> list[dict]:
    doc = json.loads((store.artifact_dir(sid) / "pairs.json").read_text(encoding="utf-8"))
    return doc["pairs"]


def _pair_summary_from_doc(pair: dict) -> PairSummary:
    s = pair["summary"]
    return PairSummary(
        transcript_id=pair["transcript_id"],
        format=pair["format"],
        median_cer=Fraction(s["median_cer"]) if s["median_cer"] is not None else None,
        accepted_fraction=s["accepted_fraction"],
        match_count=s["match_count"],
        total_aligned_ms=s["total_aligned_ms"],
    )


def stage_select(cfg: PipelineConfig, store: JobStore, record: SessionRecord) -> str:
    pairs = [p for p in _load_pairs(store, record.session_id) if "error" not in p]
    summaries = [_pair_summary_from_doc(p) for p in pairs]
    by_tid: dict[str, list[PairSummary]] = {}
    for s in summaries:
        by_tid.setdefault(s.transcript_id, []).append(s)
    best_per_tid = [select_format(group) for _, group in sorted(by_tid.items())]
    chosen = select_transcripts(best_per_tid, cfg.selection)
    doc = {
        "format_choice": {s.transcript_id: s.format for s in best_per_tid},
        "selected": [
            {"transcript_id": s.transcript_id, "format": s.format} for s in chosen
        ],
    }
    ds._atomic_write_text(
        store.artifact_dir(record.session_id) / "selection.json",
        json.dumps(doc, ensure_ascii=False, indent=2, sort_keys=True) + "\n",
    )
    return "selected"


def stage_emit(cfg: PipelineConfig, store: JobStore, record: SessionRecord) -> str:
    sid = record.session_id
    art = store.artifact_dir(sid)
    pairs = _load_pairs(store, sid)
    selection = json.loads((art / "selection.json").read_text(encoding="utf-8"))
    selected_keys = {(e["transcript_id"], e["format"]) for e in selection["selected"]}

    summaries = [_pair_summary_from_doc(p) for p in pairs if "error" not in p]
    stats = ds.TierStats(thresholds=cfg.tier_thresholds)
    rows: list[str] = []
    audio_path = str(art / "media.wav")

    # Segment counts are a session property: every parsed pair aligned the
    # same segment list, with None exactly at unusable segments.
    segment_count = 0
    usable_count = 0
    for pair in pairs:
        if "matches" in pair:
            segment_count = len(pair["matches"])
            usable_count = sum(1 for m in pair["matches"] if m is not None)
            break

    for pair in pairs:
        if "error" in pair:
            continue
        key = (pair["transcript_id"], pair["format"])
        if key not in selected_keys:
            continue
        for m in pair["matches"]:
            if m is None:
                continue
            duration_ms = round((m["end_s"] - m["start_s"]) * 1000.0)
            cer_frac = Fraction(m["distance"], m["denom"])
            stats.add_match(duration_ms, cer_frac)
            if (
                cfg.manifest_cer_threshold is not None
                and not cer_frac < cfg.manifest_cer_threshold
            ):
                continue
            rows.append(
                json.dumps(
                    {
                        "segment_id": m["segment_id"],
                        "start_s": round(m["start_s"], 3),
                        "end_s": round(m["end_s"], 3),
                        "text": m["matched_text"],
                        "cer": f"{m['distance'] / m['denom']:.6f}",
                        "cer_exact": f"{m['distance']}/{m['denom']}",
                        "audio_path": audio_path,
                        "language": record.language,
                    },
                    ensure_ascii=False,
                    sort_keys=True,
                )
            )

    ds._atomic_write_text(art / "records.jsonl", "\n".join(rows) + ("\n" if rows else ""))
    ds.emit_session_summary(
        art / "summary.json",
        session_id=sid,
        media_ref=audio_path,
        language=record.language,
        norm_profile=cfg.norm_profile.to_dict(),
        aligner_config=cfg.aligner.to_dict(),
        pair_summaries=summaries,
        selection=sorted(selected_keys),
        stats=stats,
        segment_count=segment_count,
        usable_segment_count=usable_count,
    )
    return "emitted"


STAGE_FUNCS = {
    "fetch": stage_fetch,
    "segment": stage_segment,
    "transcribe": stage_transcribe,
    "align": stage_align,
    "select": stage_select,
    "emit": stage_emit,
}


# --- stage driver ---------------------------------------------------------------


@dataclass
class StageResult:
    stage: str
    processed: int = 0
    failed: int = 0
    failures: list[tuple[str, str]] = field(default_factory=list)


def _check_stage_order(store: JobStore, stage: str, session_filter: set[str] | None) -> None:
    """A stage invoked with nothing eligible and sessions still in earlier
    states is an ordering mistake, not a no-op."""
    if store.count_eligible(stage, session_filter):
        return
    main_source = STAGE_SOURCES[stage][0]
    required_idx = STAGE_ORDER.index(main_source)
    for sid in store.session_ids():
        if session_filter is not None and sid not in session_filter:
            continue
        state = store.get(sid).job.state
        if state in STAGE_ORDER and STAGE_ORDER.index(state) < required_idx:
            raise StageOrderViolation(
                f"stage {stage!r} has no eligible sessions but {sid!r} is still "
                f"in state {state!r}"
            )


def run_stage(
    cfg: PipelineConfig,
    store: JobStore,
    stage: str,
    *,
    session_filter: set[str] | None = None,
    workers: int | None = None,
    check_order: bool = True,
) -> StageResult:
    """Drain all eligible sessions through one stage with N workers."""
    store.heal_stale()
    if check_order:
        _check_stage_order(store, stage, session_filter)
    result = StageResult(stage=stage)
    lock = threading.Lock()
    func = STAGE_FUNCS[stage]

    def worker() -> None:
        while True:
            record = store.claim_next(stage, session_filter=session_filter)
            if record is None:
                return
            sid = record.session_id
            record = store.mark_attempt(sid)  # fresh copy with the try counted
            try:
                next_state = func(cfg, store, record)
            except PipelineError as exc:
                reason = f"{type(exc).__name__}: {exc}"
                store.mark_failed(sid, stage, reason, backoff_base_s=cfg.retry_backoff_s)
                log_event("transition", session=sid, to="failed", stage=stage, reason=reason)
                with lock:
                    result.failed += 1
                    result.failures.append((sid, reason))
            except Exception as exc:  # defensive: never wedge the lease
                reason = f"unexpected {type(exc).__name__}: {exc}"
                store.mark_failed(sid, stage, reason, backoff_base_s=cfg.retry_backoff_s)
                log_event("transition", session=sid, to="failed", stage=stage, reason=reason)
                with lock:
                    result.failed += 1
                    result.failures.append((sid, reason))
            else:
                store.mark(sid, next_state)
                log_event("transition", session=sid, to=next_state, stage=stage)
                with lock:
                    result.processed += 1

    n = workers if workers is not None else cfg.workers
    threads = [threading.Thread(target=worker, name=f"{stage}-{i}") for i in range(n)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    _say(f"[{stage}] processed={result.processed} failed={result.failed}")
    return result


# --- corpus-level commands --------------------------------------------------------


def run_splits(cfg: PipelineConfig, store: JobStore) -> Path:
    """Assign session-exclusive splits and assemble the training manifest."""
    emitted = store.sessions_in_state("emitted")
    assignment = ds.assign_splits(emitted, cfg.split_ratios, cfg.split_seed)
    manifest_dir = store.root / "manifest"
    manifest_dir.mkdir(exist_ok=True)
    ds._atomic_write_text(
        manifest_dir / "splits.json",
        json.dumps(
            {
                "seed": cfg.split_seed,
                "ratios": [str(r) for r in assignment.ratios],
                "assignment": dict(sorted(assignment.assignment.items())),
            },
            indent=2,
            sort_keys=True,
        )
        + "\n",
    )
    lines: list[str] = []
    for sid in sorted(emitted):
        split = assignment.split_of(sid)
        records = store.artifact_dir(sid) / "records.jsonl"
        if not records.exists():
            continue
        for line in records.read_text(encoding="utf-8").splitlines():
            if not line.strip():
                continue
            row = json.loads(line)
            row.pop("cer_exact", None)
            row["split"] = split
            lines.append(json.dumps(row, ensure_ascii=False, sort_keys=True))
    ds._atomic_write_text(
        manifest_dir / "manifest.jsonl", "\n".join(lines) + ("\n" if lines else "")
    )
    log_event("manifest", sessions=len(emitted), rows=len(lines))
    _say(f"[splits] sessions={len(emitted)} manifest_rows={len(lines)}")
    return manifest_dir / "manifest.jsonl"


def run_stats(cfg: PipelineConfig, store: JobStore) -> dict:
    """Aggregate per-language tier stats over emitted session summaries."""
    summaries = []
    for sid in store.sessions_in_state("emitted"):
        path = store.artifact_dir(sid) / "summary.json"
        if path.exists():
            summaries.append(json.loads(path.read_text(encoding="utf-8")))
    table = ds.corpus_stats(summaries)
    manifest_dir = store.root / "manifest"
    manifest_dir.mkdir(exist_ok=True)
    ds._atomic_write_text(
        manifest_dir / "corpus_stats.json",
        json.dumps(table, indent=2, sort_keys=True) + "\n",
    )
    for lang, row in table.items():
        tiers = " ".join(f"<{k}: {v:.3f}h" for k, v in sorted(row["tier_hours"].items()))
        _say(f"[stats] {lang}: sessions={row['sessions']} "
             f"total={row['total_aligned_s']:.1f}s {tiers}")
    if not table:
        _say("[stats] no emitted sessions")
    return table


def run_all(
    cfg: PipelineConfig,
    store: JobStore,
    *,
    session_filter: set[str] | None = None,
    workers: int | None = None,
    stop_after: str | None = None,
) -> list[StageResult]:
    """Run every stage in order, then splits and stats."""
    results = []
    if cfg.links_csv is not None:
        run_ingest(cfg, store, cfg.links_csv)
        if stop_after == "ingest":
            return results
    for stage in PIPELINE_STAGES:
        results.append(
            run_stage(
                cfg, store, stage,
                session_filter=session_filter, workers=workers, check_order=False,
            )
        )
        if stop_after == stage:
            return results
    run_splits(cfg, store)
    if stop_after == "splits":
        return results
    run_stats(cfg, store)
    return results
