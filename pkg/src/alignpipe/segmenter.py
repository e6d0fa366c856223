"""Voice-activity segmentation of long recordings into 3-20 s utterances.

A built-in energy VAD keeps the pipeline testable hermetically; production
deployments plug a neural VAD in through the external adapter slot. Either
way, enforce_duration() brings intervals into the configured duration band.
"""

from __future__ import annotations

import math
import shlex
import subprocess
from dataclasses import dataclass

import numpy as np

from .errors import AdapterFailed, EmptyAudio, MalformedAdapterOutput

SOURCE_ENERGY = "energy_vad"
SOURCE_EXTERNAL = "external"


@dataclass(frozen=True)
class SpeechInterval:
    start_s: float
    end_s: float
    source: str = SOURCE_ENERGY

    def duration(self) -> float:
        return self.end_s - self.start_s


@dataclass(frozen=True)
class SegmenterConfig:
    """Segmentation knobs; every value is recorded in output manifests.

    Frames whose energy exceeds min(median + energy_threshold_db,
    peak - peak_margin_db) and the absolute silence floor count as speech.
    The peak-relative cap keeps detection working when most of the recording
    is speech (the median frame is then itself a speech frame); the floor
    rejects digital silence.
    """

    min_len_s: float = 3.0
    max_len_s: float = 20.0
    frame_ms: int = 30
    energy_threshold_db: float = 6.0
    peak_margin_db: float = 6.0
    silence_floor_db: float = -60.0
    min_gap_ms: int = 300
    split_policy: str = "lowest_energy_middle_third"

    def __post_init__(self):
        if not (0 < self.min_len_s < self.max_len_s):
            raise ValueError("need 0 < min_len_s < max_len_s")
        if self.frame_ms <= 0:
            raise ValueError("frame_ms must be > 0")

    def to_dict(self) -> dict:
        return {
            "min_len_s": self.min_len_s,
            "max_len_s": self.max_len_s,
            "frame_ms": self.frame_ms,
            "energy_threshold_db": self.energy_threshold_db,
            "peak_margin_db": self.peak_margin_db,
            "silence_floor_db": self.silence_floor_db,
            "min_gap_ms": self.min_gap_ms,
            "split_policy": self.split_policy,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SegmenterConfig":
        known = {f: d[f] for f in cls.__dataclass_fields__ if f in d}
        return cls(**known)


@dataclass(frozen=True)
class FrameEnergies:
    """Per-frame energy in dB plus the frame duration in seconds."""

    db: np.ndarray
    frame_s: float


def frame_energies(samples: np.ndarray, sample_rate: int, cfg: SegmenterConfig) -> FrameEnergies:
    """RMS energy (dB) of consecutive full frames; a trailing partial frame is
    ignored."""
    if sample_rate < 8000:
        raise ValueError(f"sample_rate {sample_rate} < 8000 Hz")
    samples = np.asarray(samples, dtype=np.float64)
    if samples.size == 0:
        raise EmptyAudio("no samples")
    frame_len = max(1, round(sample_rate * cfg.frame_ms / 1000.0))
    n_frames = samples.size // frame_len
    if n_frames == 0:
        # Recording shorter than one frame: treat it as a single frame.
        mean_sq = float(np.mean(samples * samples))
        db = np.array([10.0 * math.log10(max(mean_sq, 1e-12))])
        return FrameEnergies(db=db, frame_s=samples.size / sample_rate)
    trimmed = samples[: n_frames * frame_len].reshape(n_frames, frame_len)
    mean_sq = np.maximum((trimmed * trimmed).mean(axis=1), 1e-12)
    return FrameEnergies(db=10.0 * np.log10(mean_sq), frame_s=frame_len / sample_rate)


def _speech_mask(energies: FrameEnergies, cfg: SegmenterConfig) -> np.ndarray:
    db = energies.db
    threshold = min(
        float(np.median(db)) + cfg.energy_threshold_db,
        float(np.max(db)) - cfg.peak_margin_db,
    )
    threshold = max(threshold, cfg.silence_floor_db)
    return db > threshold


def _mask_to_intervals(mask: np.ndarray, frame_s: float, source: str) -> list[SpeechInterval]:
    out: list[SpeechInterval] = []
    start = None
    for i, flag in enumerate(mask):
        if flag and start is None:
            start = i
        elif not flag and start is not None:
            out.append(SpeechInterval(start * frame_s, i * frame_s, source))
            start = None
    if start is not None:
        out.append(SpeechInterval(start * frame_s, len(mask) * frame_s, source))
    return out


def _merge_gaps(intervals: list[SpeechInterval], max_gap_s: float) -> list[SpeechInterval]:
    if not intervals:
        return []
    merged = [intervals[0]]
    for iv in intervals[1:]:
        prev = merged[-1]
        if iv.start_s - prev.end_s < max_gap_s:
            merged[-1] = SpeechInterval(prev.start_s, iv.end_s, prev.source)
        else:
            merged.append(iv)
    return merged


def detect_speech(
    samples: np.ndarray, sample_rate: int, cfg: SegmenterConfig
) -> list[SpeechInterval]:
    """Energy VAD: speech frames merged into intervals, short gaps bridged."""
    energies = frame_energies(samples, sample_rate, cfg)
    mask = _speech_mask(energies, cfg)
    intervals = _mask_to_intervals(mask, energies.frame_s, SOURCE_ENERGY)
    return _merge_gaps(intervals, cfg.min_gap_ms / 1000.0)


def _split_point(
    iv: SpeechInterval, energies: FrameEnergies | None, cfg: SegmenterConfig
) -> float:
    """Split position inside the middle third; lowest-energy frame center when
    energies are available, midpoint otherwise."""
    dur = iv.duration()
    lo = iv.start_s + dur / 3.0
    hi = iv.start_s + 2.0 * dur / 3.0
    if energies is None or cfg.split_policy != "lowest_energy_middle_third":
        return (lo + hi) / 2.0
    frame_s = energies.frame_s
    first = int(math.ceil(lo / frame_s - 0.5))
    last = int(math.floor(hi / frame_s - 0.5))
    first = max(first, 0)
    last = min(last, len(energies.db) - 1)
    if first > last:
        return (lo + hi) / 2.0
    window = energies.db[first : last + 1]
    best = first + int(np.argmin(window))
    return (best + 0.5) * frame_s


def enforce_duration(
    intervals: list[SpeechInterval],
    cfg: SegmenterConfig,
    energies: FrameEnergies | None = None,
) -> list[SpeechInterval]:
    """Bring intervals into [min_len_s, max_len_s].

    Over-long intervals split recursively at the lowest-energy frame in their
    middle third; short intervals merge with the neighbor giving the smaller
    combined span when that span stays within max_len_s, and are dropped when
    no such neighbor exists.
    """
    # Pass 1: split anything too long.
    pieces: list[SpeechInterval] = []

    def split(iv: SpeechInterval) -> None:
        if iv.duration() <= cfg.max_len_s:
            pieces.append(iv)
            return
        t = _split_point(iv, energies, cfg)
        # Guard degenerate split points so recursion always terminates.
        if not (iv.start_s < t < iv.end_s):
            t = (iv.start_s + iv.end_s) / 2.0
        split(SpeechInterval(iv.start_s, t, iv.source))
        split(SpeechInterval(t, iv.end_s, iv.source))

    for iv in intervals:
        split(iv)

    # Pass 2: merge or drop anything too short.
    out = list(pieces)
    changed = True
    while changed:
        changed = False
        for i, iv in enumerate(out):
            if iv.duration() >= cfg.min_len_s:
                continue
            options = []
            if i > 0:
                span = iv.end_s - out[i - 1].start_s
                if span <= cfg.max_len_s:
                    options.append((span, i - 1))
            if i + 1 < len(out):
                span = out[i + 1].end_s - iv.start_s
                if span <= cfg.max_len_s:
                    options.append((span, i + 1))
            if not options:
                del out[i]
            else:
                span, j = min(options)
                lo = min(out[j].start_s, iv.start_s)
                hi = max(out[j].end_s, iv.end_s)
                merged = SpeechInterval(lo, hi, iv.source)
                if j < i:
                    out[j] = merged
                    del out[i]
                else:
                    out[i] = merged
                    del out[j]
            changed = True
            break
    return out


def segment_audio(
    samples: np.ndarray, sample_rate: int, cfg: SegmenterConfig
) -> list[SpeechInterval]:
    """detect_speech + enforce_duration with shared frame energies."""
    energies = frame_energies(samples, sample_rate, cfg)
    mask = _speech_mask(energies, cfg)
    intervals = _mask_to_intervals(mask, energies.frame_s, SOURCE_ENERGY)
    intervals = _merge_gaps(intervals, cfg.min_gap_ms / 1000.0)
    return enforce_duration(intervals, cfg, energies)


def vad_adapter(
    audio_path: str, adapter_command: str, timeout_s: float = 600.0
) -> tuple[list[SpeechInterval], list[str]]:
    """Run an external VAD and validate its output.

    Protocol: the adapter receives the audio file path on stdin (or spliced
    into the command via an {in} placeholder) and writes one "start_s\\tend_s"
    pair per line to stdout. Returns (intervals, warnings); out-of-order or
    overlapping output is repaired with a warning, garbage lines raise
    MalformedAdapterOutput.
    """
    if "{in}" in adapter_command:
        argv = [a.replace("{in}", audio_path) for a in shlex.split(adapter_command)]
        stdin = b""
    else:
        argv = shlex.split(adapter_command)
        stdin = (audio_path + "\n").encode("utf-8")
    try:
        proc = subprocess.run(argv, input=stdin, capture_output=True, timeout=timeout_s)
    except subprocess.TimeoutExpired as exc:
        raise AdapterFailed(f"{argv[0]} exceeded {timeout_s}s") from exc
    except OSError as exc:
        raise AdapterFailed(f"{argv[0]}: {exc}") from exc
    if proc.returncode != 0:
        raise AdapterFailed(
            f"{argv[0]} exited {proc.returncode}: {proc.stderr.decode('utf-8', 'replace')[:200]}"
        )

    warnings: list[str] = []
    raw: list[tuple[float, float]] = []
    for lineno, line in enumerate(proc.stdout.decode("utf-8", "replace").splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise MalformedAdapterOutput(f"line {lineno}: expected 'start\\tend', got {line!r}")
        try:
            start, end = float(parts[0]), float(parts[1])
        except ValueError as exc:
            raise MalformedAdapterOutput(f"line {lineno}: {line!r}") from exc
        if not (0.0 <= start < end):
            raise MalformedAdapterOutput(f"line {lineno}: invalid span {line!r}")
        raw.append((start, end))

    ordered = sorted(raw)
    if ordered != raw:
        warnings.append("adapter output out of order; sorted")
    intervals: list[SpeechInterval] = []
    for start, end in ordered:
        if intervals and start < intervals[-1].end_s:
            warnings.append(f"overlap at {start:.3f}s merged")
            prev = intervals[-1]
            intervals[-1] = SpeechInterval(prev.start_s, max(prev.end_s, end), SOURCE_EXTERNAL)
        else:
            intervals.append(SpeechInterval(start, end, SOURCE_EXTERNAL))
    return intervals, warnings
