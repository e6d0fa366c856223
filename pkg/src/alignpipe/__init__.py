"""alignpipe: align long-form audio against noisy candidate transcripts and
export quality-scored speech/text segment pairs."""

from .aligner import (
    AlignerConfig,
    AlignerState,
    AlignmentMatch,
    align_session,
    coarse_search,
    refined_search,
)
from .asr import AsrSegment, load_precomputed, transcribe_via_adapter
from .cer import ABOVE_BOUND, CerPattern, CerValue, banded_cer_at_most, cer, edit_distance
from .dataset import SplitAssignment, TierStats, assign_splits, corpus_stats, filter_tier
from .segmenter import SegmenterConfig, SpeechInterval, detect_speech, enforce_duration, vad_adapter
from .selector import PairSummary, SelectionCriteria, select_format, select_transcripts
from .textnorm import NormProfile, NormText, normalize, window_text

__version__ = "0.1.0"

__all__ = [
    "ABOVE_BOUND",
    "AlignerConfig",
    "AlignerState",
    "AlignmentMatch",
    "AsrSegment",
    "CerPattern",
    "CerValue",
    "NormProfile",
    "NormText",
    "PairSummary",
    "SegmenterConfig",
    "SelectionCriteria",
    "SpeechInterval",
    "SplitAssignment",
    "TierStats",
    "align_session",
    "assign_splits",
    "banded_cer_at_most",
    "cer",
    "coarse_search",
    "corpus_stats",
    "detect_speech",
    "edit_distance",
    "enforce_duration",
    "filter_tier",
    "load_precomputed",
    "normalize",
    "refined_search",
    "select_format",
    "select_transcripts",
    "transcribe_via_adapter",
    "vad_adapter",
    "window_text",
]
