"""Pipeline configuration: one JSON document binding every knob.

The config is validated up front (ConfigInvalid, CLI exit code 2) so a typo in
an adapter command fails at startup, not three stages into a run. The store
path may be overridden with the ALIGNPIPE_STORE environment variable.
"""

from __future__ import annotations

import json
import os
import shlex
import shutil
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

from .aligner import AlignerConfig
from .cer import to_fraction
from .dataset import DEFAULT_SPLIT_RATIOS, DEFAULT_TIERS
from .errors import ConfigInvalid
from .segmenter import SegmenterConfig
from .selector import CRITERIA_ALL_BELOW, CRITERIA_LOWEST, SelectionCriteria
from .textnorm import NormProfile
from .transcripts import DEFAULT_CLEANING_PROMPT, DEFAULT_CLEANING_PROMPT_VERSION

STORE_ENV_VAR = "ALIGNPIPE_STORE"


@dataclass
class PipelineConfig:
    store_dir: Path
    links_csv: Path | None = None
    norm_profile: NormProfile = field(default_factory=NormProfile)
    segmenter: SegmenterConfig = field(default_factory=SegmenterConfig)
    aligner: AlignerConfig = field(default_factory=AlignerConfig)
    selection: SelectionCriteria = field(default_factory=SelectionCriteria)
    tier_thresholds: tuple = DEFAULT_TIERS
    split_ratios: tuple = DEFAULT_SPLIT_RATIOS
    split_seed: int = 0
    vad_command: str | None = None
    asr_command: str | None = None
    asr_model_tag: str = "external"
    extractors: dict[str, str] = field(default_factory=dict)
    llm_clean_command: str | None = None
    llm_clean_formats: tuple[str, ...] = ()
    llm_prompt: str = DEFAULT_CLEANING_PROMPT
    llm_prompt_version: str = DEFAULT_CLEANING_PROMPT_VERSION
    convert_command: str | None = None
    handlers: list[dict] = field(default_factory=list)
    workers: int = 1
    max_retries: int = 3
    retry_backoff_s: float = 1.0
    lease_timeout_s: float = 600.0
    stage_timeout_s: float = 3600.0
    manifest_cer_threshold: Fraction | None = None


def _check_command(name: str, command: str | None) -> None:
    if command is None:
        return
    try:
        argv = shlex.split(command)
    except ValueError as exc:
        raise ConfigInvalid(f"{name}: unparseable command: {exc}") from exc
    if not argv:
        raise ConfigInvalid(f"{name}: empty command")
    head = argv[0]
    if shutil.which(head) is None and not Path(head).exists():
        raise ConfigInvalid(f"{name}: command not found: {head!r}")


def load_config(path: str | Path) -> PipelineConfig:
    """Load and validate a pipeline config file."""
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise ConfigInvalid(f"config file not found: {path}") from exc
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigInvalid(f"{path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigInvalid("config root must be a JSON object")

    store_dir = os.environ.get(STORE_ENV_VAR) or raw.get("store_dir")
    if not store_dir:
        raise ConfigInvalid("store_dir is required (or set ALIGNPIPE_STORE)")

    try:
        norm_profile = NormProfile.from_dict(raw.get("norm_profile", {}))
        segmenter = SegmenterConfig.from_dict(raw.get("segmenter", {}))
        aligner = AlignerConfig.from_dict(raw.get("aligner", {}))
    except (ValueError, TypeError) as exc:
        raise ConfigInvalid(str(exc)) from exc

    sel_raw = raw.get("selection", {})
    kind = sel_raw.get("criteria", CRITERIA_LOWEST)
    threshold = sel_raw.get("threshold")
    try:
        selection = SelectionCriteria(
            kind=kind,
            threshold=to_fraction(threshold) if threshold is not None else None,
        )
    except ValueError as exc:
        raise ConfigInvalid(str(exc)) from exc
    if kind == CRITERIA_ALL_BELOW and not (0 < selection.threshold <= 1):
        raise ConfigInvalid("selection.threshold must be in (0, 1]")

    tiers_raw = raw.get("tier_thresholds", [0.3, 0.2, 0.1])
    tiers = tuple(to_fraction(t) for t in tiers_raw)
    for t in tiers:
        if not (0 < t <= 1):
            raise ConfigInvalid(f"tier threshold {t} outside (0, 1]")

    split_raw = raw.get("split", {})
    ratios = tuple(to_fraction(r) for r in split_raw.get("ratios", [0.98, 0.01, 0.01]))
    if len(ratios) != 3 or sum(ratios) != 1:
        raise ConfigInvalid("split.ratios must be three values summing to 1")
    seed = int(split_raw.get("seed", 0))

    adapters = raw.get("adapters", {})
    extractors = {
        str(ext).lower().lstrip("."): str(cmd)
        for ext, cmd in (adapters.get("extractors") or {}).items()
    }
    for name in ("vad", "asr", "llm_clean", "convert"):
        _check_command(f"adapters.{name}", adapters.get(name))
    for ext, cmd in extractors.items():
        _check_command(f"adapters.extractors.{ext}", cmd)

    handlers = raw.get("handlers", [])
    for entry in handlers:
        if not isinstance(entry, dict) or "pattern" not in entry or "command" not in entry:
            raise ConfigInvalid("each handler needs 'pattern' and 'command'")
        _check_command(f"handler {entry['pattern']}", entry["command"])

    workers = int(raw.get("workers", 1))
    if workers < 1:
        raise ConfigInvalid("workers must be >= 1")
    max_retries = int(raw.get("max_retries", 3))
    if max_retries < 1:
        raise ConfigInvalid("max_retries must be >= 1")

    manifest_thresh = raw.get("manifest_cer_threshold")

    links = raw.get("links_csv")
    return PipelineConfig(
        store_dir=Path(store_dir),
        links_csv=Path(links) if links else None,
        norm_profile=norm_profile,
        segmenter=segmenter,
        aligner=aligner,
        selection=selection,
        tier_thresholds=tiers,
        split_ratios=ratios,
        split_seed=seed,
        vad_command=adapters.get("vad"),
        asr_command=adapters.get("asr"),
        asr_model_tag=str(raw.get("asr_model_tag", "external")),
        extractors=extractors,
        llm_clean_command=adapters.get("llm_clean"),
        llm_clean_formats=tuple(
            str(f).lower() for f in raw.get("llm_clean_formats", [])
        ),
        llm_prompt=str(raw.get("llm_prompt") or DEFAULT_CLEANING_PROMPT),
        llm_prompt_version=str(
            raw.get("llm_prompt_version") or DEFAULT_CLEANING_PROMPT_VERSION
        ),
        convert_command=adapters.get("convert"),
        handlers=list(handlers),
        workers=workers,
        max_retries=max_retries,
        retry_backoff_s=float(raw.get("retry_backoff_s", 1.0)),
        lease_timeout_s=float(raw.get("lease_timeout_s", 600.0)),
        stage_timeout_s=float(raw.get("stage_timeout_s", 3600.0)),
        manifest_cer_threshold=(
            to_fraction(manifest_thresh) if manifest_thresh is not None else None
        ),
    )
