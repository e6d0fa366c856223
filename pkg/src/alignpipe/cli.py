"""Operator command line.

Commands mirror the stage graph (ingest, fetch, segment, transcribe, align,
select, emit, stats, splits, run-all). Exit codes: 0 success, 1 one or more
sessions newly failed, 2 invalid configuration, 3 stage ordering violation.
Progress is JSON lines on stdout; human summaries go to stderr.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import load_config
from .errors import ConfigInvalid, PipelineError, StageOrderViolation
from .pipeline import (
    PIPELINE_STAGES,
    open_store,
    run_all,
    run_ingest,
    run_splits,
    run_stage,
    run_stats,
)

EXIT_OK = 0
EXIT_PARTIAL = 1
EXIT_CONFIG = 2
EXIT_ORDER = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="alignpipe",
        description="Align long-form audio against candidate transcripts.",
    )
    parser.add_argument("--config", required=True, help="pipeline config JSON")
    parser.add_argument("--workers", type=int, default=None, help="override worker count")
    parser.add_argument(
        "--sessions", default=None, help="comma-separated session ids to target"
    )
    parser.add_argument(
        "--stage-timeout", type=float, default=None, help="adapter timeout in seconds"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_ingest = sub.add_parser("ingest", help="register sessions from the links CSV")
    p_ingest.add_argument("--links", default=None, help="links CSV (default: config links_csv)")

    for stage in PIPELINE_STAGES:
        sub.add_parser(stage, help=f"run the {stage} stage")

    sub.add_parser("splits", help="assign splits and assemble the manifest")
    sub.add_parser("stats", help="aggregate per-language tier statistics")

    p_all = sub.add_parser("run-all", help="run every stage in order")
    p_all.add_argument(
        "--stop-after",
        choices=("ingest",) + PIPELINE_STAGES + ("splits",),
        default=None,
        help="stop at a stage boundary (resume later with run-all)",
    )
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
    except ConfigInvalid as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    if args.stage_timeout is not None:
        cfg.stage_timeout_s = args.stage_timeout
    session_filter = (
        {s.strip() for s in args.sessions.split(",") if s.strip()}
        if args.sessions
        else None
    )
    store = open_store(cfg)

    try:
        if args.command == "ingest":
            links = Path(args.links) if args.links else cfg.links_csv
            if links is None:
                print("config error: no links CSV given", file=sys.stderr)
                return EXIT_CONFIG
            added = run_ingest(cfg, store, links)
            print(f"[ingest] sessions added: {added}", file=sys.stderr)
            return EXIT_OK

        if args.command in PIPELINE_STAGES:
            if args.command == "transcribe" and cfg.asr_command is None:
                print("config error: adapters.asr is required for transcribe",
                      file=sys.stderr)
                return EXIT_CONFIG
            result = run_stage(
                cfg, store, args.command,
                session_filter=session_filter, workers=args.workers,
            )
            for sid, reason in result.failures:
                print(f"[{args.command}] {sid} failed: {reason}", file=sys.stderr)
            return EXIT_PARTIAL if result.failed else EXIT_OK

        if args.command == "splits":
            run_splits(cfg, store)
            return EXIT_OK

        if args.command == "stats":
            run_stats(cfg, store)
            return EXIT_OK

        if args.command == "run-all":
            if cfg.asr_command is None:
                print("config error: adapters.asr is required for run-all",
                      file=sys.stderr)
                return EXIT_CONFIG
            results = run_all(
                cfg, store,
                session_filter=session_filter, workers=args.workers,
                stop_after=args.stop_after,
            )
            failed = sum(r.failed for r in results)
            for r in results:
                for sid, reason in r.failures:
                    print(f"[{r.stage}] {sid} failed: {reason}", file=sys.stderr)
            return EXIT_PARTIAL if failed else EXIT_OK

    except StageOrderViolation as exc:
        print(f"stage order violation: {exc}", file=sys.stderr)
        return EXIT_ORDER
    except ConfigInvalid as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except PipelineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARTIAL

    raise AssertionError(f"unhandled command {args.command!r}")


if __name__ == "__main__":
    sys.exit(main())
