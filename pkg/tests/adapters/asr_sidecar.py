#!/usr/bin/env python3
"""Test ASR adapter: replays transcriptions from a sidecar file.

Reads the request JSON from stdin and replays texts (a JSON list indexed by
interval number) from <audio_path>.asr.json, or, with --sidecar-dir DIR, from
DIR/<session_dir_name>.wav.asr.json so it works on store-local copies. Emits
one {"i", "text"} JSON line per interval. Env knobs for failure-mode tests:
  ASR_ADAPTER_DROP_LAST=1   omit the last interval's line
  ASR_ADAPTER_EMPTY_INDEX=N emit empty text for interval N
  ASR_ADAPTER_FAIL=1        exit non-zero
"""

import argparse
import json
import os
import sys
from pathlib import Path


def main() -> int:
    if os.environ.get("ASR_ADAPTER_FAIL") == "1":
        print("synthetic adapter failure", file=sys.stderr)
        return 3
    parser = argparse.ArgumentParser()
    parser.add_argument("--sidecar-dir", default=None)
    args = parser.parse_args()
    request = json.load(sys.stdin)
    audio = Path(request["audio_path"])
    if args.sidecar_dir:
        sidecar = Path(args.sidecar_dir) / f"{audio.parent.name}.wav.asr.json"
    else:
        sidecar = Path(str(audio) + ".asr.json")
    with open(sidecar, "r", encoding="utf-8") as fh:
        texts = json.load(fh)
    intervals = request["intervals"]
    drop_last = os.environ.get("ASR_ADAPTER_DROP_LAST") == "1"
    empty_idx = os.environ.get("ASR_ADAPTER_EMPTY_INDEX")
    for entry in intervals:
        i = entry["i"]
        if drop_last and i == len(intervals) - 1:
            continue
        text = texts[i] if i < len(texts) else ""
        if empty_idx is not None and i == int(empty_idx):
            text = ""
        print(json.dumps({"i": i, "text": text}))
    return 0


if __name__ == "__main__":
    sys.exit(main())
