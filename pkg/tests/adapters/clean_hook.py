#!/usr/bin/env python3
"""Test cleaning hook speaking the length-prefixed stdin protocol.

Reads (prompt, payload); by default drops lines starting with "SPEAKER" from
the payload and echoes the rest. CLEAN_HOOK_MODE=echo returns the payload
unchanged; CLEAN_HOOK_MODE=fail exits non-zero.
"""

import os
import sys


def read_block(stream) -> bytes:
    header = b""
    while True:
        ch = stream.read(1)
        if not ch or ch == b"\n":
            break
        header += ch
    return stream.read(int(header))


def main() -> int:
    mode = os.environ.get("CLEAN_HOOK_MODE", "strip")
    if mode == "fail":
        print("hook refused", file=sys.stderr)
        return 1
    stdin = sys.stdin.buffer
    read_block(stdin)  # prompt (unused by the test hook)
    payload = read_block(stdin).decode("utf-8")
    if mode == "echo":
        sys.stdout.write(payload)
        return 0
    kept = [ln for ln in payload.split("\n") if not ln.startswith("SPEAKER")]
    sys.stdout.write("\n".join(kept))
    return 0


if __name__ == "__main__":
    sys.exit(main())
