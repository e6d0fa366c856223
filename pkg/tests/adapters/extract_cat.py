#!/usr/bin/env python3
"""Test extractor: prints the file's text (a stand-in for pdf/docx extraction).

EXTRACTOR_FAIL=1 exits non-zero; EXTRACTOR_SLEEP=N sleeps before replying.
"""

import os
import sys
import time

if os.environ.get("EXTRACTOR_FAIL") == "1":
    print("extractor exploded", file=sys.stderr)
    sys.exit(1)
if os.environ.get("EXTRACTOR_SLEEP"):
    time.sleep(float(os.environ["EXTRACTOR_SLEEP"]))
with open(sys.argv[1], "r", encoding="utf-8") as fh:
    sys.stdout.write(fh.read())
