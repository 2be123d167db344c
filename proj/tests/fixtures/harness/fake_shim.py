#!/usr/bin/env python3
"""Stand-in runner for harness tests: verdicts come from tests/expected.json.

Program markers change behaviour: HANG sleeps forever, GARBAGE writes an
invalid outcome file, FIXED flips t3 to pass, CRASH exits non-zero.
"""
import json
import pathlib
import sys
import time

ws = pathlib.Path(sys.argv[1])
assert sys.argv[2] == "--timeout"
program = (ws / "program.py").read_text()
(ws / "scratch.txt").write_text("written inside the workspace\n")
if "HANG" in program:
    while True:
        time.sleep(1)
if "CRASH" in program:
    sys.exit(3)
if "GARBAGE" in program:
    (ws / "outcome.json").write_text('{"passed": "t1"}')
    sys.exit(0)
expected = json.loads((ws / "tests" / "expected.json").read_text())
verdicts = dict(expected)
if "FIXED" in program:
    verdicts["t3"] = "pass"
if "codebank" in program and "def helper" not in (ws / "codebank.py").read_text():
    verdicts = {t: "fail" for t in verdicts}
out = {"passed": [], "failed": [], "errored": []}
for test, v in sorted(verdicts.items()):
    if v == "pass":
        out["passed"].append(test)
    elif v == "fail":
        out["failed"].append(test)
    else:
        out["errored"].append({"id": test, "kind": v})
(ws / "outcome.json").write_text(json.dumps(out))
