#!/usr/bin/env python3
"""Dumps CPython's significant tokens as lines: KIND<TAB>line:col-end_line:end_col<TAB>repr(text)."""
import io
import sys
import tokenize

KINDS = {tokenize.NAME: "name", tokenize.NUMBER: "number", tokenize.STRING: "string", tokenize.OP: "op",
         tokenize.NEWLINE: "newline", tokenize.INDENT: "indent", tokenize.DEDENT: "dedent"}

src = open(sys.argv[1], encoding="utf-8").read()
for tok in tokenize.generate_tokens(io.StringIO(src).readline):
    kind = KINDS.get(tok.type)
    if kind is None:
        continue
    text = tok.string.encode("unicode_escape").decode("ascii") if kind != "dedent" else ""
    if kind == "indent":
        text = str(len(tok.string))
    print(f"{kind}\t{tok.start[0]}:{tok.start[1]}-{tok.end[0]}:{tok.end[1]}\t{text}")
