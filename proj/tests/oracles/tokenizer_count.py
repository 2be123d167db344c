#!/usr/bin/env python3
"""Reference token counts: fewest vocabulary pieces covering each byte string.

Usage: tokenizer_count.py VOCAB.json FILE... (prints JSON {file: count})
"""
import json
import pathlib
import sys


def byte_decoder():
    bs = list(range(ord("!"), ord("~") + 1)) + list(range(0xA1, 0xAD)) + list(range(0xAE, 0x100))
    cs = bs[:]
    n = 0
    for b in range(256):
        if b not in bs:
            bs.append(b)
            cs.append(256 + n)
            n += 1
    return {chr(c): b for b, c in zip(bs, cs)}


def load(path):
    j = json.loads(pathlib.Path(path).read_text(encoding="utf-8"))
    vocab = j["model"]["vocab"] if "model" in j else j
    dec = byte_decoder()
    return {bytes(dec[ch] for ch in k) for k in vocab}


def count(data, pieces):
    longest = max(map(len, pieces))
    best = [0] + [None] * len(data)
    for end in range(1, len(data) + 1):
        options = [best[end - 1] + 1]
        for start in range(max(0, end - longest), end - 1):
            if data[start:end] in pieces:
                options.append(best[start] + 1)
        best[end] = min(options)
    return best[-1]


def main():
    pieces = load(sys.argv[1])
    out = {pathlib.Path(f).name: count(pathlib.Path(f).read_bytes(), pieces) for f in sys.argv[2:]}
    print(json.dumps(out, indent=2, sort_keys=True))


if __name__ == "__main__":
    main()
