#!/usr/bin/env python3
"""Regenerates data/vocab.json and data/common_tokens.txt.

The vocabulary is byte-level (GPT-2 symbol mapping) and deterministic: every
single byte, Python keywords and builtins, a list of common identifier
subwords, operators and indentation runs. Word pieces appear both bare and
with a leading space.
"""
import builtins
import json
import keyword
import pathlib

DATA = pathlib.Path(__file__).resolve().parents[1] / "data"

SUBWORDS = """
a add all and append arg args array b base batch begin best bit block body bool buf buffer build
by c cache call case cell char check child children clean clear close code col cols column count
counter ctx cur current d data db def default delta dict diff dir dist distance done e edge edges
elem else empty end entry env err error event exc f field file fill filter find first flag float
fn format found frame from func g get graph grid group h handle has hash head heap height i id idx
in index info init input int inner is item items iter j k key keys kind l label last left len
length level line lines list load log loop lst m main map mask match max mean merge min mode msg
n name names new next node nodes num number obj offset old op open opt out output p pair parse
part path pop pos prev print q queue r range read record rect ref result results ret right row
rows run s score search seen self set shape size sort source split stack start state step str
string sub sum t table target temp test text time to token tokens total tree type u update url
v val valid value values vec visited w weight width word words write x y z
""".split()

OPERATORS = """
== != <= >= += -= *= /= //= %= **= &= |= ^= >>= <<= -> ** // << >> := ... (): ():\n ): ),
[] {} () ' " ''' \"\"\" '' \"\" , . : ; ( ) [ ] { } + - * / % = < > & | ^ ~ @ #
""".split()


def bytes_to_unicode():
    bs = list(range(ord("!"), ord("~") + 1)) + list(range(0xA1, 0xAD)) + list(range(0xAE, 0x100))
    cs = bs[:]
    n = 0
    for b in range(256):
        if b not in bs:
            bs.append(b)
            cs.append(256 + n)
            n += 1
    return dict(zip(bs, map(chr, cs)))


def encode(piece, table):
    return "".join(table[b] for b in piece.encode("utf-8"))


def main():
    table = bytes_to_unicode()
    words = sorted(set(keyword.kwlist) | set(keyword.softkwlist) |
                   {n for n in dir(builtins) if not n.startswith("_")} | set(SUBWORDS) |
                   {"__init__", "__name__", "__main__", "self", "None", "True", "False"})
    pieces = [bytes([b]).decode("latin-1") for b in range(256)]
    for w in words:
        pieces += [w, " " + w, "_" + w, w + "_", "." + w]
    for d in range(10, 100):
        pieces += [str(d), " " + str(d)]
    pieces += OPERATORS + [" " + op for op in OPERATORS]
    for width in range(1, 25):
        pieces += [" " * width, "\n" + " " * width]
    pieces += ["\n\n", "\n\n\n", "\t", "\n\t", "\t\t"]

    vocab, seen = {}, set()
    for p in pieces:
        raw = p.encode("latin-1") if len(p) == 1 and ord(p) < 256 and p not in words else p.encode("utf-8")
        if raw in seen:
            continue
        seen.add(raw)
        vocab["".join(table[b] for b in raw)] = len(vocab)
    (DATA / "vocab.json").write_text(json.dumps({"model": {"type": "librarian-min-seg", "vocab": vocab}},
                                                ensure_ascii=False, indent=0) + "\n", encoding="utf-8")

    # Single letters stay in the vocabulary but are not "common": they carry no meaning.
    common = sorted((set(keyword.kwlist) | set(SUBWORDS) | set(OPERATORS) |
                     {"print", "range", "len", "int", "str", "list", "dict", "set"})
                    - {w for w in SUBWORDS if len(w) == 1})
    (DATA / "common_tokens.txt").write_text("\n".join(common) + "\n")
    print(f"{len(vocab)} pieces, {len(common)} common tokens")


if __name__ == "__main__":
    main()
