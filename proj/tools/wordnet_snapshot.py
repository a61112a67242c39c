#!/usr/bin/env python3
"""Builds the offline data snapshots shipped in data/ from a WordNet dict directory.

    wordnet_snapshot.py lexicon   --dict DIR --out data/lexicon.tsv
    wordnet_snapshot.py thesaurus --dict DIR --out data/thesaurus.tsv WORD...
    wordnet_snapshot.py thesaurus --dict DIR --out data/thesaurus.tsv --pack data/rules/default_pack.json

The lexicon lists every single-word lemma with the parts of speech it appears
under (n, v, a, r). The thesaurus maps each requested word to the members of
its most frequent synset in every part of speech it has. Multi-word members
are kept (underscores become spaces); the C++ side drops them.
"""

import argparse
import json
import os
import re
import sys

POS_FILES = {"n": "noun", "v": "verb", "a": "adj", "r": "adv"}
WORD_RE = re.compile(r"^[a-z]+$")


def read_index(dict_dir):
    index = {}
    for pos, name in POS_FILES.items():
        with open(os.path.join(dict_dir, f"index.{name}"), encoding="utf-8") as fh:
            for line in fh:
                if line.startswith(" "):
                    continue
                fields = line.split()
                lemma, synset_cnt, p_cnt = fields[0], int(fields[2]), int(fields[3])
                offsets = fields[4 + p_cnt + 2:4 + p_cnt + 2 + synset_cnt]
                index[(lemma, pos)] = offsets
    return index


def read_synset(dict_dir, pos, offset):
    with open(os.path.join(dict_dir, f"data.{POS_FILES[pos]}"), encoding="utf-8") as fh:
        fh.seek(int(offset))
        fields = fh.readline().split()
    count = int(fields[3], 16)
    words = []
    for i in range(count):
        word = re.sub(r"\(.*\)$", "", fields[4 + 2 * i].lower())
        words.append(word.replace("_", " "))
    return words


def build_lexicon(args):
    index = read_index(args.dict)
    lexicon = {}
    for (lemma, pos) in index:
        if WORD_RE.match(lemma):
            lexicon.setdefault(lemma, set()).add(pos)
    with open(args.out, "w", encoding="utf-8") as out:
        for word in sorted(lexicon):
            tags = "".join(p for p in "nvar" if p in lexicon[word])
            out.write(f"{word}\t{tags}\n")


def build_thesaurus(args):
    index = read_index(args.dict)
    words = list(args.words)
    if args.pack:
        with open(args.pack, encoding="utf-8") as fh:
            pack = json.load(fh)
        for rule in pack["semantic"]:
            words.extend(rule["keywords"])
    with open(args.out, "w", encoding="utf-8") as out:
        out.write("# word<TAB>comma-separated synonyms; most frequent synset per part of speech\n")
        for word in sorted(set(w.lower() for w in words)):
            synonyms = []
            for pos in "nvar":
                offsets = index.get((word, pos), [])
                for member in (read_synset(args.dict, pos, offsets[0]) if offsets else []):
                    if member != word and member not in synonyms:
                        synonyms.append(member)
            out.write(f"{word}\t{','.join(synonyms)}\n")


def main():
    parser = argparse.ArgumentParser()
    sub = parser.add_subparsers(dest="cmd", required=True)
    lex = sub.add_parser("lexicon")
    lex.add_argument("--dict", required=True)
    lex.add_argument("--out", required=True)
    th = sub.add_parser("thesaurus")
    th.add_argument("--dict", required=True)
    th.add_argument("--out", required=True)
    th.add_argument("--pack")
    th.add_argument("words", nargs="*")
    args = parser.parse_args()
    if args.cmd == "lexicon":
        build_lexicon(args)
    else:
        build_thesaurus(args)
    return 0


if __name__ == "__main__":
    sys.exit(main())
