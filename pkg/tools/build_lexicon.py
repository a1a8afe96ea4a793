"""Regenerate the bundled data files from upstream sources.

    python tools/build_lexicon.py CMUDICT_PATH HYPH_EN_US_DIC_PATH

CMUDICT_PATH is ``cmudict.dict`` from the cmudict distribution; the second
argument is the Hunspell ``hyph_en_US.dic``. Writes ``src/sqa_bench/data/``.
"""
import re
import sys
from pathlib import Path

import numpy as np

from sqa_bench.harness.fixture import fixture_vocabulary

N_DISTRACTORS = 4000
# Words of the worked misrecognition example, so it runs against the bundled file.
EXAMPLE_WORDS = """to the east united states census bureau considers san bernardino and riverside
county areas area harry as a separate metropolitan from los angeles who be""".split()
OUT = Path(__file__).resolve().parents[1] / "src" / "sqa_bench" / "data"


def main(cmudict_path, hyph_path):
    first = {}
    for line in open(cmudict_path, encoding="utf-8"):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        word, *phones = line.split()
        if "(" in word or word in first:
            continue
        first[word] = phones
    vocab = set(fixture_vocabulary()) | set(EXAMPLE_WORDS)
    missing = sorted(w for w in vocab if w not in first)
    if missing:
        sys.exit(f"fixture words missing from the dictionary: {missing}")
    pool = sorted(w for w in first if re.fullmatch(r"[a-z]{3,9}", w) and w not in vocab)
    rng = np.random.default_rng(0)
    vocab.update(pool[i] for i in rng.choice(len(pool), N_DISTRACTORS, replace=False))
    with open(OUT / "lexicon.dict", "w", encoding="utf-8") as fh:
        fh.write(";;; Subset of the CMU Pronouncing Dictionary (BSD-style license, see\n")
        fh.write(";;; LICENSE.cmudict). Fixture vocabulary plus a random distractor sample.\n")
        for w in sorted(vocab):
            fh.write(f"{w.upper()}  {' '.join(first[w])}\n")

    patterns = []
    for line in open(hyph_path, encoding="utf-8"):
        line = line.strip()
        if line.startswith(("LEFTHYPHENMIN", "RIGHTHYPHENMIN")):
            patterns.append(line)
        elif re.fullmatch(r"[.a-z0-9]+", line) and re.search(r"\d", line):
            patterns.append(line)
    with open(OUT / "hyph_en_us.txt", "w", encoding="utf-8") as fh:
        fh.write("% US English hyphenation patterns, one per line.\n")
        fh.write("% Derived from the plain TeX hyphen.tex table via Hunspell hyph_en_US;\n")
        fh.write("% unlimited copying and redistribution permitted (see LICENSE.hyph).\n")
        fh.write("\n".join(patterns) + "\n")


if __name__ == "__main__":
    main(*sys.argv[1:3])
