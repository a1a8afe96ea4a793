"""Phoneme and syllable decompositions of words.

Pronunciations come from a line-based pronouncing dictionary (``WORD  PH1 PH2``),
syllables from TeX/Hunspell-style hyphenation patterns. Both have deterministic
rule-based fallbacks so every non-empty word decomposes.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .errors import EmptyWord, InvalidLexicon, PatternConflict
from .text import normalize_word

PAD = "<pad>"

ARPABET = (
    "AA", "AE", "AH", "AO", "AW", "AY", "B", "CH", "D", "DH", "EH", "ER", "EY",
    "F", "G", "HH", "IH", "IY", "JH", "K", "L", "M", "N", "NG", "OW", "OY", "P",
    "R", "S", "SH", "T", "TH", "UH", "UW", "V", "W", "Y", "Z", "ZH",
)

# OOV fallback: digraphs first, then one fixed phoneme (sequence) per character.
_DIGRAPHS = {"th": ("TH",), "sh": ("SH",), "ch": ("CH",)}
_LETTERS = {
    "a": ("AE",), "b": ("B",), "c": ("K",), "d": ("D",), "e": ("EH",), "f": ("F",),
    "g": ("G",), "h": ("HH",), "i": ("IH",), "j": ("JH",), "k": ("K",), "l": ("L",),
    "m": ("M",), "n": ("N",), "o": ("AA",), "p": ("P",), "q": ("K",), "r": ("R",),
    "s": ("S",), "t": ("T",), "u": ("AH",), "v": ("V",), "w": ("W",), "x": ("K", "S"),
    "y": ("Y",), "z": ("Z",),
    "0": ("Z", "IH", "R", "OW"), "1": ("W", "AH", "N"), "2": ("T", "UW"),
    "3": ("TH", "R", "IY"), "4": ("F", "AO", "R"), "5": ("F", "AY", "V"),
    "6": ("S", "IH", "K", "S"), "7": ("S", "EH", "V", "AH", "N"), "8": ("EY", "T"),
    "9": ("N", "AY", "N"),
}
_VOWELS = frozenset("aeiouy")


@dataclass(frozen=True)
class PhonemeInventory:
    phonemes: tuple[str, ...]
    pad: str = PAD

    def __post_init__(self):
        if len(set(self.phonemes)) != len(self.phonemes):
            raise InvalidLexicon("phoneme symbols must be unique")
        if self.pad not in self.phonemes:
            raise InvalidLexicon("PAD must be a member of the inventory")
        if len(self.phonemes) < 2:
            raise InvalidLexicon("inventory needs at least two symbols")
        object.__setattr__(self, "_index", {p: i for i, p in enumerate(self.phonemes)})

    @classmethod
    def arpabet(cls):
        return cls((PAD,) + ARPABET)

    @property
    def size(self):
        return len(self.phonemes)

    @property
    def pad_index(self):
        return self._index[self.pad]

    def __contains__(self, symbol):
        return symbol in self._index

    def index(self, symbol):
        return self._index[symbol]

    def encode(self, phones):
        return [self._index[p] for p in phones]


def strip_stress(symbol):
    return symbol.rstrip("012")


@dataclass
class PronunciationLexicon:
    entries: dict
    inventory: PhonemeInventory = field(default_factory=PhonemeInventory.arpabet)
    _neighbors: dict = field(default_factory=dict, init=False, repr=False)
    _encoded: tuple = field(default=None, init=False, repr=False)

    def __post_init__(self):
        for word, phones in self.entries.items():
            if not phones:
                raise InvalidLexicon(f"entry {word!r} has no phonemes")
            for p in phones:
                if p not in self.inventory or p == self.inventory.pad:
                    raise InvalidLexicon(f"entry {word!r}: unknown phoneme {p!r}")
        self.words = sorted(self.entries)

    def __len__(self):
        return len(self.entries)

    def __contains__(self, word):
        return word in self.entries

    def get(self, word):
        return self.entries.get(word)

    def _encoded_table(self):
        if self._encoded is None:
            lengths = np.array([len(self.entries[w]) for w in self.words], dtype=np.int64)
            table = np.full((len(self.words), max(lengths, default=1)), -1, dtype=np.int64)
            for r, w in enumerate(self.words):
                table[r, :lengths[r]] = self.inventory.encode(self.entries[w])
            self._encoded = (table, lengths)
        return self._encoded

    def distances_to_all(self, phones):
        """Phoneme edit distance from ``phones`` to every lexicon word (in ``self.words`` order)."""
        table, lengths = self._encoded_table()
        query = self.inventory.encode(phones)
        n, width = table.shape
        prev = np.tile(np.arange(width + 1, dtype=np.int64), (n, 1))
        cur = np.empty_like(prev)
        for i, q in enumerate(query, start=1):
            cur[:, 0] = i
            cost = (table != q).astype(np.int64)
            for j in range(1, width + 1):
                cur[:, j] = np.minimum(np.minimum(prev[:, j] + 1, cur[:, j - 1] + 1),
                                       prev[:, j - 1] + cost[:, j - 1])
            prev, cur = cur, prev
        return prev[np.arange(n), lengths]

    def confusion_pool(self, word, pool_size):
        """Lexicon words nearest to ``word`` by phoneme edit distance, excluding itself.

        Ties at the pool boundary are all included, so the pool may exceed
        ``pool_size``; the list is alphabetical for deterministic draws.
        """
        key = (word, pool_size)
        pool = self._neighbors.get(key)
        if pool is None:
            norm = _normalized(word)
            dist = self.distances_to_all(g2p(norm, self))
            words = self.words
            mask = np.array([w != norm for w in words])
            cand = dist[mask]
            if cand.size == 0:
                pool = ()
            else:
                k = min(pool_size, cand.size)
                bound = np.partition(cand, k - 1)[k - 1]
                pool = tuple(w for w, d, ok in zip(words, dist, mask) if ok and d <= bound)
            self._neighbors[key] = pool
        return pool


def parse_lexicon(lines, inventory=None):
    """Parse pronouncing-dictionary lines.

    ``;;;`` starts a comment, variant entries ``WORD(2)`` are ignored in favour of
    the first pronunciation, stress digits are stripped and words lowercased.
    """
    inventory = inventory or PhonemeInventory.arpabet()
    entries = {}
    for lineno, line in enumerate(lines, start=1):
        line = line.strip()
        if not line or line.startswith(";;;"):
            continue
        if "#" in line:
            line = line.split("#", 1)[0].strip()
        parts = line.split()
        if len(parts) < 2:
            raise InvalidLexicon(f"line {lineno}: expected WORD followed by phonemes")
        word = parts[0].lower()
        if word.endswith(")") and "(" in word:
            continue
        if word in entries:
            continue
        entries[word] = tuple(strip_stress(p) for p in parts[1:])
    return PronunciationLexicon(entries, inventory)


def load_lexicon(path=None):
    """Load a pronouncing dictionary; ``None`` loads the bundled subset."""
    if path is None:
        text = resources.files("sqa_bench.data").joinpath("lexicon.dict").read_text("utf-8")
        return parse_lexicon(text.splitlines())
    with open(path, encoding="utf-8", errors="replace") as fh:
        return parse_lexicon(fh)


def _normalized(word):
    norm = normalize_word(word)
    if not norm:
        raise EmptyWord(f"word {word!r} is empty after normalization")
    return norm


def rule_g2p(word):
    """Letter-to-phoneme fallback for out-of-vocabulary words."""
    out, i = [], 0
    while i < len(word):
        pair = word[i:i + 2]
        if pair in _DIGRAPHS:
            out.extend(_DIGRAPHS[pair])
            i += 2
            continue
        out.extend(_LETTERS.get(word[i], ()))
        i += 1
    return out


def g2p(word, lexicon):
    norm = _normalized(word)
    hit = lexicon.get(norm)
    if hit is not None:
        return list(hit)
    phones = rule_g2p(norm)
    # Characters outside the rule table (non-ASCII letters) still get a phoneme.
    return phones or ["AH"]


def phoneme_edit_distance(a, b):
    """Unit-cost Levenshtein distance between two phoneme sequences."""
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, pa in enumerate(a, start=1):
        cur = [i]
        for j, pb in enumerate(b, start=1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (pa != pb)))
        prev = cur
    return prev[-1]


_PATTERN_RE = re.compile(r"^[.]?(?:\d?[a-z'])+\d?[.]?$")


@dataclass
class SyllablePatterns:
    """Liang hyphenation patterns keyed by their letter fragment."""
    table: dict
    left_min: int = 2
    right_min: int = 3
    exceptions: dict = field(default_factory=dict)

    def __post_init__(self):
        self._max_len = max((len(k) for k in self.table), default=0)
        self.alphabet = frozenset(ch for k in self.table for ch in k if ch != ".")

    def __len__(self):
        return len(self.table)

    def points(self, word):
        """Inter-letter hyphenation values for a lowercase word (len(word)+1 slots)."""
        work = "." + word + "."
        points = [0] * (len(work) + 1)
        for i in range(len(work)):
            for j in range(i + 1, min(len(work), i + self._max_len) + 1):
                pts = self.table.get(work[i:j])
                if pts is not None:
                    for n, v in enumerate(pts):
                        if v > points[i + n]:
                            points[i + n] = v
        return points[1:-1]


def parse_patterns(lines):
    """Parse one pattern per line (``%`` comments, optional HYPHENMIN directives)."""
    table, exceptions = {}, {}
    left, right = 2, 3
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("%", 1)[0].strip()
        if not line or line == "UTF-8":
            continue
        if line.startswith("LEFTHYPHENMIN"):
            left = int(line.split()[1])
            continue
        if line.startswith("RIGHTHYPHENMIN"):
            right = int(line.split()[1])
            continue
        if line.startswith("COMPOUND"):
            continue
        if "-" in line and not any(c.isdigit() for c in line):
            exceptions[line.replace("-", "")] = line.split("-")
            continue
        if not _PATTERN_RE.match(line):
            raise PatternConflict(f"line {lineno}: malformed pattern {line!r}")
        letters = re.sub(r"\d", "", line)
        values = [int(d) if d else 0 for d in re.split(r"[^\d]", line)]
        values = tuple(values)
        old = table.get(letters)
        if old is not None and old != values:
            raise PatternConflict(f"line {lineno}: {line!r} conflicts with an earlier "
                                  f"pattern for {letters!r}")
        table[letters] = values
    return SyllablePatterns(table, left, right, exceptions)


def load_patterns(path=None):
    """Load a hyphenation pattern file; ``None`` loads the bundled en-US table."""
    if path is None:
        text = resources.files("sqa_bench.data").joinpath("hyph_en_us.txt").read_text("utf-8")
        return parse_patterns(text.splitlines())
    with open(path, encoding="utf-8") as fh:
        return parse_patterns(fh)


def vowel_group_syllabify(word):
    """Fallback: break before the consonant that precedes each later vowel group."""
    lower = word.lower()
    groups, i = [], 0
    while i < len(lower):
        if lower[i] in _VOWELS and not (lower[i] == "y" and i == 0):
            j = i
            while j < len(lower) and lower[j] in _VOWELS:
                j += 1
            groups.append((i, j))
            i = j
        else:
            i += 1
    cuts = []
    for (_, prev_end), (start, _) in zip(groups, groups[1:]):
        cuts.append(start - 1 if start - 1 >= prev_end else start)
    bounds = [0] + cuts + [len(word)]
    return [word[a:b] for a, b in zip(bounds, bounds[1:]) if b > a]


def syllabify(word, patterns=None):
    """Split ``word`` into syllables whose concatenation is ``word``."""
    if not word:
        raise EmptyWord("cannot syllabify an empty word")
    lower = word.lower()
    if patterns is None or len(lower) != len(word) or not set(lower) <= patterns.alphabet:
        return vowel_group_syllabify(word)
    exc = patterns.exceptions.get(lower)
    if exc is not None:
        out, pos = [], 0
        for piece in exc:
            out.append(word[pos:pos + len(piece)])
            pos += len(piece)
        return out
    pts = patterns.points(lower)
    pieces, start = [], 0
    for cut in range(1, len(word)):
        if pts[cut] % 2 and cut >= patterns.left_min and len(word) - cut >= patterns.right_min:
            pieces.append(word[start:cut])
            start = cut
    pieces.append(word[start:])
    return pieces
