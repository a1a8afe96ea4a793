"""Tokenization and answer normalization shared by the corpus and metrics code."""
import re
import string

# Frozen rule: runs of word characters, or any single non-space, non-word char.
_TOKEN_RE = re.compile(r"\w+|[^\w\s]")
_ARTICLES = frozenset({"a", "an", "the"})
_PUNCT = frozenset(string.punctuation)


def token_spans(text):
    """Yield ``(surface, start, end)`` for each token of ``text``."""
    for m in _TOKEN_RE.finditer(text):
        yield m.group(0), m.start(), m.end()


def is_word(surface):
    """True when a token carries at least one spoken (alphanumeric) character."""
    return any(ch.isalnum() for ch in surface)


def normalize_word(word):
    """Lowercase and strip punctuation from a single token; '' if nothing remains."""
    return "".join(ch for ch in word.lower() if ch not in _PUNCT)


def _spaced(text):
    # punctuation separates tokens, matching the punctuation-free spoken transcripts
    return "".join(" " if ch in _PUNCT else ch for ch in text.lower())


def normalize_answer(text):
    """Lowercase, turn punctuation into spaces, split, drop the articles a/an/the.

    "19.9" becomes ["19", "9"], the same tokens a transcript of the words
    "19 9" normalizes to.
    """
    return [w for w in _spaced(text).split() if w not in _ARTICLES]


def normalized_index(words):
    """Normalize a word sequence token by token.

    Returns ``(tokens, positions)`` where ``positions[n]`` is the index in
    ``words`` that produced normalized token ``n``. The token list always
    equals ``normalize_answer(" ".join(words))``.
    """
    tokens, positions = [], []
    for i, w in enumerate(words):
        for piece in _spaced(w).split():
            if piece not in _ARTICLES:
                tokens.append(piece)
                positions.append(i)
    return tokens, positions


def find_subsequence(haystack, needle):
    """Start offsets of every contiguous occurrence of ``needle`` in ``haystack``."""
    n = len(needle)
    if n == 0:
        return []
    first = needle[0]
    return [i for i in range(len(haystack) - n + 1)
            if haystack[i] == first and haystack[i:i + n] == needle]
