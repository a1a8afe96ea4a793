"""Word-level ASR error channel, WER alignment and synthetic word timestamps."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .corpus import Token
from .errors import (EmptyLexicon, EmptyReference, EmptyWord, InsufficientCorpus,
                     InvalidChannelConfig, MalformedInput, Unreachable)
from .subword import g2p
from .text import is_word

MATCH, SUB, DEL, INS = "MATCH", "SUB", "DEL", "INS"

SPOKEN_FORMAT = "sqa-bench/spoken-corpus"
SPOKEN_VERSION = 1
WORD_GAP = 0.05
DEFAULT_PHONES_PER_SECOND = 12.0
# sub:del:ins mix used by calibrate()
ERROR_MIX = (0.7, 0.2, 0.1)
MIN_CALIBRATION_TOKENS = 5000


@dataclass(frozen=True)
class EditOp:
    kind: str
    ref_index: int | None = None
    hyp_index: int | None = None

    def __post_init__(self):
        if self.kind in (MATCH, SUB):
            ok = self.ref_index is not None and self.hyp_index is not None
        elif self.kind == DEL:
            ok = self.ref_index is not None and self.hyp_index is None
        elif self.kind == INS:
            ok = self.ref_index is None and self.hyp_index is not None
        else:
            ok = False
        if not ok:
            raise MalformedInput(f"invalid edit op {self!r}")

    def to_list(self):
        return [self.kind, self.ref_index, self.hyp_index]


@dataclass(frozen=True)
class ChannelConfig:
    sub_rate: float = 0.0
    del_rate: float = 0.0
    ins_rate: float = 0.0
    target_wer: float | None = None
    confusion_pool_size: int = 5
    seed: int = 0

    def __post_init__(self):
        for name in ("sub_rate", "del_rate", "ins_rate"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise InvalidChannelConfig(f"{name}={v} outside [0, 1]")
        if self.sub_rate + self.del_rate > 1.0 + 1e-12:
            raise InvalidChannelConfig("sub_rate + del_rate must not exceed 1")
        if self.confusion_pool_size < 1:
            raise InvalidChannelConfig("confusion_pool_size must be positive")
        if not 0 <= self.seed < 2 ** 64:
            raise InvalidChannelConfig("seed must be a 64-bit unsigned integer")

    @classmethod
    def scaled(cls, scale, template):
        s, d, i = (min(1.0, r * scale) for r in ERROR_MIX)
        return cls(s, d, i, template.target_wer, template.confusion_pool_size, template.seed)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass(frozen=True)
class TimedWord:
    text: str
    t_start: float
    t_end: float


@dataclass(frozen=True)
class SpokenDocument:
    doc_id: str
    ref_tokens: tuple[Token, ...]
    hyp_words: tuple[TimedWord, ...]
    alignment: tuple[EditOp, ...]
    wer: float

    @property
    def ref_words(self):
        return [t.text.lower() for t in self.ref_tokens]

    @property
    def hyp_texts(self):
        return [w.text for w in self.hyp_words]


def levenshtein_align(ref, hyp):
    """Minimum unit-cost edit distance plus one optimal edit script.

    Backtrace from the end prefers MATCH, then SUB, then DEL, then INS.
    """
    n, m = len(ref), len(hyp)
    dp = [[0] * (m + 1) for _ in range(n + 1)]
    for j in range(m + 1):
        dp[0][j] = j
    for i in range(1, n + 1):
        row, prev = dp[i], dp[i - 1]
        row[0] = i
        r = ref[i - 1]
        for j in range(1, m + 1):
            row[j] = min(prev[j] + 1, row[j - 1] + 1, prev[j - 1] + (r != hyp[j - 1]))
    ops = []
    i, j = n, m
    while i > 0 or j > 0:
        cur = dp[i][j]
        if i > 0 and j > 0 and ref[i - 1] == hyp[j - 1] and cur == dp[i - 1][j - 1]:
            ops.append(EditOp(MATCH, i - 1, j - 1))
            i, j = i - 1, j - 1
        elif i > 0 and j > 0 and cur == dp[i - 1][j - 1] + 1:
            ops.append(EditOp(SUB, i - 1, j - 1))
            i, j = i - 1, j - 1
        elif i > 0 and cur == dp[i - 1][j] + 1:
            ops.append(EditOp(DEL, i - 1, None))
            i -= 1
        else:
            ops.append(EditOp(INS, None, j - 1))
            j -= 1
    ops.reverse()
    return dp[n][m], ops


def edit_distance(ref, hyp):
    """Distance only, two-row DP (used on the calibration hot path)."""
    prev = list(range(len(hyp) + 1))
    for i, r in enumerate(ref, start=1):
        cur = [i]
        for j, h in enumerate(hyp, start=1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (r != h)))
        prev = cur
    return prev[-1]


def wer(ref, hyp):
    if not ref:
        raise EmptyReference("WER is undefined for an empty reference")
    return edit_distance(ref, hyp) / len(ref)


def replay(ops, ref, hyp):
    """Apply an edit script to ``ref``; raises if it does not reproduce ``hyp``."""
    out, next_ref, next_hyp = [], 0, 0
    for op in ops:
        if op.ref_index is not None:
            if op.ref_index != next_ref:
                raise MalformedInput(f"alignment skips reference index {next_ref}")
            next_ref += 1
        if op.hyp_index is not None:
            if op.hyp_index != next_hyp:
                raise MalformedInput(f"alignment skips hypothesis index {next_hyp}")
            next_hyp += 1
        if op.kind == MATCH:
            if ref[op.ref_index] != hyp[op.hyp_index]:
                raise MalformedInput(f"MATCH on differing words at {op}")
            out.append(ref[op.ref_index])
        elif op.kind in (SUB, INS):
            if op.kind == SUB and ref[op.ref_index] == hyp[op.hyp_index]:
                raise MalformedInput(f"SUB on identical words at {op}")
            out.append(hyp[op.hyp_index])
    if next_ref != len(ref) or out != list(hyp):
        raise MalformedInput("alignment does not replay reference into hypothesis")
    return out


def corrupt(ref, cfg, lexicon, rng):
    """Pass a token sequence through the error channel.

    Four uniforms are drawn per reference token whatever happens to it, so a
    fixed seed couples runs at different rates (errors only grow with rate).
    """
    if len(lexicon) == 0:
        raise EmptyLexicon("the error channel needs a non-empty lexicon")
    draws = rng.random((len(ref), 4))
    vocab = lexicon.words
    out = []
    for tok, (u_err, u_pick, u_ins, u_word) in zip(ref, draws):
        if u_err < cfg.sub_rate:
            pool = lexicon.confusion_pool(tok, cfg.confusion_pool_size)
            out.append(pool[int(u_pick * len(pool))] if pool else tok)
        elif u_err >= cfg.sub_rate + cfg.del_rate:
            out.append(tok)
        if u_ins < cfg.ins_rate:
            out.append(vocab[int(u_word * len(vocab))])
    return out


def corrupt_corpus(ref_docs, cfg, lexicon):
    """Corrupt a list of documents with one generator seeded from ``cfg.seed``."""
    rng = np.random.default_rng(cfg.seed)
    return [corrupt(doc, cfg, lexicon, rng) for doc in ref_docs]


def corpus_wer(ref_docs, hyp_docs):
    total = sum(len(r) for r in ref_docs)
    if total == 0:
        raise EmptyReference("corpus has no reference tokens")
    return sum(edit_distance(r, h) for r, h in zip(ref_docs, hyp_docs)) / total


def calibrate(target_wer, corpus, cfg_template, lexicon, tolerance=0.01, max_iter=30):
    """Find rates in the fixed 7:2:1 mix whose measured corpus WER hits ``target_wer``.

    Bisects the overall scale; every evaluation re-seeds from the template seed.
    """
    if not 0.0 <= target_wer < 1.0:
        raise Unreachable(f"target WER {target_wer} outside [0, 1)")
    corpus = [list(doc) for doc in corpus]
    if target_wer == 0.0:
        return ChannelConfig(0.0, 0.0, 0.0, 0.0, cfg_template.confusion_pool_size,
                             cfg_template.seed)
    n_tokens = sum(len(d) for d in corpus)
    if n_tokens < MIN_CALIBRATION_TOKENS:
        raise InsufficientCorpus(
            f"calibration needs >= {MIN_CALIBRATION_TOKENS} tokens, got {n_tokens}")
    template = ChannelConfig(0, 0, 0, target_wer, cfg_template.confusion_pool_size,
                             cfg_template.seed)

    def measure(scale):
        cfg = ChannelConfig.scaled(scale, template)
        return cfg, corpus_wer(corpus, corrupt_corpus(corpus, cfg, lexicon))

    lo, hi = 0.0, 1.0 / (ERROR_MIX[0] + ERROR_MIX[1])
    best = None
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        cfg, measured = measure(mid)
        if best is None or abs(measured - target_wer) < abs(best[1] - target_wer):
            best = (cfg, measured)
        # Stop well inside the tolerance band.
        if abs(measured - target_wer) <= tolerance / 5:
            break
        if measured < target_wer:
            lo = mid
        else:
            hi = mid
    if best is None or abs(best[1] - target_wer) > tolerance:
        raise Unreachable(f"could not reach WER {target_wer} (closest {best and best[1]:.4f})")
    return best[0]


def synthesize_timestamps(hyp, lexicon, phones_per_second=DEFAULT_PHONES_PER_SECOND):
    """Contiguous word stamps from t=0: duration max(1, #phonemes)/rate plus a fixed gap."""
    if phones_per_second <= 0:
        raise ValueError("phones_per_second must be positive")
    out, t = [], 0.0
    for word in hyp:
        try:
            n = len(g2p(word, lexicon))
        except EmptyWord:
            n = 0
        end = t + max(1, n) / phones_per_second
        out.append(TimedWord(word, round(t, 3), round(end, 3)))
        t = end + WORD_GAP
    return out


def reference_words(document):
    """Word tokens (punctuation dropped) of a corpus document: the spoken reference."""
    return tuple(t for t in document.tokens if is_word(t.text))


def build_spoken_document(doc_id, ref_tokens, hyp, lexicon,
                          phones_per_second=DEFAULT_PHONES_PER_SECOND):
    ref = [t.text.lower() for t in ref_tokens]
    dist, ops = levenshtein_align(ref, hyp)
    return SpokenDocument(doc_id, tuple(ref_tokens),
                          tuple(synthesize_timestamps(hyp, lexicon, phones_per_second)),
                          tuple(ops), dist / len(ref) if ref else 0.0)


@dataclass
class SpokenCorpus:
    documents: dict
    channel: ChannelConfig
    tier: str = "custom"
    phones_per_second: float = DEFAULT_PHONES_PER_SECOND
    inventory: tuple = ()

    @property
    def corpus_wer(self):
        total = sum(len(d.ref_tokens) for d in self.documents.values())
        errs = sum(sum(op.kind != MATCH for op in d.alignment) for d in self.documents.values())
        return errs / total if total else 0.0

    def __getitem__(self, doc_id):
        return self.documents[doc_id]

    def get(self, doc_id, default=None):
        return self.documents.get(doc_id, default)


def synthesize_corpus(dataset, cfg, lexicon, tier="custom",
                      phones_per_second=DEFAULT_PHONES_PER_SECOND):
    """Run every document of ``dataset`` through the channel in document order."""
    refs = [reference_words(d) for d in dataset.documents]
    hyps = corrupt_corpus([[t.text.lower() for t in r] for r in refs], cfg, lexicon)
    docs = {}
    for d, r, h in zip(dataset.documents, refs, hyps):
        docs[d.id] = build_spoken_document(d.id, r, h, lexicon, phones_per_second)
    return SpokenCorpus(docs, cfg, tier, phones_per_second, lexicon.inventory.phonemes)


def dump_spoken_corpus(corpus):
    return {
        "format": SPOKEN_FORMAT,
        "version": SPOKEN_VERSION,
        "tier": corpus.tier,
        "channel": corpus.channel.to_dict(),
        "seed": corpus.channel.seed,
        "corpus_wer": round(corpus.corpus_wer, 6),
        "phones_per_second": corpus.phones_per_second,
        "inventory": list(corpus.inventory),
        "documents": [{
            "doc_id": d.doc_id,
            "ref_tokens": [[t.text, t.char_start, t.char_end] for t in d.ref_tokens],
            "hyp_words": [[w.text, round(w.t_start, 3), round(w.t_end, 3)] for w in d.hyp_words],
            "alignment": [op.to_list() for op in d.alignment],
            "wer": round(d.wer, 6),
        } for d in corpus.documents.values()],
    }


def load_spoken_corpus(obj):
    if not isinstance(obj, dict):
        obj = json.loads(obj)
    if obj.get("format") != SPOKEN_FORMAT:
        raise MalformedInput(f"not a spoken-corpus file (format={obj.get('format')!r})")
    docs = {}
    for d in obj["documents"]:
        ref = tuple(Token(*t) for t in d["ref_tokens"])
        hyp = tuple(TimedWord(*w) for w in d["hyp_words"])
        ops = tuple(EditOp(*op) for op in d["alignment"])
        replay(ops, [t.text.lower() for t in ref], [w.text for w in hyp])
        docs[d["doc_id"]] = SpokenDocument(d["doc_id"], ref, hyp, ops, d["wer"])
    return SpokenCorpus(docs, ChannelConfig.from_dict(obj["channel"]), obj.get("tier", "custom"),
                        obj.get("phones_per_second", DEFAULT_PHONES_PER_SECOND),
                        tuple(obj.get("inventory", ())))


def save_spoken_corpus(corpus, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(dump_spoken_corpus(corpus), fh, ensure_ascii=False, indent=1)
        fh.write("\n")


def read_spoken_corpus(path):
    with open(path, encoding="utf-8") as fh:
        return load_spoken_corpus(json.load(fh))
