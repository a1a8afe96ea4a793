"""Extractive span model: enhanced word embeddings, BiRNN encoder, bilinear pointers.

Word representation = [word embedding | phoneme CNN | syllable CNN | char CNN]
(active units only, in that order). Document and question share one
bidirectional tanh-RNN encoder; the question is pooled by self-attention into a
single vector ``q`` and start/end logits are ``h_i^T W q`` per position.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from ..errors import EmptyDocument, EmptyWord
from ..subword import g2p, syllabify
from ..text import normalize_word
from . import tensor as T
from .subword_cnn import UNITS, SubwordCNN, SubwordConfig

PAD, UNK = "<pad>", "<unk>"
CHARS = "abcdefghijklmnopqrstuvwxyz0123456789"


@dataclass(frozen=True)
class Example:
    id: str
    doc_words: tuple
    question_words: tuple
    span: tuple | None = None


@dataclass
class ModelConfig:
    word_dim: int = 100
    hidden: int = 32
    units: tuple = ()
    subword: dict = field(default_factory=dict)

    def __post_init__(self):
        units = tuple(u for u in UNITS if u in self.units)
        unknown = set(self.units) - set(UNITS)
        if unknown:
            raise ValueError(f"unknown subword units {sorted(unknown)}")
        self.units = units
        for u in units:
            self.subword.setdefault(u, SubwordConfig.default(u))

    @property
    def input_dim(self):
        return self.word_dim + sum(self.subword[u].n_filters for u in self.units)

    def to_dict(self):
        return {"word_dim": self.word_dim, "hidden": self.hidden, "units": list(self.units),
                "subword": {u: self.subword[u].to_dict() for u in self.units}}

    @classmethod
    def from_dict(cls, d):
        return cls(d["word_dim"], d["hidden"], tuple(d["units"]),
                   {u: SubwordConfig(**c) for u, c in d["subword"].items()})


class Featurizer:
    """Maps word strings to word ids and per-unit id sequences."""

    def __init__(self, words, syllables, lexicon=None, patterns=None):
        self.words = [PAD, UNK] + [w for w in words if w not in (PAD, UNK)]
        self.syllables = [PAD, UNK] + [s for s in syllables if s not in (PAD, UNK)]
        self.chars = [PAD, UNK] + list(CHARS)
        self.lexicon = lexicon
        self.patterns = patterns
        self._word_index = {w: i for i, w in enumerate(self.words)}
        self._syl_index = {s: i for i, s in enumerate(self.syllables)}
        self._char_index = {c: i for i, c in enumerate(self.chars)}
        self._cache = {}

    @classmethod
    def build(cls, sequences, lexicon=None, patterns=None, min_count=1):
        counts = Counter(w for seq in sequences for w in seq)
        words = sorted(w for w, c in counts.items() if c >= min_count)
        syls = set()
        for w in counts:
            syls.update(_syllables(w, patterns))
        return cls(words, sorted(syls), lexicon, patterns)

    def n_symbols(self, unit):
        if unit == "phoneme":
            return self.lexicon.inventory.size
        if unit == "syllable":
            return len(self.syllables)
        return len(self.chars)

    def pad_index(self, unit):
        return self.lexicon.inventory.pad_index if unit == "phoneme" else 0

    def word_id(self, word):
        return self._word_index.get(word, 1) if word != PAD else 0

    def unit_ids(self, unit, word):
        key = (unit, word)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        if word == PAD:
            ids = [self.pad_index(unit)]
        elif unit == "phoneme":
            try:
                ids = self.lexicon.inventory.encode(g2p(word, self.lexicon))
            except EmptyWord:
                ids = [self.pad_index(unit)]
        elif unit == "syllable":
            ids = [self._syl_index.get(s, 1) for s in _syllables(word, self.patterns)]
        else:
            ids = [self._char_index.get(c, 1) for c in word.lower()] or [1]
        self._cache[key] = ids
        return ids

    def to_dict(self):
        return {"words": self.words[2:], "syllables": self.syllables[2:]}


def _syllables(word, patterns):
    w = normalize_word(word) or word
    return syllabify(w, patterns) if w else []


class SpanModel:
    def __init__(self, config, featurizer, seed=0):
        self.config = config
        self.featurizer = featurizer
        rng = np.random.default_rng(seed)
        V, Dw, Hd = len(featurizer.words), config.word_dim, config.hidden
        emb = rng.normal(0.0, 0.1, (V, Dw))
        emb[0] = 0.0
        self.word_emb = T.parameter(emb, "word_emb")
        self.cnns = {u: SubwordCNN(featurizer.n_symbols(u), config.subword[u], rng,
                                   featurizer.pad_index(u), u)
                     for u in config.units}
        Din = config.input_dim
        self.enc = {}
        for d in ("fwd", "bwd"):
            self.enc[d] = (
                T.parameter(rng.normal(0.0, 1.0 / np.sqrt(Din), (Din, Hd)), f"enc.{d}.W"),
                T.parameter(np.zeros(Hd), f"enc.{d}.b"),
                T.parameter(_orthogonal(rng, Hd) * 0.9, f"enc.{d}.U"),
            )
        E = 2 * Hd
        self.att = T.parameter(rng.normal(0.0, 1.0 / np.sqrt(E), (E, 1)), "att.w")
        self.W_start = T.parameter(rng.normal(0.0, 1.0 / E, (E, E)), "start.W")
        self.W_end = T.parameter(rng.normal(0.0, 1.0 / E, (E, E)), "end.W")

    def parameters(self):
        params = {"word_emb": self.word_emb}
        for u, cnn in self.cnns.items():
            params[f"{u}.H"] = cnn.H
            params[f"{u}.filters"] = cnn.filters
        for d, (W, b, U) in self.enc.items():
            params[f"enc.{d}.W"], params[f"enc.{d}.b"], params[f"enc.{d}.U"] = W, b, U
        params["att.w"] = self.att
        params["start.W"] = self.W_start
        params["end.W"] = self.W_end
        return params

    # -- representations -------------------------------------------------
    def represent(self, words):
        """(len(words), input_dim) word representations as one Tensor."""
        fz = self.featurizer
        parts = [T.take_rows(self.word_emb, [fz.word_id(w) for w in words])]
        for u in self.config.units:
            parts.append(self.cnns[u].embed([fz.unit_ids(u, w) for w in words]))
        return parts[0] if len(parts) == 1 else T.concat(parts, axis=1)

    def encode(self, X, lengths):
        """BiRNN over (B, T, D) inputs; the backward pass reverses each row within its length."""
        B, L, _ = X.shape
        W, b, U = self.enc["fwd"]
        fwd = T.rnn_tanh(T.add(T.matmul(X, W), b), U)
        rev = _reverse_index(lengths, L)
        W, b, U = self.enc["bwd"]
        bwd = T.rnn_tanh(T.add(T.matmul(T.gather_time(X, rev), W), b), U)
        return T.concat([fwd, T.gather_time(bwd, rev)], axis=2)

    def pointer_logprobs(self, doc_X, doc_len, q_X, q_len):
        """Log start/end distributions (B, T) from word representations."""
        Hd = self.encode(doc_X, doc_len)
        Hq = self.encode(q_X, q_len)
        B, Tq, E = Hq.shape
        q_mask = np.arange(Tq)[None, :] < np.asarray(q_len)[:, None]
        att = T.softmax(T.reshape(T.matmul(Hq, self.att), (B, Tq)), mask=q_mask)
        q = T.reshape(T.matmul(T.reshape(att, (B, 1, Tq)), Hq), (B, E, 1))
        d_mask = np.arange(Hd.shape[1])[None, :] < np.asarray(doc_len)[:, None]
        out = []
        for W in (self.W_start, self.W_end):
            logits = T.reshape(T.matmul(Hd, T.matmul(W, q)), (B, Hd.shape[1]))
            out.append(T.log_softmax(logits, mask=d_mask))
        return out[0], out[1], d_mask

    def batch_logprobs(self, examples, train=False, dropout=0.0, rng=None):
        vocab, doc_idx, doc_len, q_idx, q_len = collate(examples)
        R = self.represent(vocab)
        doc_X = T.dropout(T.take_rows(R, doc_idx), dropout, rng, train)
        q_X = T.dropout(T.take_rows(R, q_idx), dropout, rng, train)
        return self.pointer_logprobs(doc_X, doc_len, q_X, q_len)

    def loss(self, examples, train=True, dropout=0.0, rng=None):
        lp_s, lp_e, _ = self.batch_logprobs(examples, train, dropout, rng)
        rows = np.arange(len(examples))
        starts = np.array([ex.span[0] for ex in examples])
        ends = np.array([ex.span[1] for ex in examples])
        picked = T.add(T.getitem(lp_s, (rows, starts)), T.getitem(lp_e, (rows, ends)))
        return T.neg(T.mean(picked))

    def distributions(self, examples):
        """Eval-mode start/end probability arrays, one pair per example."""
        lp_s, lp_e, mask = self.batch_logprobs(examples, train=False)
        out = []
        for b, ex in enumerate(examples):
            n = len(ex.doc_words)
            out.append((np.exp(lp_s.data[b, :n]), np.exp(lp_e.data[b, :n])))
        return out

    def predict(self, examples, batch_size=64):
        spans = []
        for i in range(0, len(examples), batch_size):
            for ps, pe in self.distributions(examples[i:i + batch_size]):
                spans.append(predict_span(ps, pe))
        return spans


def _orthogonal(rng, n):
    q, r = np.linalg.qr(rng.normal(size=(n, n)))
    return q * np.sign(np.diag(r))


def _reverse_index(lengths, L):
    idx = np.tile(np.arange(L), (len(lengths), 1))
    for b, n in enumerate(lengths):
        idx[b, :n] = np.arange(n - 1, -1, -1)
    return idx


def collate(examples):
    """Shared word list (PAD first) plus padded index arrays into it."""
    vocab, index = [PAD], {PAD: 0}
    for ex in examples:
        if not ex.doc_words:
            raise EmptyDocument(f"example {ex.id} has an empty document")
        for w in ex.doc_words + ex.question_words:
            if w not in index:
                index[w] = len(vocab)
                vocab.append(w)
    doc_len = [len(ex.doc_words) for ex in examples]
    q_len = [max(1, len(ex.question_words)) for ex in examples]
    doc_idx = np.zeros((len(examples), max(doc_len)), dtype=np.int64)
    q_idx = np.zeros((len(examples), max(q_len)), dtype=np.int64)
    for b, ex in enumerate(examples):
        doc_idx[b, :len(ex.doc_words)] = [index[w] for w in ex.doc_words]
        q_idx[b, :len(ex.question_words)] = [index[w] for w in ex.question_words]
    return vocab, doc_idx, doc_len, q_idx, q_len


def build_word_representation(word, model):
    """Representation vector of a single word under ``model``'s active units."""
    return model.represent([word]).data[0]


def span_scores(doc_vectors, question_vectors, model, mode="eval", dropout=0.0, rng=None):
    """Start/end distributions for one example from precomputed word representations.

    Dropout applies to the representations only when ``mode == "train"``.
    """
    doc_vectors = np.asarray(doc_vectors, dtype=np.float64)
    question_vectors = np.asarray(question_vectors, dtype=np.float64)
    if doc_vectors.shape[0] == 0:
        raise EmptyDocument("span_scores needs at least one document position")
    train = mode == "train"
    if train and rng is None:
        rng = np.random.default_rng(0)
    doc_X = T.dropout(T.Tensor(doc_vectors[None]), dropout, rng, train)
    q_X = T.dropout(T.Tensor(question_vectors[None]), dropout, rng, train)
    lp_s, lp_e, _ = model.pointer_logprobs(doc_X, [doc_vectors.shape[0]], q_X,
                                           [question_vectors.shape[0]])
    return np.exp(lp_s.data[0]), np.exp(lp_e.data[0])


def predict_span(start, end):
    """argmax over i <= j of start[i] * end[j]; ties go to smallest i, then shortest span."""
    start = np.asarray(start, dtype=np.float64)
    end = np.asarray(end, dtype=np.float64)
    scores = np.triu(np.outer(start, end))
    n = len(start)
    scores[np.tril_indices(n, -1)] = -np.inf
    flat = int(np.argmax(scores))
    return divmod(flat, n)
