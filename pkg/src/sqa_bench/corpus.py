"""SQuAD-layout ingestion, canonical token-anchored dataset files, answerability filter."""
from __future__ import annotations

import io
import json
from dataclasses import dataclass, field

from .errors import MalformedInput, MissingTranscript, OffsetOutOfRange
from .text import find_subsequence, normalize_answer, normalized_index, token_spans

CANONICAL_FORMAT = "sqa-bench/dataset"
CANONICAL_VERSION = 1


@dataclass(frozen=True)
class Token:
    text: str
    char_start: int
    char_end: int


@dataclass(frozen=True)
class AnswerRef:
    text: str
    char_start: int
    token_span: tuple[int, int]

    @property
    def char_end(self):
        return self.char_start + len(self.text)


@dataclass(frozen=True)
class QAPair:
    id: str
    doc_id: str
    question: str
    question_tokens: tuple[Token, ...]
    answers: tuple[AnswerRef, ...]


@dataclass(frozen=True)
class Document:
    id: str
    title: str
    text: str
    tokens: tuple[Token, ...]


@dataclass
class QADataset:
    documents: list[Document]
    pairs: list[QAPair]
    split: str = "test"
    _by_id: dict = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.split not in ("train", "test"):
            raise MalformedInput(f"split must be 'train' or 'test', got {self.split!r}")
        self._by_id = {d.id: d for d in self.documents}
        for p in self.pairs:
            if p.doc_id not in self._by_id:
                raise MalformedInput(f"pair {p.id} references unknown document {p.doc_id}")

    def document(self, doc_id):
        return self._by_id[doc_id]

    def with_pairs(self, pairs):
        return QADataset(self.documents, list(pairs), self.split)


def tokenize(text):
    """Split on whitespace, detaching every punctuation character as its own token."""
    return [Token(s, a, b) for s, a, b in token_spans(text)]


def tokens_in_range(tokens, start, end):
    """Indices of tokens whose character range intersects ``[start, end)``."""
    return [i for i, t in enumerate(tokens) if t.char_start < end and t.char_end > start]


def resolve_answer(tokens, text, char_start, context_len):
    if char_start < 0 or char_start + len(text) > context_len:
        raise OffsetOutOfRange(
            f"answer {text!r} at {char_start} exceeds context length {context_len}")
    hit = tokens_in_range(tokens, char_start, char_start + len(text))
    if not hit:
        raise MalformedInput(f"answer {text!r} at {char_start} covers no token")
    return AnswerRef(text, char_start, (hit[0], hit[-1]))


def _require(obj, key, where):
    try:
        return obj[key]
    except (KeyError, TypeError):
        raise MalformedInput(f"missing required field {key!r} in {where}") from None


def _read_json(raw):
    if isinstance(raw, (bytes, bytearray)):
        raw = raw.decode("utf-8")
    elif isinstance(raw, io.IOBase) or hasattr(raw, "read"):
        raw = raw.read()
        if isinstance(raw, bytes):
            raw = raw.decode("utf-8")
    try:
        return json.loads(raw)
    except json.JSONDecodeError as exc:
        raise MalformedInput(f"invalid JSON: {exc}") from None


def parse_squad(raw, split="test"):
    """Parse a SQuAD v1.1-layout file (bytes, str or binary stream)."""
    obj = _read_json(raw)
    articles = _require(obj, "data", "top level")
    if not isinstance(articles, list):
        raise MalformedInput("'data' must be an array")
    documents, pairs = [], []
    for ai, article in enumerate(articles):
        title = _require(article, "title", f"data[{ai}]")
        for pi, para in enumerate(_require(article, "paragraphs", f"data[{ai}]")):
            where = f"data[{ai}].paragraphs[{pi}]"
            context = _require(para, "context", where)
            if not isinstance(context, str):
                raise MalformedInput(f"{where}.context must be a string")
            doc_id = f"a{ai}p{pi}"
            tokens = tuple(tokenize(context))
            documents.append(Document(doc_id, title, context, tokens))
            for qi, qa in enumerate(_require(para, "qas", where)):
                qwhere = f"{where}.qas[{qi}]"
                qid = str(_require(qa, "id", qwhere))
                question = _require(qa, "question", qwhere)
                raw_answers = _require(qa, "answers", qwhere)
                if not raw_answers:
                    raise MalformedInput(f"{qwhere} has no answers")
                answers = []
                for ans in raw_answers:
                    text = _require(ans, "text", qwhere + ".answers")
                    start = _require(ans, "answer_start", qwhere + ".answers")
                    if not isinstance(start, int):
                        raise MalformedInput(f"{qwhere}: answer_start must be an integer")
                    answers.append(resolve_answer(tokens, text, start, len(context)))
                pairs.append(QAPair(qid, doc_id, question, tuple(tokenize(question)),
                                    tuple(answers)))
    return QADataset(documents, pairs, split)


def to_squad(dataset):
    """Re-emit a dataset in SQuAD v1.1 layout (documents grouped by title in order)."""
    by_doc = {}
    for p in dataset.pairs:
        by_doc.setdefault(p.doc_id, []).append(p)
    articles = []
    for doc in dataset.documents:
        if not articles or articles[-1]["title"] != doc.title:
            articles.append({"title": doc.title, "paragraphs": []})
        articles[-1]["paragraphs"].append({
            "context": doc.text,
            "qas": [{"id": p.id, "question": p.question,
                     "answers": [{"text": a.text, "answer_start": a.char_start}
                                 for a in p.answers]}
                    for p in by_doc.get(doc.id, [])],
        })
    return {"version": "1.1", "data": articles}


def _tok_list(tokens):
    return [[t.text, t.char_start, t.char_end] for t in tokens]


def _tok_tuple(rows):
    return tuple(Token(s, a, b) for s, a, b in rows)


def dump_canonical(dataset):
    """Canonical JSON dict with explicit tokens and token-anchored answers."""
    return {
        "format": CANONICAL_FORMAT,
        "version": CANONICAL_VERSION,
        "split": dataset.split,
        "documents": [{"id": d.id, "title": d.title, "text": d.text,
                       "tokens": _tok_list(d.tokens)} for d in dataset.documents],
        "pairs": [{"id": p.id, "doc_id": p.doc_id, "question": p.question,
                   "question_tokens": _tok_list(p.question_tokens),
                   "answers": [{"text": a.text, "char_start": a.char_start,
                                "token_span": list(a.token_span)} for a in p.answers]}
                  for p in dataset.pairs],
    }


def load_canonical(raw):
    obj = raw if isinstance(raw, dict) else _read_json(raw)
    if obj.get("format") != CANONICAL_FORMAT:
        raise MalformedInput(f"not a canonical dataset file (format={obj.get('format')!r})")
    try:
        docs = [Document(d["id"], d["title"], d["text"], _tok_tuple(d["tokens"]))
                for d in obj["documents"]]
        pairs = [QAPair(p["id"], p["doc_id"], p["question"], _tok_tuple(p["question_tokens"]),
                        tuple(AnswerRef(a["text"], a["char_start"], tuple(a["token_span"]))
                              for a in p["answers"]))
                 for p in obj["pairs"]]
        return QADataset(docs, pairs, obj["split"])
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedInput(f"canonical dataset: {exc}") from None


def load_dataset(path, split="test"):
    """Load either a canonical dataset file or a SQuAD-layout file."""
    with open(path, "rb") as fh:
        obj = _read_json(fh.read())
    if isinstance(obj, dict) and obj.get("format") == CANONICAL_FORMAT:
        return load_canonical(obj)
    return parse_squad(json.dumps(obj), split=split)


def save_canonical(dataset, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(dump_canonical(dataset), fh, ensure_ascii=False, indent=1)
        fh.write("\n")


def filter_answerable(dataset, transcripts):
    """Keep pairs whose first answer survives in the hypothesis transcript.

    A pair survives when its normalized answer occurs as a contiguous run of
    normalized hypothesis tokens and at least one reference token of the
    answer is aligned (match or substitution) to a hypothesis word, so a
    ground-truth time interval exists. Returns ``(filtered, removed_count)``.
    """
    from .metrics import answer_ref_span, is_alignable

    cache = {}
    kept = []
    for pair in dataset.pairs:
        spoken = transcripts.get(pair.doc_id)
        if spoken is None:
            raise MissingTranscript(f"no transcript for document {pair.doc_id}")
        if pair.doc_id not in cache:
            cache[pair.doc_id] = normalized_index([w.text for w in spoken.hyp_words])[0]
        hyp_norm = cache[pair.doc_id]
        answer = pair.answers[0]
        needle = normalize_answer(answer.text)
        if needle and not find_subsequence(hyp_norm, needle):
            continue
        span = answer_ref_span(answer, spoken)
        if span is None or not is_alignable(span, spoken):
            continue
        kept.append(pair)
    return dataset.with_pairs(kept), len(dataset.pairs) - len(kept)


def with_split(dataset, split):
    return QADataset(dataset.documents, dataset.pairs, split)


__all__ = [
    "Token", "AnswerRef", "QAPair", "Document", "QADataset", "tokenize", "tokens_in_range",
    "parse_squad", "to_squad", "dump_canonical", "load_canonical", "load_dataset",
    "save_canonical", "filter_answerable", "with_split",
]
