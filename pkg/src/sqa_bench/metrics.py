"""Text-answer EM/F1 and time-span Audio Overlapping Score (AOS)."""
from __future__ import annotations

import csv
import io
import json
import math
from collections import Counter
from dataclasses import dataclass

from .asr_sim import DEL, INS
from .corpus import tokens_in_range
from .errors import (AnswerUnalignable, DegenerateInterval, EmptyRecords, EmptyReferences,
                     IndexOutOfRange)
from .text import normalize_answer

__all__ = [
    "TimeInterval", "MetricRecord", "MetricReport", "normalize_answer", "exact_match", "f1",
    "aos", "ground_truth_interval", "predicted_interval", "aggregate", "answer_ref_span",
    "is_alignable",
]


@dataclass(frozen=True)
class TimeInterval:
    t_start: float
    t_end: float

    def __post_init__(self):
        if not (math.isfinite(self.t_start) and math.isfinite(self.t_end)) \
                or self.t_end <= self.t_start:
            raise DegenerateInterval(f"interval [{self.t_start}, {self.t_end}] has no length")

    @property
    def length(self):
        return self.t_end - self.t_start


def exact_match(pred, refs):
    if not refs:
        raise EmptyReferences("exact_match needs at least one reference")
    p = normalize_answer(pred)
    return int(any(p == normalize_answer(r) for r in refs))


def _f1_single(pred_toks, ref_toks):
    if not pred_toks or not ref_toks:
        return float(pred_toks == ref_toks)
    common = sum((Counter(pred_toks) & Counter(ref_toks)).values())
    if common == 0:
        return 0.0
    precision = common / len(pred_toks)
    recall = common / len(ref_toks)
    return 2 * precision * recall / (precision + recall)


def f1(pred, refs):
    """Token-multiset F1, maximised over references."""
    if not refs:
        raise EmptyReferences("f1 needs at least one reference")
    p = normalize_answer(pred)
    return max(_f1_single(p, normalize_answer(r)) for r in refs)


def aos(x, y):
    """Duration of X∩Y over duration of X∪Y; disjoint unions sum both lengths."""
    for iv in (x, y):
        if iv.t_end <= iv.t_start:
            raise DegenerateInterval(f"interval [{iv.t_start}, {iv.t_end}] has no length")
    overlap = max(0.0, min(x.t_end, y.t_end) - max(x.t_start, y.t_start))
    union = (x.t_end - x.t_start) + (y.t_end - y.t_start) - overlap
    return overlap / union


def answer_ref_span(answer, spoken):
    """Reference-word indices (first, last) covered by an answer's characters, or None."""
    hit = tokens_in_range(spoken.ref_tokens, answer.char_start, answer.char_end)
    return (hit[0], hit[-1]) if hit else None


def _aligned_hyp_indices(span, spoken):
    first, last = span
    return [op.hyp_index for op in spoken.alignment
            if op.kind not in (DEL, INS) and first <= op.ref_index <= last]


def is_alignable(span, spoken):
    return bool(_aligned_hyp_indices(span, spoken))


def ground_truth_interval(answer_span, spoken):
    """Time interval of hypothesis words aligned (match or sub) to the answer's ref words."""
    hyp_idx = _aligned_hyp_indices(answer_span, spoken)
    if not hyp_idx:
        raise AnswerUnalignable(
            f"every reference word {answer_span} of {spoken.doc_id} was deleted")
    words = spoken.hyp_words
    return TimeInterval(words[min(hyp_idx)].t_start, words[max(hyp_idx)].t_end)


def predicted_interval(span, spoken):
    i, j = span
    if not 0 <= i <= j < len(spoken.hyp_words):
        raise IndexOutOfRange(f"span {span} outside 0..{len(spoken.hyp_words) - 1}")
    return TimeInterval(spoken.hyp_words[i].t_start, spoken.hyp_words[j].t_end)


@dataclass(frozen=True)
class MetricRecord:
    id: str
    em: int
    f1: float
    aos: float
    prediction: str = ""
    pred_interval: tuple | None = None


@dataclass(frozen=True)
class MetricReport:
    records: tuple
    em: float
    f1: float
    aos: float
    wer: float | None = None
    skipped: int = 0

    def summary(self):
        return {"EM": self.em, "F1": self.f1, "AOS": self.aos, "WER": self.wer,
                "n": len(self.records), "skipped": self.skipped}

    def to_json(self):
        return {
            "summary": self.summary(),
            "records": [{"id": r.id, "em": r.em, "f1": r.f1, "aos": r.aos,
                         "prediction": r.prediction,
                         "pred_interval": list(r.pred_interval) if r.pred_interval else None}
                        for r in self.records],
        }

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["id", "em", "f1", "aos"])
        for r in self.records:
            w.writerow([r.id, r.em, f"{r.f1:.6f}", f"{r.aos:.6f}"])
        w.writerow(["MEAN", f"{self.em:.2f}", f"{self.f1:.2f}", f"{self.aos:.4f}"])
        return buf.getvalue()

    def write(self, stem):
        with open(f"{stem}.json", "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh, indent=1)
            fh.write("\n")
        with open(f"{stem}.csv", "w", encoding="utf-8", newline="") as fh:
            fh.write(self.to_csv())


def aggregate(records, wer=None, skipped=0):
    """Mean EM and F1 as percentages, mean AOS as a fraction, folded in input order."""
    records = tuple(records)
    if not records:
        raise EmptyRecords("cannot aggregate zero records")
    n = len(records)
    em = 100.0 * math.fsum(float(r.em) for r in records) / n
    f = 100.0 * math.fsum(float(r.f1) for r in records) / n
    a = math.fsum(float(r.aos) for r in records) / n
    return MetricReport(records, em, f, a, wer, skipped)
