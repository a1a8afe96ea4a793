"""Synthesize -> filter -> train -> evaluate -> report, over WER tiers and embedding sets."""
from __future__ import annotations

import hashlib
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

from ..asr_sim import (ChannelConfig, SpokenCorpus, calibrate, reference_words,
                       synthesize_corpus)
from ..corpus import QADataset, filter_answerable, tokens_in_range
from ..errors import InvalidExperimentSpec, VocabularyMismatch
from ..metrics import (MetricRecord, aggregate, answer_ref_span, aos, exact_match, f1,
                       ground_truth_interval, is_alignable, predicted_interval)
from ..neural.model import Example, Featurizer, ModelConfig, SpanModel
from ..neural.train import TrainConfig, train
from ..subword import load_lexicon, load_patterns
from ..text import find_subsequence, is_word, normalize_answer, normalized_index
from .fixture import generate_fixture

TIERS = {"clean-ref": 0.0, "wer-22.73": 0.2273, "wer-44.22": 0.4422, "wer-54.82": 0.5482}
EMBEDDINGS = ("word", "char", "phoneme", "syllable")
SPEECH_TRAIN_TIER = "wer-22.73"


def tier_target(tier):
    """Target WER of a tier name: a named tier or ``wer-<percent>``."""
    if tier in TIERS:
        return TIERS[tier]
    if tier.startswith("wer-"):
        try:
            value = float(tier[4:]) / 100.0
        except ValueError:
            value = -1.0
        if 0.0 <= value < 1.0:
            return value
    raise InvalidExperimentSpec(f"unknown tier {tier!r}")


@dataclass(frozen=True)
class ExperimentSpec:
    train_side: str = "text"
    tiers: tuple = ("clean-ref",)
    embeddings: tuple = ("word",)
    dropout: bool = True
    seeds: tuple = (0,)

    def __post_init__(self):
        object.__setattr__(self, "tiers", tuple(self.tiers))
        object.__setattr__(self, "seeds", tuple(self.seeds))
        bad = set(self.embeddings) - set(EMBEDDINGS)
        if bad:
            raise InvalidExperimentSpec(f"unknown embeddings {sorted(bad)}")
        # word embeddings are always on; keep the declared concatenation order
        emb = tuple(e for e in EMBEDDINGS if e in set(self.embeddings) | {"word"})
        object.__setattr__(self, "embeddings", emb)
        if self.train_side not in ("text", "speech"):
            raise InvalidExperimentSpec(f"train_side must be text or speech, not "
                                        f"{self.train_side!r}")
        if not self.seeds:
            raise InvalidExperimentSpec("an experiment needs at least one seed")
        if not self.tiers:
            raise InvalidExperimentSpec("an experiment needs at least one test tier")
        for t in self.tiers:
            tier_target(t)

    @property
    def units(self):
        return tuple(e for e in self.embeddings if e != "word")

    @property
    def label(self):
        name = "+".join(e.upper() for e in self.embeddings)
        if self.dropout:
            name += "+Dropout"
        if self.train_side == "speech":
            name += " (speech-trained)"
        return name

    def to_dict(self):
        return {"train_side": self.train_side, "tiers": list(self.tiers),
                "embeddings": list(self.embeddings), "dropout": self.dropout,
                "seeds": list(self.seeds)}

    @classmethod
    def from_dict(cls, d):
        return cls(d.get("train_side", "text"), tuple(d.get("tiers", ("clean-ref",))),
                   tuple(d.get("embeddings", ("word",))), bool(d.get("dropout", True)),
                   tuple(d.get("seeds", (0,))))


@dataclass
class RunRecord:
    spec: ExperimentSpec
    reports: tuple                 # one {tier: MetricReport} per seed
    predictions: tuple = ()        # one {tier: {qid: predicted text}} per seed
    wall_clock: float = 0.0
    config_hashes: dict = field(default_factory=dict)

    def mean(self, tier, key):
        return math.fsum(getattr(r[tier], key) for r in self.reports) / len(self.reports)


def config_hash(obj):
    return hashlib.sha256(json.dumps(obj, sort_keys=True).encode()).hexdigest()[:16]


def words_of(text_tokens):
    return tuple(t.text.lower() for t in text_tokens if is_word(t.text))


# -- examples -----------------------------------------------------------------

def text_examples(dataset):
    """Training examples on clean reference transcripts (lowercased words)."""
    out = []
    for pair in dataset.pairs:
        doc = dataset.document(pair.doc_id)
        ref = reference_words(doc)
        ans = pair.answers[0]
        idx = tokens_in_range(ref, ans.char_start, ans.char_end)
        if not idx:
            continue
        out.append(Example(pair.id, tuple(t.text.lower() for t in ref),
                           words_of(pair.question_tokens), (idx[0], idx[-1])))
    return out


def locate_in_hypothesis(answer, spoken):
    """Hypothesis span holding the normalized answer, preferring its aligned occurrence."""
    needle = normalize_answer(answer.text)
    if not needle:
        return None
    norm, positions = normalized_index(list(spoken.hyp_texts))
    hits = find_subsequence(norm, needle)
    if not hits:
        return None
    spans = [(positions[h], positions[h + len(needle) - 1]) for h in hits]
    ref_span = answer_ref_span(answer, spoken)
    if ref_span is not None and is_alignable(ref_span, spoken):
        gt = ground_truth_interval(ref_span, spoken)
        words = spoken.hyp_words
        for i, j in spans:
            if words[i].t_start < gt.t_end and gt.t_start < words[j].t_end:
                return (i, j)
    return spans[0]


def speech_examples(dataset, spoken):
    """Training examples on ASR transcripts; pairs whose answer vanished are dropped."""
    out = []
    for pair in dataset.pairs:
        sd = spoken[pair.doc_id]
        span = locate_in_hypothesis(pair.answers[0], sd)
        if span is None:
            continue
        out.append(Example(pair.id, tuple(sd.hyp_texts), words_of(pair.question_tokens), span))
    return out


def eval_examples(dataset, spoken):
    return [Example(p.id, tuple(spoken[p.doc_id].hyp_texts), words_of(p.question_tokens))
            for p in dataset.pairs]


# -- evaluation ---------------------------------------------------------------

def gold_span_oracle(dataset, spoken):
    """Predictor returning the hypothesis words aligned to the gold answer."""
    pairs = {p.id: p for p in dataset.pairs}

    def predict(examples):
        out = []
        for ex in examples:
            p = pairs[ex.id]
            sd = spoken[p.doc_id]
            lo, hi = first_alignable_span(p, sd)
            hyp = [op.hyp_index for op in sd.alignment
                   if op.hyp_index is not None and op.ref_index is not None
                   and lo <= op.ref_index <= hi]
            out.append((min(hyp), max(hyp)))
        return out
    return predict


def model_predictor(model, batch_size=64):
    return lambda examples: model.predict(examples, batch_size)


def check_vocabulary(inventory, spoken):
    """Checkpoint and corpus must agree on the phoneme inventory when both declare one."""
    if inventory and spoken.inventory and tuple(inventory) != tuple(spoken.inventory):
        raise VocabularyMismatch("checkpoint phoneme inventory differs from the corpus")


def first_alignable_span(pair, spoken):
    """Reference span of the first answer that survives alignment, or None."""
    for answer in pair.answers:
        span = answer_ref_span(answer, spoken)
        if span is not None and is_alignable(span, spoken):
            return span
    return None


def evaluate(predictor, dataset, spoken: SpokenCorpus, wer=None):
    """Score every pair; pairs without an alignable gold answer are skipped and counted.

    EM/F1 take the max over all references; AOS uses the first alignable one.
    """
    kept, skipped = [], 0
    for p in dataset.pairs:
        sd = spoken.get(p.doc_id)
        span = first_alignable_span(p, sd) if sd is not None else None
        if span is None:
            skipped += 1
            continue
        kept.append((p, span))
    examples = eval_examples(dataset.with_pairs([p for p, _ in kept]), spoken)
    spans = predictor(examples) if examples else []
    records = []
    for (p, gold), (i, j) in zip(kept, spans):
        sd = spoken[p.doc_id]
        text = " ".join(sd.hyp_texts[i:j + 1])
        refs = [a.text for a in p.answers]
        gt = ground_truth_interval(gold, sd)
        pi = predicted_interval((i, j), sd)
        records.append(MetricRecord(p.id, exact_match(text, refs), f1(text, refs), aos(pi, gt),
                                    text, (pi.t_start, pi.t_end)))
    return aggregate(records, wer if wer is not None else spoken.corpus_wer, skipped)


# -- workbench: fixture, tiers and cached artifacts ----------------------------

@dataclass
class ModelDefaults:
    word_dim: int = 100
    hidden: int = 32
    lr: float = 0.1
    epochs: int = 12
    batch_size: int = 32
    dropout: float = 0.1


class Workbench:
    """Holds the datasets and lazily built tier artifacts shared by every run."""

    def __init__(self, train_ds=None, test_ds=None, lexicon=None, patterns=None,
                 channel_seed=0, defaults=None):
        if train_ds is None or test_ds is None:
            train_ds, test_ds = generate_fixture()
        self.train_ds, self.test_ds = train_ds, test_ds
        self.lexicon = lexicon if lexicon is not None else load_lexicon()
        self.patterns = patterns if patterns is not None else load_patterns()
        self.channel_seed = channel_seed
        self.defaults = defaults or ModelDefaults()
        self.full = QADataset(tuple(train_ds.documents) + tuple(test_ds.documents),
                              tuple(train_ds.pairs) + tuple(test_ds.pairs), "test")
        self._channels, self._spoken, self._tests, self._train = {}, {}, {}, {}

    def channel(self, tier):
        if tier not in self._channels:
            refs = [[t.text.lower() for t in reference_words(d)] for d in self.full.documents]
            template = ChannelConfig(0, 0, 0, 0, seed=self.channel_seed)
            self._channels[tier] = calibrate(tier_target(tier), refs, template, self.lexicon)
        return self._channels[tier]

    def spoken(self, tier):
        """Transcripts of every fixture document (train and test) at ``tier``."""
        if tier not in self._spoken:
            self._spoken[tier] = synthesize_corpus(self.full, self.channel(tier), self.lexicon,
                                                   tier)
        return self._spoken[tier]

    def test_set(self, tier):
        """Test pairs retained at ``tier``; clean-ref keeps those retained at wer-22.73."""
        if tier not in self._tests:
            if tier_target(tier) == 0.0:
                ref_ids = {p.id for p in self.test_set(SPEECH_TRAIN_TIER).pairs}
                kept = self.test_ds.with_pairs([p for p in self.test_ds.pairs
                                                if p.id in ref_ids])
            else:
                kept, _ = filter_answerable(self.test_ds, self.spoken(tier).documents)
            self._tests[tier] = kept
        return self._tests[tier]

    def training_examples(self, side):
        if side not in self._train:
            if side == "text":
                self._train[side] = text_examples(self.train_ds)
            else:
                self._train[side] = speech_examples(self.train_ds,
                                                    self.spoken(SPEECH_TRAIN_TIER))
        return self._train[side]

    def build_model(self, spec, seed):
        examples = self.training_examples(spec.train_side)
        fz = Featurizer.build([e.doc_words + e.question_words for e in examples],
                              self.lexicon, self.patterns)
        d = self.defaults
        cfg = ModelConfig(d.word_dim, d.hidden, spec.units)
        return SpanModel(cfg, fz, seed=seed), examples

    def train_config(self, spec, seed):
        d = self.defaults
        return TrainConfig(d.lr, d.epochs, d.batch_size, d.dropout if spec.dropout else 0.0,
                           seed)

    def prepare(self, tiers):
        for t in tiers:
            self.test_set(t)


def _run_seed(bench, spec, seed):
    model, examples = bench.build_model(spec, seed)
    train(model, examples, bench.train_config(spec, seed))
    reports, preds = {}, {}
    for tier in spec.tiers:
        spoken = bench.spoken(tier)
        test = bench.test_set(tier)
        report = evaluate(model_predictor(model), test, spoken)
        reports[tier] = report
        preds[tier] = {r.id: r.prediction for r in report.records}
    return reports, preds


_WORKER_BENCH = None


def _worker(args):
    spec, seed = args
    return _run_seed(_WORKER_BENCH, spec, seed)


def run_experiment(spec: ExperimentSpec, bench: Workbench, jobs=1):
    """Train once per seed and evaluate on every requested tier."""
    global _WORKER_BENCH
    t0 = time.perf_counter()
    bench.prepare(spec.tiers)
    if spec.train_side == "speech":
        bench.training_examples("speech")
    if jobs > 1 and len(spec.seeds) > 1:
        _WORKER_BENCH = bench
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_worker, [(spec, s) for s in spec.seeds]))
    else:
        results = [_run_seed(bench, spec, s) for s in spec.seeds]
    hashes = {"spec": config_hash(spec.to_dict()),
              "train": config_hash(bench.train_config(spec, 0).to_dict()),
              "channels": config_hash({t: bench.channel(t).to_dict() for t in spec.tiers})}
    return RunRecord(spec, tuple(r[0] for r in results), tuple(r[1] for r in results),
                     time.perf_counter() - t0, hashes)


# -- reports --------------------------------------------------------------------

def comparison_rows(records, tiers):
    rows = []
    for rec in records:
        row = {"model": rec.spec.label}
        for t in tiers:
            if t in rec.spec.tiers:
                row[t] = {k: rec.mean(t, k) for k in ("em", "f1", "aos")}
        rows.append(row)
    return rows


def _fmt(v, digits):
    return f"{v:.{digits}f}"


def qualitative_example(records, bench, tier):
    """One test question with its document, transcript, gold answer and each row's prediction."""
    test = bench.test_set(tier)
    if not test.pairs:
        return None
    pair = test.pairs[0]
    doc = test.document(pair.doc_id)
    sd = bench.spoken(tier)[pair.doc_id]
    preds = []
    for rec in records:
        if tier in rec.spec.tiers:
            preds.append((rec.spec.label, rec.predictions[0][tier].get(pair.id, "")))
    return {"tier": tier, "id": pair.id, "document": doc.text,
            "transcript": " ".join(sd.hyp_texts), "question": pair.question,
            "gold": pair.answers[0].text, "predictions": preds}


def render_report(records, bench):
    tiers = []
    for rec in records:
        for t in rec.spec.tiers:
            if t not in tiers:
                tiers.append(t)
    rows = comparison_rows(records, tiers)
    wers = {t: bench.spoken(t).corpus_wer for t in tiers}
    counts = {t: len(bench.test_set(t).pairs) for t in tiers}
    lines = ["# Experiment report", "",
             "Mean over seeds. EM and F1 are percentages, AOS is a fraction.", ""]
    head = "| Model |" + "".join(f" {t} EM | {t} F1 | {t} AOS |" for t in tiers)
    lines += [head, "|---|" + "---|---|---|" * len(tiers)]
    for row in rows:
        cells = []
        for t in tiers:
            m = row.get(t)
            cells += ([_fmt(m["em"], 2), _fmt(m["f1"], 2), _fmt(m["aos"], 4)] if m
                      else ["-", "-", "-"])
        lines.append(f"| {row['model']} | " + " | ".join(cells) + " |")
    lines += ["", "| Tier | corpus WER | questions |", "|---|---|---|"]
    for t in tiers:
        lines.append(f"| {t} | {_fmt(wers[t], 4)} | {counts[t]} |")
    noisy = [t for t in tiers if tier_target(t) > 0] or tiers
    q = qualitative_example(records, bench, noisy[0])
    if q:
        lines += ["", f"## Example prediction ({q['tier']}, {q['id']})", "",
                  f"Document: {q['document']}", "", f"ASR transcript: {q['transcript']}", "",
                  f"Question: {q['question']}", "", f"Ground truth: {q['gold']}", ""]
        for label, pred in q["predictions"]:
            lines.append(f"- {label}: {pred}")
    md = "\n".join(lines) + "\n"

    csv_lines = ["model,tier,em,f1,aos"]
    for row in rows:
        for t in tiers:
            if t in row:
                m = row[t]
                csv_lines.append(f"\"{row['model']}\",{t},{_fmt(m['em'], 4)},"
                                 f"{_fmt(m['f1'], 4)},{_fmt(m['aos'], 6)}")
    csv = "\n".join(csv_lines) + "\n"

    data = {"tiers": {t: {"corpus_wer": round(wers[t], 6), "questions": counts[t]}
                      for t in tiers},
            "runs": [{"spec": rec.spec.to_dict(), "label": rec.spec.label,
                      "per_seed": [{t: {k: round(v, 6) for k, v in r[t].summary().items()
                                        if isinstance(v, float)} for t in rec.spec.tiers}
                                   for r in rec.reports],
                      "mean": {t: {k: round(rec.mean(t, k), 6) for k in ("em", "f1", "aos")}
                               for t in rec.spec.tiers}}
                     for rec in records],
            "example": q}
    return md, csv, json.dumps(data, indent=1, sort_keys=True) + "\n"


def write_report(records, bench, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    md, csv, js = render_report(records, bench)
    paths = {}
    for name, body in (("report.md", md), ("report.csv", csv), ("report.json", js)):
        path = os.path.join(out_dir, name)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(body)
        paths[name] = path
    run = [{"spec": r.spec.to_dict(), "wall_clock_s": round(r.wall_clock, 3),
            "config_hashes": r.config_hashes} for r in records]
    with open(os.path.join(out_dir, "run_record.json"), "w", encoding="utf-8") as fh:
        json.dump(run, fh, indent=1)
        fh.write("\n")
    return paths


def cmd_experiment(specs, bench=None, out_dir=None, jobs=1):
    """Run every spec (one table row each); optionally write the report files."""
    if isinstance(specs, ExperimentSpec):
        specs = [specs]
    bench = bench or Workbench()
    records = [run_experiment(s, bench, jobs) for s in specs]
    if out_dir is not None:
        write_report(records, bench, out_dir)
    return records


# -- single-step commands -----------------------------------------------------

def merge_datasets(datasets):
    docs, pairs, seen = [], [], set()
    for ds in datasets:
        for d in ds.documents:
            if d.id not in seen:
                seen.add(d.id)
                docs.append(d)
        pairs.extend(ds.pairs)
    return QADataset(tuple(docs), tuple(pairs), datasets[0].split)


def resolve_channel(dataset, lexicon, tier=None, target_wer=None, seed=0, channel=None):
    """Explicit channel, or one calibrated on ``dataset``'s reference words."""
    if channel is not None:
        return channel
    target = target_wer if target_wer is not None else tier_target(tier or "clean-ref")
    refs = [[t.text.lower() for t in reference_words(d)] for d in dataset.documents]
    return calibrate(target, refs, ChannelConfig(0, 0, 0, 0, seed=seed), lexicon)


def cmd_synthesize(dataset, lexicon, tier=None, target_wer=None, seed=0, channel=None,
                   out=None):
    """Spoken corpus for every document of ``dataset``; written to ``out`` when given."""
    from ..asr_sim import save_spoken_corpus
    cfg = resolve_channel(dataset, lexicon, tier, target_wer, seed, channel)
    name = tier or (f"wer-{100 * cfg.target_wer:g}" if channel is None else "custom")
    spoken = synthesize_corpus(dataset, cfg, lexicon, name)
    if out is not None:
        save_spoken_corpus(spoken, out)
    return spoken


def cmd_train(dataset, lexicon, patterns, embeddings=("word",), dropout=0.1, seed=0,
              spoken=None, defaults=None, out=None, log=None):
    """Train on clean text, or on ``spoken`` transcripts when given."""
    from ..neural.checkpoint import save_checkpoint
    d = defaults or ModelDefaults()
    examples = text_examples(dataset) if spoken is None else speech_examples(dataset, spoken)
    spec = ExperimentSpec("text" if spoken is None else "speech", ("clean-ref",), embeddings,
                          dropout > 0, (seed,))
    fz = Featurizer.build([e.doc_words + e.question_words for e in examples], lexicon, patterns)
    model = SpanModel(ModelConfig(d.word_dim, d.hidden, spec.units), fz, seed=seed)
    cfg = TrainConfig(d.lr, d.epochs, d.batch_size, dropout, seed)
    losses = train(model, examples, cfg, log=log)
    if out is not None:
        save_checkpoint(out, model, {"train": cfg.to_dict(), "losses": losses,
                                     "spec": spec.to_dict()})
    return model, losses


def cmd_evaluate(checkpoint, spoken, dataset, lexicon=None, patterns=None, out=None,
                 oracle=False):
    """Score a checkpoint (or the gold-span oracle) on a spoken corpus."""
    if oracle:
        predictor = gold_span_oracle(dataset, spoken)
    else:
        from ..neural.checkpoint import load_checkpoint, read_checkpoint
        header, _ = read_checkpoint(checkpoint)
        check_vocabulary(header.get("inventory"), spoken)
        lexicon = lexicon if lexicon is not None else load_lexicon()
        if header.get("inventory") and tuple(header["inventory"]) != lexicon.inventory.phonemes:
            raise VocabularyMismatch("checkpoint phoneme inventory differs from the lexicon")
        model, _ = load_checkpoint(checkpoint, lexicon,
                                   patterns if patterns is not None else load_patterns())
        predictor = model_predictor(model)
    report = evaluate(predictor, dataset, spoken)
    if out is not None:
        report.write(out)
    return report
