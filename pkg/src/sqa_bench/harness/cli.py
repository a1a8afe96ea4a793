"""``sqa-bench`` command line: one subcommand per pipeline stage."""
from __future__ import annotations

import argparse
import json
import os
import sys

from ..asr_sim import ChannelConfig, read_spoken_corpus
from ..corpus import filter_answerable, load_dataset, save_canonical
from ..errors import InvalidExperimentSpec, SQAError
from ..subword import load_lexicon, load_patterns
from . import pipeline as P
from .fixture import generate_fixture


def _datasets(paths):
    return P.merge_datasets([load_dataset(p) for p in paths])


def _embeddings(text):
    return tuple(e.strip() for e in text.split(",") if e.strip())


def _defaults(args):
    d = P.ModelDefaults()
    for name in ("epochs", "lr", "batch_size", "word_dim", "hidden"):
        value = getattr(args, name, None)
        if value is not None:
            setattr(d, name, value)
    d.dropout = args.dropout
    return d


def _emit(obj):
    json.dump(obj, sys.stdout, indent=1, sort_keys=True)
    sys.stdout.write("\n")


def cmd_make_fixture(args):
    os.makedirs(args.out, exist_ok=True)
    train, test = generate_fixture(args.docs, args.seed)
    save_canonical(train, os.path.join(args.out, "train.json"))
    save_canonical(test, os.path.join(args.out, "test.json"))
    _emit({"train_pairs": len(train.pairs), "test_pairs": len(test.pairs),
           "documents": len(train.documents) + len(test.documents)})


def cmd_calibrate(args):
    ds = _datasets(args.dataset)
    cfg = P.resolve_channel(ds, load_lexicon(args.lexicon), args.tier, args.target_wer,
                            args.seed)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(cfg.to_dict(), fh, indent=1)
            fh.write("\n")
    _emit(cfg.to_dict())


def cmd_synthesize(args):
    ds = _datasets(args.dataset)
    channel = None
    if args.channel:
        with open(args.channel, encoding="utf-8") as fh:
            channel = ChannelConfig.from_dict(json.load(fh))
    spoken = P.cmd_synthesize(ds, load_lexicon(args.lexicon), args.tier, args.target_wer,
                              args.seed, channel, args.out)
    _emit({"tier": spoken.tier, "corpus_wer": round(spoken.corpus_wer, 6),
           "documents": len(spoken.documents), "out": args.out})


def cmd_filter(args):
    ds = _datasets(args.dataset)
    spoken = read_spoken_corpus(args.transcripts)
    kept, removed = filter_answerable(ds, spoken.documents)
    if args.out:
        save_canonical(kept, args.out)
    _emit({"kept": len(kept.pairs), "removed": removed, "out": args.out})


def cmd_train(args):
    ds = _datasets(args.dataset)
    spoken = read_spoken_corpus(args.transcripts) if args.transcripts else None
    log = (lambda m: print(m, file=sys.stderr)) if args.verbose else None
    _, losses = P.cmd_train(ds, load_lexicon(args.lexicon), load_patterns(args.patterns),
                            _embeddings(args.embeddings), args.dropout, args.seed, spoken,
                            _defaults(args), args.out, log)
    _emit({"epochs": len(losses), "final_loss": round(losses[-1], 6) if losses else None,
           "out": args.out})


def cmd_evaluate(args):
    ds = _datasets(args.dataset)
    spoken = read_spoken_corpus(args.transcripts)
    report = P.cmd_evaluate(args.checkpoint, spoken, ds, load_lexicon(args.lexicon),
                            load_patterns(args.patterns), args.out, args.oracle)
    _emit(report.summary())


def _specs_from_args(args):
    if args.spec:
        with open(args.spec, encoding="utf-8") as fh:
            raw = json.load(fh)
        return [P.ExperimentSpec.from_dict(r) for r in (raw if isinstance(raw, list) else [raw])]
    tiers = tuple(t.strip() for t in args.tiers.split(",") if t.strip())
    seeds = tuple(int(s) for s in args.seeds.split(","))
    return [P.ExperimentSpec(args.train_side, tiers, _embeddings(row), args.dropout > 0, seeds)
            for row in args.embeddings.split(";")]


def cmd_experiment(args):
    specs = _specs_from_args(args)
    if args.dataset:
        if len(args.dataset) != 2:
            raise InvalidExperimentSpec("experiment --dataset takes two files: train then test")
        train_ds, test_ds = load_dataset(args.dataset[0]), load_dataset(args.dataset[1])
    else:
        train_ds, test_ds = generate_fixture()
    bench = P.Workbench(train_ds, test_ds, load_lexicon(args.lexicon),
                        load_patterns(args.patterns), args.seed, _defaults(args))
    records = P.cmd_experiment(specs, bench, args.out, args.jobs)
    _emit({"runs": [{"label": r.spec.label,
                     "mean": {t: {k: round(r.mean(t, k), 4) for k in ("em", "f1", "aos")}
                              for t in r.spec.tiers}} for r in records],
           "out": args.out})


def cmd_report(args):
    """Table of EM/F1/AOS summaries from ``evaluate`` JSON outputs."""
    lines = ["| Run | EM | F1 | AOS | WER | n | skipped |", "|---|---|---|---|---|---|---|"]
    for path in args.inputs:
        with open(path, encoding="utf-8") as fh:
            s = json.load(fh)["summary"]
        wer = "-" if s.get("WER") is None else f"{s['WER']:.4f}"
        lines.append(f"| {os.path.basename(path)} | {s['EM']:.2f} | {s['F1']:.2f} | "
                     f"{s['AOS']:.4f} | {wer} | {s['n']} | {s['skipped']} |")
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    sys.stdout.write(text)


def _common(p, dataset=True, multi=True):
    if dataset:
        p.add_argument("--dataset", action="append", required=multi,
                       help="dataset file (canonical or SQuAD JSON); repeat to merge")
    p.add_argument("--lexicon", help="pronunciation lexicon (default: bundled)")
    p.add_argument("--patterns", help="hyphenation patterns (default: bundled)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")


def _model_flags(p):
    p.add_argument("--embeddings", default="word", help="e.g. word,phoneme,syllable")
    p.add_argument("--dropout", type=float, default=0.1)
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--word-dim", type=int)
    p.add_argument("--hidden", type=int)


def build_parser():
    ap = argparse.ArgumentParser(prog="sqa-bench", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("make-fixture", help="write the synthetic QA fixture")
    p.add_argument("--docs", type=int, default=400)
    p.add_argument("--seed", type=int, default=2018)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_make_fixture)

    p = sub.add_parser("calibrate", help="fit channel rates to a target WER")
    _common(p)
    p.add_argument("--tier")
    p.add_argument("--target-wer", type=float)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("synthesize", help="produce a spoken corpus")
    _common(p)
    p.add_argument("--tier")
    p.add_argument("--target-wer", type=float)
    p.add_argument("--channel", help="explicit channel config JSON (skips calibration)")
    p.set_defaults(func=cmd_synthesize)

    p = sub.add_parser("filter", help="drop questions whose answer did not survive ASR")
    _common(p)
    p.add_argument("--transcripts", required=True)
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser("train", help="train a span model")
    _common(p)
    _model_flags(p)
    p.add_argument("--transcripts", help="train on these ASR transcripts instead of text")
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="score a checkpoint on a spoken corpus")
    _common(p)
    p.add_argument("--checkpoint")
    p.add_argument("--transcripts", required=True)
    p.add_argument("--oracle", action="store_true", help="use the gold-span oracle")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("experiment", help="train/evaluate grid and comparison table")
    _common(p, multi=False)
    _model_flags(p)
    p.add_argument("--spec", help="JSON spec (or list of specs)")
    p.add_argument("--train-side", default="text", choices=("text", "speech"))
    p.add_argument("--tiers", default="clean-ref,wer-22.73,wer-44.22,wer-54.82")
    p.add_argument("--seeds", default="0")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("report", help="tabulate evaluate outputs")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--out")
    p.set_defaults(func=cmd_report)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.command == "evaluate" and not args.oracle and not args.checkpoint:
        _fail(SQAError("evaluate needs --checkpoint or --oracle"))
        return 2
    try:
        args.func(args)
    except SQAError as exc:
        _fail(exc)
        return 1
    except (OSError, ValueError) as exc:
        _fail(exc)
        return 1
    return 0


def _fail(exc):
    record = exc.to_record() if isinstance(exc, SQAError) else {
        "error": "IOError" if isinstance(exc, OSError) else "InvalidArgument",
        "type": type(exc).__name__, "message": str(exc)}
    print(json.dumps(record), file=sys.stderr)


if __name__ == "__main__":
    sys.exit(main())
