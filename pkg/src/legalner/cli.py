"""Command-line front end: convert, stats, train, evaluate, predict.

Exit codes: 0 success, 1 data-validation failure, 2 usage/schema/I-O error,
3 numerical divergence during training.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
import warnings
from collections import Counter
from pathlib import Path

import numpy as np

from .corpus import (
    AnnotationError,
    ConllError,
    CorpusError,
    LabelingError,
    SchemaError,
    TagSet,
    bio_to_spans,
    build_vocab,
    parse_annotations,
    read_conll,
    read_stoplist,
    remove_stopwords,
    sentence_from_conll,
    spans_to_bio,
    tokenize,
    write_conll,
)
from .embeddings import GloveFormatError, build_char_lm, load_pretrained, pretrain_char_lm
from .errors import ConfigurationError, ShapeError, TrainingDiverged
from .evaluation import classification_report, format_report, token_accuracy
from .tagger import build_tagger
from .training import (
    Checkpoint,
    Hyperparameters,
    examples_from_conll,
    train,
)

LOG_FILE = "train_log.jsonl"


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except TrainingDiverged as exc:
        print(f"error: training diverged: {exc}", file=sys.stderr)
        for name, norm in exc.param_norms.items():
            print(f"  |{name}| = {norm:.6g}", file=sys.stderr)
        return 3
    except (AnnotationError, LabelingError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (SchemaError, ConllError, ConfigurationError, GloveFormatError,
            CorpusError, ShapeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="legalner",
        description="Bi-LSTM-CRF named-entity tagger for legal text",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("convert", help="annotation JSON to CoNLL")
    p.add_argument("input", help="annotation JSON file")
    p.add_argument("output", help="CoNLL file to write")
    p.add_argument("--mode", choices=("strict", "lenient"), default="strict",
                   help="how to treat annotations off token boundaries")
    p.add_argument("--stoplist", help="drop these (lowercase) tokens outside spans")
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("stats", help="per-class span counts")
    p.add_argument("inputs", nargs="+", help="annotation JSON or CoNLL files")
    p.add_argument("--json", action="store_true", help="machine-readable output")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("train", help="train a tagger")
    p.add_argument("config", help="hyperparameter JSON file")
    p.add_argument("train_file", help="training CoNLL file")
    p.add_argument("dev_file", help="validation CoNLL file")
    p.add_argument("out_dir", help="checkpoint directory to create")
    p.add_argument("--glove", help="pretrained word vectors (GloVe text format)")
    p.add_argument("--merge-dev", action="store_true",
                   help="fold the dev set into training (no early stopping)")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--min-freq", type=int, default=1,
                   help="vocabulary frequency threshold")
    p.add_argument("--case-fold", action="store_true",
                   help="lowercase tokens for the vocabulary")
    p.add_argument("--char-lm-hidden", type=int, default=0,
                   help="contextual char-LM hidden size (0 disables it)")
    p.add_argument("--char-lm-dim", type=int, default=16,
                   help="character embedding width")
    p.add_argument("--char-lm-epochs", type=int, default=3,
                   help="char-LM pre-training epochs")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="score a checkpoint on gold CoNLL data")
    p.add_argument("checkpoint", help="checkpoint directory")
    p.add_argument("test_file", help="gold CoNLL file")
    p.add_argument("--json", action="store_true", help="machine-readable output")
    p.add_argument("--relaxed", action="store_true",
                   help="credit overlapping same-label spans")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("predict", help="annotate raw text or JSON documents")
    p.add_argument("checkpoint", help="checkpoint directory")
    p.add_argument("input", help="plain-text file or annotation JSON")
    p.add_argument("--output", help="write JSON here instead of stdout")
    p.add_argument("--no-constrain", action="store_true",
                   help="decode without the BIO transition mask")
    p.set_defaults(func=cmd_predict)
    return parser


def cmd_convert(args) -> int:
    text = Path(args.input).read_text(encoding="utf-8")
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        sentences = parse_annotations(text, mode=args.mode)
    if args.stoplist:
        stops = read_stoplist(args.stoplist)
        sentences = [remove_stopwords(s, stops) for s in sentences]
    tagset = TagSet.default()
    rows = []
    skipped_empty = 0
    for s in sentences:
        if not s.tokens:
            skipped_empty += 1
            continue
        tag_ids = spans_to_bio(s, tagset)
        rows.append((s.token_texts, [tagset.tags[t] for t in tag_ids]))
    write_conll(rows, args.output)
    print(f"sentences:  {len(rows)}")
    print(f"tokens:     {sum(len(t) for t, _ in rows)}")
    print(f"spans:      {sum(len(s.spans) for s in sentences)}")
    print(f"violations: {len(caught)} (annotations snapped to token boundaries)")
    if skipped_empty:
        print(f"skipped empty sentences: {skipped_empty}")
    return 0


def _count_spans(path: str) -> Counter:
    counts: Counter = Counter()
    if path.endswith(".json"):
        text = Path(path).read_text(encoding="utf-8")
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            sentences = parse_annotations(text, mode="lenient")
        for s in sentences:
            counts.update(span.label for span in s.spans)
    else:
        tagset = TagSet.default()
        for tokens, tags in read_conll(path, tagset):
            tag_ids = [tagset.tag_id(t) for t in tags]
            counts.update(s.label for s in bio_to_spans(tag_ids, tagset))
    return counts


def cmd_stats(args) -> int:
    per_file = [(path, _count_spans(path)) for path in args.inputs]
    labels = list(TagSet.default().classes)
    extras = sorted(
        {label for _, c in per_file for label in c} - set(labels)
    )
    labels += extras
    if args.json:
        payload = {
            "splits": [
                {"path": path, "counts": {lb: counts.get(lb, 0) for lb in labels},
                 "total": sum(counts.values())}
                for path, counts in per_file
            ]
        }
        print(json.dumps(payload, indent=2))
        return 0
    width = max(12, max((len(lb) for lb in labels), default=12))
    header = f"{'Class':<{width}}" + "".join(
        f" {Path(p).name:>12}" for p, _ in per_file
    )
    print(header)
    print("-" * len(header))
    for lb in labels:
        print(f"{lb:<{width}}" + "".join(
            f" {counts.get(lb, 0):>12d}" for _, counts in per_file
        ))
    print("-" * len(header))
    print(f"{'TOTAL':<{width}}" + "".join(
        f" {sum(counts.values()):>12d}" for _, counts in per_file
    ))
    return 0


def cmd_train(args) -> int:
    hp = Hyperparameters.from_json_file(args.config)
    if args.seed is not None:
        hp.seed = args.seed
    tagset = TagSet.default()
    train_rows = read_conll(args.train_file, tagset)
    dev_rows = read_conll(args.dev_file, tagset)
    if not train_rows:
        raise ConfigurationError(f"{args.train_file}: no training sentences")
    if args.merge_dev:
        train_rows += dev_rows
        dev_rows = []

    rng = np.random.default_rng(hp.seed)
    train_sentences = [sentence_from_conll(t, g, tagset) for t, g in train_rows]
    vocab = build_vocab(train_sentences, min_freq=args.min_freq,
                        case_folding=args.case_fold)

    word_table = None
    if args.glove:
        word_table, coverage = load_pretrained(args.glove, vocab,
                                               hp.glove_dim, rng)
        print(f"pretrained vectors cover {coverage:.1%} of the vocabulary")

    char_lm = None
    if args.char_lm_hidden > 0:
        lm_text = "\n".join(" ".join(t) for t, _ in train_rows)
        char_lm = build_char_lm(lm_text, args.char_lm_dim,
                                args.char_lm_hidden, rng)
        lm_history = pretrain_char_lm(char_lm, lm_text,
                                      epochs=args.char_lm_epochs,
                                      lr=0.1, rng=rng)
        print(f"char LM pre-training loss: {lm_history[0]:.4f} -> {lm_history[-1]:.4f}")

    model = build_tagger(tagset, vocab, hp.glove_dim, hp.lstm_hidden, rng,
                         word_table=word_table, char_lm=char_lm,
                         word_dropout=hp.word_dropout)

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    log_path = out_dir / LOG_FILE
    last_time = time.monotonic()

    def log_entry(entry: dict) -> None:
        nonlocal last_time
        now = time.monotonic()
        entry["seconds"] = round(now - last_time, 3)
        last_time = now
        with open(log_path, "a", encoding="utf-8") as f:
            f.write(json.dumps(entry) + "\n")
        dev = ("-" if entry["dev_micro_f1"] is None
               else f"{entry['dev_micro_f1']:.4f}")
        print(f"epoch {entry['epoch']:3d}  loss {entry['train_loss']:.4f}  "
              f"dev-F1 {dev}  lr {entry['lr']:.4g}")

    log_path.write_text("", encoding="utf-8")
    checkpoint = train(
        hp,
        examples_from_conll(train_rows, tagset),
        examples_from_conll(dev_rows, tagset),
        model,
        rng=rng,
        log_fn=log_entry,
    )
    checkpoint.save(out_dir)
    best = max(
        (h["dev_micro_f1"] for h in checkpoint.history
         if h["dev_micro_f1"] is not None),
        default=None,
    )
    if best is not None:
        print(f"best dev micro-F1: {best:.4f}")
    print(f"checkpoint written to {out_dir}")
    return 0


def cmd_evaluate(args) -> int:
    checkpoint = Checkpoint.load(args.checkpoint)
    model = checkpoint.model
    rows = read_conll(args.test_file, model.tagset)
    examples = examples_from_conll(rows, model.tagset)
    pairs = []
    gold_seqs, pred_seqs = [], []
    for ex in examples:
        pred_ids = model.decode(list(ex.tokens), constrained=True)
        pairs.append((
            bio_to_spans(ex.tag_ids, model.tagset, strict=False),
            bio_to_spans(pred_ids, model.tagset, strict=False),
        ))
        gold_seqs.append(list(ex.tag_ids))
        pred_seqs.append(pred_ids)
    report = classification_report(pairs, model.tagset, relaxed=args.relaxed)
    accuracy = token_accuracy(gold_seqs, pred_seqs) if examples else 0.0
    if args.json:
        payload = report.to_dict()
        payload["token_accuracy"] = accuracy
        print(json.dumps(payload, indent=2))
    else:
        print(format_report(report))
        print(f"{'Accuracy':<14} {accuracy:>9.4f}")
    return 0


def cmd_predict(args) -> int:
    checkpoint = Checkpoint.load(args.checkpoint)
    model = checkpoint.model
    constrained = not args.no_constrain
    docs = _load_predict_docs(args.input)
    out_docs = []
    for doc_id, text, section in docs:
        tokens = tokenize(text)
        spans = model.predict_spans([t.text for t in tokens],
                                    constrained=constrained)
        out_docs.append({
            "id": doc_id,
            "text": text,
            "meta": {"section": section},
            "annotations": [
                {
                    "start": tokens[s.token_start].char_start,
                    "end": tokens[s.token_end - 1].char_end,
                    "label": s.label,
                }
                for s in spans
            ],
        })
    payload = json.dumps(out_docs, indent=2, ensure_ascii=False)
    if args.output:
        Path(args.output).write_text(payload + "\n", encoding="utf-8")
    else:
        print(payload)
    return 0


def _load_predict_docs(path: str) -> list[tuple[str, str, str]]:
    raw = Path(path).read_text(encoding="utf-8")
    if path.endswith(".json"):
        try:
            docs = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise SchemaError(
                f"malformed JSON at byte offset {exc.pos}: {exc.msg}"
            ) from None
        if not isinstance(docs, list):
            raise SchemaError("prediction input must be a JSON array")
        out = []
        for d, doc in enumerate(docs):
            if not isinstance(doc, dict) or not isinstance(doc.get("text"), str):
                raise SchemaError(f"document {d}: expected an object with 'text'")
            meta = doc.get("meta") or {}
            out.append((
                str(doc.get("id", d)),
                doc["text"],
                meta.get("section", "JUDGEMENT"),
            ))
        return out
    return [(Path(path).stem, raw, "JUDGEMENT")]


if __name__ == "__main__":
    sys.exit(main())
