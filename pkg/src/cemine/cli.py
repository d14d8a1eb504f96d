"""Command line entry point.

One subcommand per pipeline stage plus evaluation, corpus conversion, and
adapter conformance tooling.  Progress and telemetry go to standard error;
data goes only to declared output files (or stdout for `agreement`).

Exit codes: 0 success, 1 usage error, 2 data error, 3 protocol error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import re
import statistics
import sys
from datetime import date
from pathlib import Path

from . import classifier as clf
from . import corpus as corpus_mod
from . import ingest as ingest_mod
from . import lexicon as lexicon_mod
from . import pipeline as pipeline_mod
from . import protocol as protocol_mod
from . import synthetic as synth_mod
from . import tagger as tagger_mod
from . import taxonomy as taxonomy_mod

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_PROTOCOL = 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on bad arguments; the contract reserves
    # 2 for data errors, so route everything through UsageError instead.
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _common_flags() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="FILE",
                        help="JSON pipeline config supplying defaults")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--out", metavar="DIR", default=None,
                        help="output directory (default: config out_dir or ./out)")
    common.add_argument("--format", choices=("csv", "json", "markdown"),
                        default=None)
    common.add_argument("--verbose", action="store_true",
                        help="debug-level logging on stderr")
    return common


def build_parser() -> _Parser:
    common = _common_flags()
    parser = _Parser(prog="cemine",
                     description="Mine driver-assistance complaints for "
                                 "cause/effect structure.")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND",
                                parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("ingest", parents=[common],
                       help="parse a raw complaint flat file into records")
    p.add_argument("--in", dest="input", required=True, metavar="FILE")
    p.add_argument("--delimiter", default="\t",
                   help="field delimiter; the literal word TAB is accepted")
    p.add_argument("--header", action="store_true",
                   help="skip the first row")
    p.add_argument("--date-start", type=date.fromisoformat,
                   metavar="YYYY-MM-DD")
    p.add_argument("--date-end", type=date.fromisoformat,
                   metavar="YYYY-MM-DD")
    p.add_argument("--date-field", default="received_date",
                   choices=("received_date", "incident_date"))
    p.add_argument("--max-error-fraction", type=float, default=0.01)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("filter", parents=[common],
                       help="flag records against the keyword lexicon")
    p.add_argument("--in", dest="input", metavar="FILE",
                   help="records JSONL (default: OUT/records.jsonl)")
    p.add_argument("--lexicon", metavar="FILE",
                   help="keyword lexicon JSONL (default: built-in)")
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser("train-classifier", parents=[common],
                       help="train the narrative classifier")
    p.add_argument("--in", dest="input", required=True, metavar="FILE",
                   help="labeled examples JSONL with text and label fields")
    p.add_argument("--ratio", type=int, default=None,
                   help="negatives kept per positive before training")
    p.add_argument("--folds", type=int, default=0,
                   help="also cross-validate with this many folds")
    p.add_argument("--report", metavar="FILE",
                   help="where to write the fold report JSON")
    p.add_argument("--model", metavar="FILE",
                   help="model output path (default: OUT/classifier.json)")
    p.add_argument("--epochs", type=int, default=clf.DEFAULT_EPOCHS)
    p.add_argument("--lr", type=float, default=clf.DEFAULT_LEARNING_RATE)
    p.add_argument("--l2", type=float, default=clf.DEFAULT_L2)
    p.add_argument("--batch-size", type=int, default=clf.DEFAULT_BATCH_SIZE)
    p.add_argument("--dimension", type=int, default=clf.DEFAULT_DIMENSION)
    p.set_defaults(func=cmd_train_classifier)

    p = sub.add_parser("classify", parents=[common],
                       help="label complaint records adas / non-adas")
    p.add_argument("--in", dest="input", metavar="FILE",
                   help="records JSONL (default: OUT/records.jsonl)")
    p.add_argument("--model", metavar="FILE")
    p.add_argument("--adapter", metavar="CMD_OR_ADDR")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("train-tagger", parents=[common],
                       help="train the cause/effect sequence tagger")
    p.add_argument("--in", dest="input", metavar="FILE",
                   help="annotation file (default: config annotations)")
    p.add_argument("--model", metavar="FILE",
                   help="model output path (default: OUT/tagger.json)")
    p.add_argument("--epochs", type=int, default=tagger_mod.DEFAULT_EPOCHS)
    p.add_argument("--lr", type=float, default=tagger_mod.DEFAULT_LEARNING_RATE)
    p.add_argument("--l2", type=float, default=tagger_mod.DEFAULT_L2)
    p.add_argument("--batch-size", type=int,
                   default=tagger_mod.DEFAULT_BATCH_SIZE)
    p.set_defaults(func=cmd_train_tagger)

    p = sub.add_parser("tag", parents=[common],
                       help="tag record narratives with C/E/O labels")
    p.add_argument("--in", dest="input", metavar="FILE",
                   help="records JSONL (default: OUT/records.jsonl)")
    p.add_argument("--matches", metavar="FILE",
                   help="restrict to records flagged in this matches JSONL")
    p.add_argument("--model", metavar="FILE")
    p.add_argument("--adapter", metavar="CMD_OR_ADDR")
    p.set_defaults(func=cmd_tag)

    p = sub.add_parser("extract", parents=[common],
                       help="decode tagged tokens into cause/effect spans")
    p.add_argument("--tagged", metavar="FILE",
                   help="default: OUT/tagged.jsonl")
    p.add_argument("--matches", metavar="FILE",
                   help="default: OUT/matches.jsonl")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("categorize", parents=[common],
                       help="map spans onto the cause/effect taxonomy")
    p.add_argument("--in", dest="input", metavar="FILE",
                   help="instances JSONL (default: OUT/instances.jsonl)")
    p.add_argument("--category-lexicon", metavar="FILE",
                   help="rule file (default: built-in)")
    p.set_defaults(func=cmd_categorize)

    p = sub.add_parser("report", parents=[common],
                       help="aggregate categories into ranked tables")
    p.add_argument("--in", dest="input", metavar="FILE",
                   help="categorized JSONL (default: OUT/categorized.jsonl)")
    p.add_argument("--denominator", type=int, default=None,
                   help="percentage base (default: instance count)")
    p.add_argument("--top-causes", type=int, default=None)
    p.add_argument("--top-effects", type=int, default=None)
    p.add_argument("--top-pairs", type=int, default=None)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("eval-classifier", parents=[common],
                       help="cross-validate the classifier")
    p.add_argument("--in", dest="input", required=True, metavar="FILE")
    p.add_argument("--ratio", type=int, default=None)
    p.add_argument("--folds", type=int, default=10)
    p.add_argument("--report", metavar="FILE",
                   help="default: OUT/classifier_eval.json")
    p.add_argument("--epochs", type=int, default=clf.DEFAULT_EPOCHS)
    p.add_argument("--lr", type=float, default=clf.DEFAULT_LEARNING_RATE)
    p.add_argument("--l2", type=float, default=clf.DEFAULT_L2)
    p.add_argument("--batch-size", type=int, default=clf.DEFAULT_BATCH_SIZE)
    p.add_argument("--dimension", type=int, default=clf.DEFAULT_DIMENSION)
    p.set_defaults(func=cmd_eval_classifier)

    p = sub.add_parser("eval-tagger", parents=[common],
                       help="cross-validate the tagger or score an adapter")
    p.add_argument("--in", dest="input", metavar="FILE",
                   help="annotation file (default: config annotations)")
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--adapter", metavar="CMD_OR_ADDR",
                   help="score this external tagger instead of training")
    p.add_argument("--report", metavar="FILE",
                   help="default: OUT/tagger_eval.json")
    p.add_argument("--epochs", type=int, default=tagger_mod.DEFAULT_EPOCHS)
    p.add_argument("--lr", type=float, default=tagger_mod.DEFAULT_LEARNING_RATE)
    p.add_argument("--l2", type=float, default=tagger_mod.DEFAULT_L2)
    p.add_argument("--batch-size", type=int,
                   default=tagger_mod.DEFAULT_BATCH_SIZE)
    p.set_defaults(func=cmd_eval_tagger)

    p = sub.add_parser("agreement", parents=[common],
                       help="token-level agreement between annotation files")
    p.add_argument("raters", nargs="+", metavar="FILE")
    p.set_defaults(func=cmd_agreement)

    p = sub.add_parser("convert-dmv", parents=[common],
                       help="disengagement report CSV to annotation skeleton")
    p.add_argument("--in", dest="input", required=True, metavar="FILE")
    p.add_argument("--text-column",
                   default="Description of Facts Causing Disengagement")
    p.add_argument("--id-column", default=None)
    p.add_argument("--out-file", metavar="FILE",
                   help="default: OUT/dmv.tsv")
    p.set_defaults(func=cmd_convert_dmv)

    p = sub.add_parser("convert-semeval", parents=[common],
                       help="relation-classification file to C/E annotations")
    p.add_argument("--in", dest="input", required=True, metavar="FILE")
    p.add_argument("--out-file", metavar="FILE",
                   help="default: OUT/semeval.tsv")
    p.set_defaults(func=cmd_convert_semeval)

    p = sub.add_parser("adapter-check", parents=[common],
                       help="probe an external tagger for protocol conformance")
    p.add_argument("--adapter", required=True, metavar="CMD_OR_ADDR")
    p.add_argument("--classify", action="store_true",
                   help="also require the classify task variant")
    p.set_defaults(func=cmd_adapter_check)

    p = sub.add_parser("run", parents=[common],
                       help="run the full pipeline from a config file")
    p.add_argument("--stages", metavar="A,B,...",
                   help="comma-separated subset of stages to run")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("synth-corpus", parents=[common],
                       help="generate synthetic fixtures")
    p.add_argument("--kind", choices=("template", "labeled"),
                   default="template")
    p.add_argument("-n", type=int, default=100, dest="count")
    p.add_argument("--heldout", action="store_true",
                   help="template kind: draw from the held-out filler pool")
    p.add_argument("--positives", type=int, default=100,
                   help="labeled kind: positive example count")
    p.add_argument("--negatives", type=int, default=100,
                   help="labeled kind: negative example count")
    p.add_argument("--out-file", metavar="FILE",
                   help="default: OUT/synthetic.tsv or OUT/labeled.jsonl")
    p.set_defaults(func=cmd_synth_corpus)

    return parser


# -- shared resolution helpers ------------------------------------------------

def _load_config(args) -> pipeline_mod.PipelineConfig | None:
    if not args.config:
        return None
    return pipeline_mod.PipelineConfig.from_file(args.config)


def _resolve_out(args, config) -> Path:
    if args.out:
        out = Path(args.out)
    elif config is not None:
        out = Path(config.out_dir)
    else:
        out = Path("out")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _resolve_seed(args, config) -> int:
    if args.seed is not None:
        return args.seed
    return config.seed if config is not None else 7


def _resolve_format(args, config) -> str:
    if args.format:
        return args.format
    return config.format if config is not None else "markdown"


def _default_in(explicit, out_dir: Path, name: str) -> Path:
    path = Path(explicit) if explicit else out_dir / name
    if not path.is_file():
        raise IngestFileMissing(path)
    return path


class IngestFileMissing(FileNotFoundError):
    def __init__(self, path):
        super().__init__(f"input not found: {path}")


def _load_lexicon(arg, config):
    if arg:
        return lexicon_mod.read_lexicon_file(arg)
    if config is not None and config.lexicon:
        return lexicon_mod.read_lexicon_file(config.resolve(config.lexicon))
    return lexicon_mod.default_lexicon()


def _load_category_lexicon(arg, config):
    if arg:
        return taxonomy_mod.read_category_lexicon_file(arg)
    if config is not None and config.category_lexicon:
        return taxonomy_mod.read_category_lexicon_file(
            config.resolve(config.category_lexicon))
    return taxonomy_mod.default_category_lexicon()


def _read_matches(path) -> list[lexicon_mod.MatchResult]:
    with open(path, encoding="utf-8") as fh:
        return [lexicon_mod.match_from_json(line) for line in fh if line.strip()]


def _read_labeled(path) -> list[clf.LabeledExample]:
    """Labeled JSONL: {"text": str, "label": "adas"|"non-adas"|bool}."""
    examples = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            if not line.strip():
                continue
            obj = json.loads(line)
            if "text" not in obj or "label" not in obj:
                raise corpus_mod.CorpusFormatError(
                    "labeled example needs text and label fields", line_no)
            label = obj["label"]
            if isinstance(label, str):
                if label not in ("adas", "non-adas"):
                    raise corpus_mod.CorpusFormatError(
                        f"unknown label {label!r}", line_no)
                label = label == "adas"
            elif not isinstance(label, bool):
                raise corpus_mod.CorpusFormatError(
                    f"label must be a string or boolean, got {label!r}", line_no)
            examples.append(clf.LabeledExample(obj["text"], label))
    return examples


def _write_json(path, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, ensure_ascii=True, indent=2)
        fh.write("\n")


def _annotations_path(explicit, config) -> Path:
    if explicit:
        return Path(explicit)
    if config is not None and config.annotations:
        return config.resolve(config.annotations)
    raise UsageError("no annotation file given (use --in or a config)")


# -- subcommands --------------------------------------------------------------

def cmd_ingest(args) -> int:
    config = _load_config(args)
    out_dir = _resolve_out(args, config)
    delimiter = "\t" if args.delimiter == "TAB" else args.delimiter
    with open(args.input, "rb") as fh:
        results = list(ingest_mod.parse_complaints(
            fh, delimiter=delimiter, has_header=args.header,
            max_error_fraction=args.max_error_fraction))
    records, errors = ingest_mod.split_results(results)
    for err in errors:
        logger.warning("row %d: %s", err.row_index, err.message)
    records = ingest_mod.dedup_complaints(records)
    if args.date_start or args.date_end:
        if not (args.date_start and args.date_end):
            raise UsageError("--date-start and --date-end go together")
        rng = ingest_mod.DateRange(args.date_start, args.date_end)
        records, dropped = ingest_mod.filter_by_date(records, rng,
                                                     args.date_field)
        logger.info("date filter dropped %d undatable records", dropped)
    ingest_mod.write_records(out_dir / "records.jsonl", records)
    logger.info("wrote %d records (%d row errors)", len(records), len(errors))
    return EXIT_OK


def cmd_filter(args) -> int:
    config = _load_config(args)
    out_dir = _resolve_out(args, config)
    records = ingest_mod.read_records(
        _default_in(args.input, out_dir, "records.jsonl"))
    lex = _load_lexicon(args.lexicon, config)
    matches = list(lexicon_mod.match_stream(records, lex))
    with open(out_dir / "matches.jsonl", "w", encoding="utf-8") as fh:
        for m in matches:
            fh.write(lexicon_mod.match_to_json(m) + "\n")
    flagged = [m for m in matches if m.is_adas]
    logger.info("flagged %d of %d records", len(flagged), len(matches))
    for group, pct in sorted(lexicon_mod.keyword_distribution(matches).items(),
                             key=lambda kv: (-kv[1], kv[0])):
        logger.info("  %-28s %5.2f%%", group, pct)
    return EXIT_OK


def cmd_train_classifier(args) -> int:
    config = _load_config(args)
    out_dir = _resolve_out(args, config)
    seed = _resolve_seed(args, config)
    dataset = _read_labeled(args.input)
    if args.ratio:
        dataset = clf.subsample_negatives(dataset, args.ratio, seed)
        logger.info("subsampled to %d examples at ratio %d",
                    len(dataset), args.ratio)
    hyper = dict(epochs=args.epochs, learning_rate=args.lr, l2=args.l2,
                 batch_size=args.batch_size, dimension=args.dimension)
    if args.folds:
        result = clf.cross_validate(dataset, k=args.folds, seed=seed, **hyper)
        report_path = Path(args.report) if args.report \
            else out_dir / "classifier_eval.json"
        _write_json(report_path, result)
        logger.info("pooled F1 %.4f over %d folds",
                    result["pooled"]["f1"], args.folds)
    model = clf.train_classifier(dataset, seed=seed, **hyper)
    model_path = Path(args.model) if args.model else out_dir / "classifier.json"
    clf.save_classifier(model, model_path)
    logger.info("model written to %s", model_path)
    return EXIT_OK


def cmd_classify(args) -> int:
    config = _load_config(args)
    out_dir = _resolve_out(args, config)
    if bool(args.model) == bool(args.adapter):
        raise UsageError("classify needs exactly one of --model / --adapter")
    records = ingest_mod.read_records(
        _default_in(args.input, out_dir, "records.jsonl"))
    rows: list[tuple[str, str, float]] = []
    if args.model:
        model = clf.load_classifier(args.model)
        for rec in records:
            prob, positive = clf.predict(model, rec.narrative)
            rows.append((rec.complaint_id,
                         "adas" if positive else "non-adas", prob))
    else:
        with protocol_mod.open_adapter(args.adapter) as client:
            token_lists = [corpus_mod.tokenize(r.narrative) for r in records]
            for rec, (label, prob) in zip(
                    records, client.classify_batch(token_lists)):
                rows.append((rec.complaint_id, label, prob))
    with open(out_dir / "predictions.jsonl", "w", encoding="utf-8") as fh:
        for cid, label, prob in rows:
            fh.write(json.dumps(
                {"complaint_id": cid, "label": label, "probability": prob},
                ensure_ascii=True, separators=(", ", ": ")) + "\n")
    logger.info("classified %d records", len(rows))
    return EXIT_OK


def cmd_train_tagger(args) -> int:
    config = _load_config(args)
    out_dir = _resolve_out(args, config)
    seed = _resolve_seed(args, config)
    train = corpus_mod.read_annotation_file(_annotations_path(args.input, config))
    model = tagger_mod.train_tagger(
        train, seed=seed, epochs=args.epochs, learning_rate=args.lr,
        l2=args.l2, batch_size=args.batch_size)
    model_path = Path(args.model) if args.model else out_dir / "tagger.json"
    tagger_mod.save_tagger(model, model_path)
    logger.info("trained on %d sentences; model written to %s",
                len(train), model_path)
    return EXIT_OK


def cmd_tag(args) -> int:
    config = _load_config(args)
    out_dir = _resolve_out(args, config)
    if bool(args.model) == bool(args.adapter):
        raise UsageError("tag needs exactly one of --model / --adapter")
    records = ingest_mod.read_records(
        _default_in(args.input, out_dir, "records.jsonl"))
    if args.matches:
        adas_ids = {m.complaint_id for m in _read_matches(args.matches)
                    if m.is_adas}
        records = [r for r in records if r.complaint_id in adas_ids]
    token_lists = [corpus_mod.tokenize(r.narrative) for r in records]
    if args.model:
        model = tagger_mod.load_tagger(args.model)
        tag_lists = [tagger_mod.tag(model, t) if t else () for t in token_lists]
    else:
        with protocol_mod.open_adapter(args.adapter) as client:
            nonempty = client.tag_batch([t for t in token_lists if t])
        it = iter(nonempty)
        tag_lists = [tuple(next(it)) if t else () for t in token_lists]
    with open(out_dir / "tagged.jsonl", "w", encoding="utf-8") as fh:
        for rec, tokens, tags in zip(records, token_lists, tag_lists):
            fh.write(json.dumps(
                {"complaint_id": rec.complaint_id, "tokens": list(tokens),
                 "tags": list(tags)},
                ensure_ascii=True, separators=(", ", ": ")) + "\n")
    logger.info("tagged %d records", len(records))
    return EXIT_OK


def cmd_extract(args) -> int:
    config = _load_config(args)
    out_dir = _resolve_out(args, config)
    tagged_path = _default_in(args.tagged, out_dir, "tagged.jsonl")
    categories: dict[str, str | None] = {}
    matches_path = Path(args.matches) if args.matches \
        else out_dir / "matches.jsonl"
    if matches_path.is_file():
        categories = {m.complaint_id: m.adas_category
                      for m in _read_matches(matches_path)}
    count = 0
    with open(tagged_path, encoding="utf-8") as fh, \
            open(out_dir / "instances.jsonl", "w", encoding="utf-8") as out:
        for line in fh:
            if not line.strip():
                continue
            obj = json.loads(line)
            if not obj["tokens"]:
                continue
            inst = tagger_mod.CauseEffectInstance.from_tags(
                obj["complaint_id"], obj["tokens"], obj["tags"],
                categories.get(obj["complaint_id"]))
            out.write(tagger_mod.instance_to_json(inst) + "\n")
            count += 1
    logger.info("extracted %d instances", count)
    return EXIT_OK


def cmd_categorize(args) -> int:
    config = _load_config(args)
    out_dir = _resolve_out(args, config)
    lex = _load_category_lexicon(args.category_lexicon, config)
    instances_path = _default_in(args.input, out_dir, "instances.jsonl")
    count = 0
    with open(instances_path, encoding="utf-8") as fh, \
            open(out_dir / "categorized.jsonl", "w", encoding="utf-8") as out:
        for line in fh:
            if not line.strip():
                continue
            inst = tagger_mod.instance_from_json(line)
            out.write(taxonomy_mod.categorized_to_json(
                taxonomy_mod.categorize_instance(inst, lex)) + "\n")
            count += 1
    logger.info("categorized %d instances", count)
    return EXIT_OK


def cmd_report(args) -> int:
    config = _load_config(args)
    out_dir = _resolve_out(args, config)
    fmt = _resolve_format(args, config)
    path = _default_in(args.input, out_dir, "categorized.jsonl")
    with open(path, encoding="utf-8") as fh:
        instances = [taxonomy_mod.categorized_from_json(l)
                     for l in fh if l.strip()]
    denominator = args.denominator if args.denominator is not None \
        else max(len(instances), 1)
    report = taxonomy_mod.aggregate(instances, denominator)
    report = taxonomy_mod.truncate_report(
        report, top_causes=args.top_causes, top_effects=args.top_effects,
        top_pairs=args.top_pairs)
    ext = {"csv": "csv", "json": "json", "markdown": "md"}[fmt]
    out_path = out_dir / f"report.{ext}"
    with open(out_path, "wb") as fh:
        fh.write(taxonomy_mod.render_report(report, fmt))
    logger.info("report written to %s", out_path)
    return EXIT_OK


def cmd_eval_classifier(args) -> int:
    config = _load_config(args)
    out_dir = _resolve_out(args, config)
    seed = _resolve_seed(args, config)
    dataset = _read_labeled(args.input)
    if args.ratio:
        dataset = clf.subsample_negatives(dataset, args.ratio, seed)
    result = clf.cross_validate(
        dataset, k=args.folds, seed=seed, epochs=args.epochs,
        learning_rate=args.lr, l2=args.l2, batch_size=args.batch_size,
        dimension=args.dimension)
    report_path = Path(args.report) if args.report \
        else out_dir / "classifier_eval.json"
    _write_json(report_path, result)
    logger.info("pooled P %.4f R %.4f F1 %.4f",
                result["pooled"]["precision"], result["pooled"]["recall"],
                result["pooled"]["f1"])
    return EXIT_OK


def cmd_eval_tagger(args) -> int:
    config = _load_config(args)
    out_dir = _resolve_out(args, config)
    seed = _resolve_seed(args, config)
    sentences = corpus_mod.read_annotation_file(
        _annotations_path(args.input, config))
    folds = clf.stratified_kfold([0] * len(sentences), args.folds, seed)
    client = protocol_mod.open_adapter(args.adapter) if args.adapter else None
    fold_reports = []
    all_pred: list[corpus_mod.AnnotatedSentence] = []
    all_gold: list[corpus_mod.AnnotatedSentence] = []
    try:
        for fold_no, test_idx in enumerate(folds):
            test = [sentences[i] for i in test_idx]
            if client is not None:
                tag_lists = client.tag_batch([s.tokens for s in test])
                model = None
            else:
                held = set(test_idx)
                train = [s for i, s in enumerate(sentences) if i not in held]
                model = tagger_mod.train_tagger(
                    train, seed=seed + fold_no, epochs=args.epochs,
                    learning_rate=args.lr, l2=args.l2,
                    batch_size=args.batch_size)
                tag_lists = [tagger_mod.tag(model, s.tokens) for s in test]
            predicted = [
                corpus_mod.AnnotatedSentence(s.sentence_id, s.tokens,
                                             tuple(tags), source="predicted")
                for s, tags in zip(test, tag_lists)
            ]
            fold_reports.append(
                tagger_mod.evaluate_tagging(predicted, test, model=model))
            all_pred.extend(predicted)
            all_gold.extend(test)
    finally:
        if client is not None:
            client.close()
    pooled = tagger_mod.evaluate_tagging(all_pred, all_gold, model=None)
    result = {
        "k": args.folds,
        "seed": seed,
        "external": bool(args.adapter),
        "folds": fold_reports,
        "pooled": pooled,
    }
    losses = [r["evaluation_loss"] for r in fold_reports
              if "evaluation_loss" in r]
    if losses:
        result["mean_evaluation_loss"] = statistics.fmean(losses)
    report_path = Path(args.report) if args.report \
        else out_dir / "tagger_eval.json"
    _write_json(report_path, result)
    logger.info("pooled macro F1 %.4f over %d folds",
                pooled["macro"]["f1"], args.folds)
    return EXIT_OK


def cmd_agreement(args) -> int:
    if len(args.raters) < 2:
        raise UsageError("agreement needs at least two annotation files")
    corpora = [corpus_mod.read_annotation_file(p) for p in args.raters]
    value = corpus_mod.pairwise_agreement(corpora)
    n = len(corpora)
    print(json.dumps({
        "agreement": value,
        "raters": n,
        "pairs": n * (n - 1) // 2,
        "level": "token",
    }, ensure_ascii=True))
    return EXIT_OK


def cmd_convert_dmv(args) -> int:
    config = _load_config(args)
    out_dir = _resolve_out(args, config)
    out_file = Path(args.out_file) if args.out_file else out_dir / "dmv.tsv"
    sentences = []
    skipped = 0
    with open(args.input, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or args.text_column not in reader.fieldnames:
            raise ingest_mod.IngestError(
                f"column {args.text_column!r} not in CSV header")
        for row_no, row in enumerate(reader, 1):
            text = (row.get(args.text_column) or "").strip()
            if not text:
                skipped += 1
                continue
            tokens = corpus_mod.tokenize(text)
            if not tokens:
                skipped += 1
                continue
            sid = row[args.id_column] if args.id_column else f"dmv-{row_no}"
            sentences.append(corpus_mod.AnnotatedSentence(
                sid, tuple(tokens), tuple("O" for _ in tokens), source="dmv"))
    corpus_mod.write_annotation_file(out_file, sentences)
    logger.info("converted %d rows (%d skipped) to %s",
                len(sentences), skipped, out_file)
    return EXIT_OK


_SEMEVAL_SENT = re.compile(
    r'^(?P<sid>\d+)\t"(?P<before>.*)<e1>(?P<e1>.*)</e1>'
    r'(?P<middle>.*)<e2>(?P<e2>.*)</e2>(?P<after>.*)"$')
_SEMEVAL_REL = re.compile(r"^Cause-Effect\((e1,e2|e2,e1)\)$")


def cmd_convert_semeval(args) -> int:
    config = _load_config(args)
    out_dir = _resolve_out(args, config)
    out_file = Path(args.out_file) if args.out_file else out_dir / "semeval.tsv"
    with open(args.input, encoding="utf-8") as fh:
        lines = [line.rstrip("\n") for line in fh]
    sentences = []
    skipped = 0
    i = 0
    while i < len(lines):
        if not lines[i].strip():
            i += 1
            continue
        sent_match = _SEMEVAL_SENT.match(lines[i])
        if sent_match is None or i + 1 >= len(lines):
            raise corpus_mod.CorpusFormatError(
                f"unparseable entry: {lines[i][:60]!r}", i + 1)
        rel_match = _SEMEVAL_REL.match(lines[i + 1].strip())
        # entries are sentence, relation, optional comment
        i += 2
        if i < len(lines) and lines[i].startswith("Comment"):
            i += 1
        if rel_match is None:
            skipped += 1
            continue
        cause_first = rel_match.group(1) == "e1,e2"
        parts = [
            (sent_match.group("before"), "O"),
            (sent_match.group("e1"), "C" if cause_first else "E"),
            (sent_match.group("middle"), "O"),
            (sent_match.group("e2"), "E" if cause_first else "C"),
            (sent_match.group("after"), "O"),
        ]
        tokens: list[str] = []
        tags: list[str] = []
        for text, tag in parts:
            for token in corpus_mod.tokenize(text):
                tokens.append(token)
                tags.append(tag)
        if not tokens:
            skipped += 1
            continue
        sentences.append(corpus_mod.AnnotatedSentence(
            f"semeval-{sent_match.group('sid')}", tuple(tokens), tuple(tags),
            source="semeval"))
    corpus_mod.write_annotation_file(out_file, sentences)
    logger.info("kept %d cause-effect sentences (%d skipped) in %s",
                len(sentences), skipped, out_file)
    return EXIT_OK


def _check_tag_batch(client) -> None:
    batches = [
        ["the", "brakes", "failed"],
        ["autopilot", "disengaged"],
        ["the", "car", "swerved", "into", "the", "median"],
        ["warning", "light"],
        ["the", "sensor", "fault", "caused", "sudden", "braking", "today"],
    ]
    tags = client.tag_batch(batches)
    if len(tags) != len(batches):
        raise protocol_mod.ProtocolError(
            f"expected {len(batches)} responses, got {len(tags)}")


def _check_error_path(client) -> None:
    responses = client.exchange([{"task": "tag"}])
    resp = responses[0]
    if "error" not in resp:
        raise protocol_mod.ProtocolError(
            "malformed request (no tokens) must produce an error response, "
            f"got {resp!r}")


def _check_empty_line(client) -> None:
    client.transport.send_line("")
    tags = client.tag_batch([["still", "alive"]])
    if len(tags) != 1:
        raise protocol_mod.ProtocolError("adapter died after an empty line")


def _check_classify(client) -> None:
    labels = client.classify_batch([
        ["the", "autopilot", "braked", "hard"],
        ["squeaky", "seat", "cushion"],
    ])
    if len(labels) != 2:
        raise protocol_mod.ProtocolError(
            f"expected 2 classify responses, got {len(labels)}")


def cmd_adapter_check(args) -> int:
    checks = [
        ("tag-batch", _check_tag_batch),
        ("error-path", _check_error_path),
        ("empty-line", _check_empty_line),
    ]
    if args.classify:
        checks.append(("classify", _check_classify))
    with protocol_mod.open_adapter(args.adapter) as client:
        for name, check in checks:
            check(client)
            print(f"{name}: ok", file=sys.stderr)
    print(json.dumps({"adapter": args.adapter, "checks": len(checks),
                      "conformant": True}, ensure_ascii=True))
    return EXIT_OK


def cmd_run(args) -> int:
    if not args.config:
        raise UsageError("run needs --config")
    config = pipeline_mod.PipelineConfig.from_file(args.config)
    if args.seed is not None:
        config.seed = args.seed
    if args.out:
        config.out_dir = args.out
    if args.format:
        config.format = args.format
    stages = None
    if args.stages:
        stages = [s.strip() for s in args.stages.split(",") if s.strip()]
        if not stages:
            raise UsageError("--stages given but empty")
    manifest = pipeline_mod.run_pipeline(config, stages)
    for entry in manifest:
        logger.info("stage %-10s inputs=%d outputs=%d", entry["stage"],
                    len(entry["inputs"]), len(entry["outputs"]))
    return EXIT_OK


def cmd_synth_corpus(args) -> int:
    config = _load_config(args)
    out_dir = _resolve_out(args, config)
    seed = _resolve_seed(args, config)
    if args.kind == "template":
        out_file = Path(args.out_file) if args.out_file \
            else out_dir / "synthetic.tsv"
        sentences = synth_mod.make_template_corpus(
            args.count, seed=seed, heldout=args.heldout)
        corpus_mod.write_annotation_file(out_file, sentences)
        logger.info("wrote %d template sentences to %s",
                    len(sentences), out_file)
    else:
        out_file = Path(args.out_file) if args.out_file \
            else out_dir / "labeled.jsonl"
        dataset = synth_mod.make_classifier_corpus(
            args.positives, args.negatives, seed=seed)
        with open(out_file, "w", encoding="utf-8") as fh:
            for ex in dataset:
                fh.write(json.dumps(
                    {"text": ex.text,
                     "label": "adas" if ex.label else "non-adas"},
                    ensure_ascii=True, separators=(", ", ": ")) + "\n")
        logger.info("wrote %d labeled examples to %s", len(dataset), out_file)
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except protocol_mod.ProtocolError as exc:
        print(f"protocol error: {exc}", file=sys.stderr)
        return EXIT_PROTOCOL
    except (ValueError, OSError, pipeline_mod.PipelineError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
