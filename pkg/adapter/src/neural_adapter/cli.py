"""Command line: finetune, serve, and the head-to-head harness."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import harness as harness_mod
from . import training
from .annotations import AnnotationError, read_annotation_file
from .model import ModelError, load_bundle, save_bundle
from .serve import serve_stdio, serve_tcp
from .subwords import SubwordError

logger = logging.getLogger("neural_adapter")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="neural-adapter",
        description="Neural tagger speaking the complaint-pipeline "
                    "wire protocol.")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND",
                                required=True)

    p = sub.add_parser("finetune", help="train tagger weights on an "
                                        "annotation file")
    p.add_argument("--in", dest="input", required=True, metavar="FILE")
    p.add_argument("--model-dir", required=True, metavar="DIR")
    p.add_argument("--epochs", type=int, default=training.DEFAULT_EPOCHS)
    p.add_argument("--lr", type=float, default=training.DEFAULT_LEARNING_RATE)
    p.add_argument("--batch-size", type=int,
                   default=training.DEFAULT_BATCH_SIZE)
    p.add_argument("--merges", type=int, default=training.DEFAULT_MERGES)
    p.add_argument("--subword-dropout", type=float,
                   default=training.DEFAULT_SUBWORD_DROPOUT)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--folds", type=int, default=0,
                   help="run k-fold cross validation before the final fit")
    p.add_argument("--report", metavar="FILE",
                   help="where to write the cross-validation report JSON")
    p.add_argument("--labeled", metavar="FILE",
                   help="labeled JSONL to also train the classify head on")
    p.set_defaults(func=cmd_finetune)

    p = sub.add_parser("serve", help="answer protocol requests over stdio "
                                     "or one TCP connection")
    p.add_argument("--model-dir", required=True, metavar="DIR")
    p.add_argument("--tcp", metavar="HOST:PORT")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("harness", help="train and score the CRF baseline "
                                       "and the neural adapter on one split")
    p.add_argument("--out", required=True, metavar="DIR")
    p.add_argument("--train-n", type=int, default=harness_mod.DEFAULT_TRAIN_N)
    p.add_argument("--heldout-n", type=int,
                   default=harness_mod.DEFAULT_HELDOUT_N)
    p.add_argument("--seed", type=int, default=harness_mod.DEFAULT_SEED)
    p.add_argument("--epochs", type=int, default=harness_mod.DEFAULT_EPOCHS)
    p.add_argument("--lr", type=float,
                   default=harness_mod.DEFAULT_LEARNING_RATE)
    p.add_argument("--batch-size", type=int,
                   default=harness_mod.DEFAULT_BATCH_SIZE)
    p.add_argument("--merges", type=int, default=harness_mod.DEFAULT_MERGES)
    p.add_argument("--subword-dropout", type=float,
                   default=harness_mod.DEFAULT_SUBWORD_DROPOUT)
    p.add_argument("--cemine", default="cemine",
                   help="pipeline CLI command (default: cemine)")
    p.set_defaults(func=cmd_harness)
    return parser


def _read_labeled(path) -> list[tuple[list[str], bool]]:
    labeled = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            obj = json.loads(line)
            text, label = obj["text"], obj["label"]
            if label not in ("adas", "non-adas"):
                raise ValueError(f"line {line_no}: unknown label {label!r}")
            tokens = text.split()
            if not tokens:
                raise ValueError(f"line {line_no}: empty text")
            labeled.append((tokens, label == "adas"))
    if not labeled:
        raise ValueError(f"no labeled examples in {path}")
    return labeled


def cmd_finetune(args) -> int:
    corpus = read_annotation_file(args.input)
    logger.info("loaded %d sentences from %s", len(corpus), args.input)
    if args.folds:
        result = training.crossvalidate(
            corpus, k=args.folds, seed=args.seed, epochs=args.epochs,
            learning_rate=args.lr, batch_size=args.batch_size,
            merges=args.merges, subword_dropout=args.subword_dropout)
        logger.info("%d-fold pooled macro f1 %.4f", args.folds,
                    result["pooled"]["macro"]["f1"])
        if args.report:
            Path(args.report).write_text(
                json.dumps(result, indent=2) + "\n", encoding="utf-8")
            logger.info("wrote %s", args.report)
    bundle, epoch_losses = training.finetune(
        corpus, seed=args.seed, epochs=args.epochs, learning_rate=args.lr,
        batch_size=args.batch_size, merges=args.merges,
        subword_dropout=args.subword_dropout)
    logger.info("final epoch mean loss %.4f", epoch_losses[-1])
    if args.labeled:
        labeled = _read_labeled(args.labeled)
        cls_losses = training.finetune_classifier(
            bundle, labeled, seed=args.seed, epochs=args.epochs,
            learning_rate=args.lr, batch_size=args.batch_size)
        logger.info("classify head trained on %d examples, final loss %.4f",
                    len(labeled), cls_losses[-1])
    save_bundle(args.model_dir, bundle)
    logger.info("saved model to %s", args.model_dir)
    return 0


def cmd_serve(args) -> int:
    bundle = load_bundle(args.model_dir)
    if args.tcp:
        host, _, port = args.tcp.rpartition(":")
        if not host or not port.isdigit():
            raise ValueError(f"bad --tcp address {args.tcp!r}; want HOST:PORT")
        return serve_tcp(bundle, host, int(port))
    return serve_stdio(bundle)


def cmd_harness(args) -> int:
    report = harness_mod.run_harness(
        args.out, train_n=args.train_n, heldout_n=args.heldout_n,
        seed=args.seed, epochs=args.epochs, learning_rate=args.lr,
        batch_size=args.batch_size, merges=args.merges,
        subword_dropout=args.subword_dropout, cemine=args.cemine)
    print(json.dumps(report, indent=2))
    return 0


def main(argv=None) -> int:
    logging.basicConfig(
        level=logging.INFO, stream=sys.stderr,
        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (AnnotationError, ModelError, SubwordError, ValueError,
            OSError, harness_mod.HarnessError,
            training.TrainingError) as exc:
        logger.error("%s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
