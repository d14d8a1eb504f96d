"""Head-to-head harness: built-in CRF baseline vs the neural adapter.

Both contenders see the identical split: a synthetic training corpus and
a held-out corpus whose content words are disjoint from training, both
generated by the pipeline's own CLI. The CRF is trained with `cemine
train-tagger` and served through the pipeline's reference adapter; the
neural model is trained here and served by this package. Both are
scored over the wire protocol, by the same client, on the same held-out
sentences, and the harness also runs `cemine adapter-check` against the
neural server. The report is written either way; comparing the two
macro F1 numbers is the caller's decision to gate on.
"""

from __future__ import annotations

import json
import logging
import shlex
import subprocess
import sys
from pathlib import Path
from typing import Sequence

from .annotations import Sentence, read_annotation_file
from .metrics import tagging_summary
from .model import save_bundle
from .training import finetune
from .wire import WireClient

logger = logging.getLogger(__name__)

DEFAULT_TRAIN_N = 500
DEFAULT_HELDOUT_N = 100
DEFAULT_SEED = 7
# From-scratch training settings for the small encoder; the fine-tuning
# defaults in training.py are far too slow to move random weights.
DEFAULT_EPOCHS = 24
DEFAULT_LEARNING_RATE = 3e-4
DEFAULT_BATCH_SIZE = 8
DEFAULT_MERGES = 200
DEFAULT_SUBWORD_DROPOUT = 0.3


class HarnessError(RuntimeError):
    """A pipeline subprocess failed or produced unusable artifacts."""


def _run(command: Sequence[str]) -> subprocess.CompletedProcess:
    logger.info("running: %s", shlex.join(command))
    proc = subprocess.run(command, capture_output=True, text=True)
    if proc.returncode != 0:
        raise HarnessError(
            f"command failed ({proc.returncode}): {shlex.join(command)}\n"
            f"{proc.stderr.strip()}"
        )
    return proc


def score_adapter(command: Sequence[str],
                  sentences: Sequence[Sentence]) -> dict:
    """Tag every sentence over the wire and summarize against gold."""
    flat_pred: list[str] = []
    flat_gold: list[str] = []
    with WireClient(command) as client:
        for sent in sentences:
            flat_pred.extend(client.tag(sent.tokens))
            flat_gold.extend(sent.tags)
    return tagging_summary(flat_pred, flat_gold)


def run_harness(
    out_dir,
    train_n: int = DEFAULT_TRAIN_N,
    heldout_n: int = DEFAULT_HELDOUT_N,
    seed: int = DEFAULT_SEED,
    epochs: int = DEFAULT_EPOCHS,
    learning_rate: float = DEFAULT_LEARNING_RATE,
    batch_size: int = DEFAULT_BATCH_SIZE,
    merges: int = DEFAULT_MERGES,
    subword_dropout: float = DEFAULT_SUBWORD_DROPOUT,
    cemine: str = "cemine",
) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cemine_cmd = shlex.split(cemine)
    train_file = out / "train.tsv"
    heldout_file = out / "heldout.tsv"
    crf_model = out / "crf.json"

    # Identical split for both sides: train pools at `seed`, held-out
    # pools (disjoint content words) at `seed + 1`.
    _run(cemine_cmd + ["synth-corpus", "--kind", "template",
                       "-n", str(train_n), "--seed", str(seed),
                       "--out-file", str(train_file)])
    _run(cemine_cmd + ["synth-corpus", "--kind", "template",
                       "-n", str(heldout_n), "--seed", str(seed + 1),
                       "--heldout", "--out-file", str(heldout_file)])
    _run(cemine_cmd + ["train-tagger", "--in", str(train_file),
                       "--model", str(crf_model), "--seed", str(seed)])

    heldout = read_annotation_file(heldout_file)
    crf_command = [sys.executable, "-m", "cemine.ref_adapter",
                   "--tagger-model", str(crf_model)]
    crf_summary = score_adapter(crf_command, heldout)
    logger.info("crf held-out macro f1 %.4f", crf_summary["macro"]["f1"])

    train = read_annotation_file(train_file)
    bundle, epoch_losses = finetune(
        train, seed=seed, epochs=epochs, learning_rate=learning_rate,
        batch_size=batch_size, merges=merges,
        subword_dropout=subword_dropout)
    model_dir = out / "neural_model"
    save_bundle(model_dir, bundle)
    neural_command = [sys.executable, "-m", "neural_adapter", "serve",
                      "--model-dir", str(model_dir)]
    neural_summary = score_adapter(neural_command, heldout)
    logger.info("neural held-out macro f1 %.4f",
                neural_summary["macro"]["f1"])

    check = subprocess.run(
        cemine_cmd + ["adapter-check", "--adapter",
                      shlex.join(neural_command)],
        capture_output=True, text=True)
    conformant = False
    if check.returncode == 0:
        try:
            conformant = bool(
                json.loads(check.stdout.strip().splitlines()[-1])["conformant"])
        except (ValueError, KeyError, IndexError):
            conformant = False

    report = {
        "train_corpus": str(train_file),
        "heldout_corpus": str(heldout_file),
        "train_sentences": len(train),
        "heldout_sentences": len(heldout),
        "seed": seed,
        "crf": {
            "model": str(crf_model),
            "macro_f1": crf_summary["macro"]["f1"],
            "summary": crf_summary,
        },
        "neural": {
            "model_dir": str(model_dir),
            "macro_f1": neural_summary["macro"]["f1"],
            "summary": neural_summary,
            "epochs": epochs,
            "learning_rate": learning_rate,
            "batch_size": batch_size,
            "merges": merges,
            "subword_dropout": subword_dropout,
            "epoch_losses": epoch_losses,
        },
        "adapter_check": {
            "exit_code": check.returncode,
            "conformant": conformant,
        },
        "neural_beats_crf": (neural_summary["macro"]["f1"]
                             >= crf_summary["macro"]["f1"]),
    }
    report_file = out / "harness.json"
    report_file.write_text(json.dumps(report, indent=2) + "\n",
                           encoding="utf-8")
    logger.info("wrote %s", report_file)
    return report
