"""Training, prediction, and evaluation for the neural tagger.

Tag training follows the usual token-classification recipe: labels sit
on the first subword of each word, continuation subwords carry an
ignored label. Defaults mirror a fine-tuning setup (Adam, learning rate
3e-6, batch size 4, 8 epochs); training the small encoder from scratch
needs a larger learning rate, which callers pass explicitly. All
training is single-threaded and fully seeded so reruns are reproducible.
"""

from __future__ import annotations

import logging
import random
from typing import Sequence

import torch
from torch import nn

from .annotations import Sentence
from .metrics import macro_average, per_label_reports, tagging_summary
from .model import LABELS, Bundle, new_bundle
from .subwords import PAD_ID, SubwordVocab

logger = logging.getLogger(__name__)

DEFAULT_EPOCHS = 8
DEFAULT_LEARNING_RATE = 3e-6
DEFAULT_BATCH_SIZE = 4
DEFAULT_MERGES = 256
# Train-time probability of re-segmenting a word into characters, so the
# model also learns from segmentations it will see on unknown words.
DEFAULT_SUBWORD_DROPOUT = 0.3

IGNORE = -100
_LABEL_INDEX = {label: i for i, label in enumerate(LABELS)}


class TrainingError(ValueError):
    """Raised for unusable corpora or hyperparameters."""


def _batch_tensors(vocab: SubwordVocab, batch: Sequence[Sentence],
                   char_rng=None, char_prob: float = 0.0):
    """Padded (ids, word_ids, pad_mask, labels) for a sentence batch."""
    encoded = [vocab.encode_words(s.tokens, char_rng=char_rng,
                                  char_prob=char_prob) for s in batch]
    width = max(len(e.ids) for e in encoded)
    ids = torch.full((len(batch), width), PAD_ID, dtype=torch.long)
    word_ids = torch.zeros((len(batch), width), dtype=torch.long)
    pad_mask = torch.ones((len(batch), width), dtype=torch.bool)
    labels = torch.full((len(batch), width), IGNORE, dtype=torch.long)
    for row, (sent, enc) in enumerate(zip(batch, encoded)):
        n = len(enc.ids)
        ids[row, :n] = torch.tensor(enc.ids, dtype=torch.long)
        word_ids[row, :n] = torch.tensor(enc.word_ids, dtype=torch.long)
        pad_mask[row, :n] = False
        for pos, (word_idx, first) in enumerate(
                zip(enc.word_ids, enc.first_subword)):
            if first:
                labels[row, pos] = _LABEL_INDEX[sent.tags[word_idx]]
    return ids, word_ids, pad_mask, labels


def finetune(
    corpus: Sequence[Sentence],
    seed: int = 0,
    epochs: int = DEFAULT_EPOCHS,
    learning_rate: float = DEFAULT_LEARNING_RATE,
    batch_size: int = DEFAULT_BATCH_SIZE,
    merges: int = DEFAULT_MERGES,
    subword_dropout: float = DEFAULT_SUBWORD_DROPOUT,
    **config_overrides,
) -> tuple[Bundle, list[float]]:
    """Train tagger weights on an annotated corpus; returns epoch losses."""
    corpus = list(corpus)
    if not corpus:
        raise TrainingError("empty training corpus")
    if epochs < 1 or batch_size < 1:
        raise TrainingError("epochs and batch size must be at least 1")
    torch.set_num_threads(1)
    vocab = SubwordVocab.train(
        (tok for sent in corpus for tok in sent.tokens), merges=merges)
    bundle = new_bundle(vocab, seed=seed, **config_overrides)
    model = bundle.model
    model.train()
    optimizer = torch.optim.Adam(model.parameters(), lr=learning_rate)
    loss_fn = nn.CrossEntropyLoss(ignore_index=IGNORE)
    order = list(range(len(corpus)))
    rng = random.Random(seed)
    epoch_losses: list[float] = []
    for epoch in range(epochs):
        rng.shuffle(order)
        total = 0.0
        steps = 0
        for at in range(0, len(order), batch_size):
            batch = [corpus[i] for i in order[at:at + batch_size]]
            ids, word_ids, pad_mask, labels = _batch_tensors(
                vocab, batch, char_rng=rng, char_prob=subword_dropout)
            optimizer.zero_grad()
            tag_logits, _ = model(ids, word_ids, pad_mask)
            loss = loss_fn(tag_logits.reshape(-1, len(LABELS)),
                           labels.reshape(-1))
            loss.backward()
            optimizer.step()
            total += loss.item()
            steps += 1
        epoch_losses.append(total / steps)
        logger.info("epoch %d/%d mean loss %.4f", epoch + 1, epochs,
                    epoch_losses[-1])
    model.eval()
    return bundle, epoch_losses


def finetune_classifier(
    bundle: Bundle,
    labeled: Sequence[tuple[list[str], bool]],
    seed: int = 0,
    epochs: int = DEFAULT_EPOCHS,
    learning_rate: float = DEFAULT_LEARNING_RATE,
    batch_size: int = DEFAULT_BATCH_SIZE,
) -> list[float]:
    """Train the sequence head on (tokens, is_adas) pairs, in place."""
    labeled = list(labeled)
    if not labeled:
        raise TrainingError("empty labeled dataset")
    torch.set_num_threads(1)
    torch.manual_seed(seed)
    model = bundle.model
    model.train()
    optimizer = torch.optim.Adam(model.parameters(), lr=learning_rate)
    loss_fn = nn.CrossEntropyLoss()
    order = list(range(len(labeled)))
    rng = random.Random(seed)
    epoch_losses: list[float] = []
    for _ in range(epochs):
        rng.shuffle(order)
        total = 0.0
        steps = 0
        for at in range(0, len(order), batch_size):
            batch = [labeled[i] for i in order[at:at + batch_size]]
            sents = [Sentence(f"x{i}", tokens, ("O",) * len(tokens))
                     for i, (tokens, _) in enumerate(batch)]
            ids, word_ids, pad_mask, _ = _batch_tensors(bundle.vocab, sents)
            gold = torch.tensor([int(label) for _, label in batch],
                                dtype=torch.long)
            optimizer.zero_grad()
            _, cls_logits = model(ids, word_ids, pad_mask)
            loss = loss_fn(cls_logits, gold)
            loss.backward()
            optimizer.step()
            total += loss.item()
            steps += 1
        epoch_losses.append(total / steps)
    model.eval()
    return epoch_losses


@torch.no_grad()
def predict_tags(bundle: Bundle, tokens: Sequence[str]) -> tuple[str, ...]:
    """One C/E/O tag per word, read off each word's first subword."""
    if not tokens:
        raise TrainingError("cannot tag an empty token list")
    bundle.model.eval()
    enc = bundle.vocab.encode_words(list(tokens))
    ids = torch.tensor([enc.ids], dtype=torch.long)
    word_ids = torch.tensor([enc.word_ids], dtype=torch.long)
    pad_mask = torch.zeros((1, len(enc.ids)), dtype=torch.bool)
    tag_logits, _ = bundle.model(ids, word_ids, pad_mask)
    picks = tag_logits[0].argmax(dim=-1)
    return tuple(LABELS[int(picks[pos])]
                 for pos, first in enumerate(enc.first_subword) if first)


@torch.no_grad()
def classify_tokens(bundle: Bundle,
                    tokens: Sequence[str]) -> tuple[float, bool]:
    """(probability of the positive class, predicted flag)."""
    if not tokens:
        raise TrainingError("cannot classify an empty token list")
    bundle.model.eval()
    enc = bundle.vocab.encode_words(list(tokens))
    ids = torch.tensor([enc.ids], dtype=torch.long)
    word_ids = torch.tensor([enc.word_ids], dtype=torch.long)
    pad_mask = torch.zeros((1, len(enc.ids)), dtype=torch.bool)
    _, cls_logits = bundle.model(ids, word_ids, pad_mask)
    probability = float(torch.softmax(cls_logits[0], dim=-1)[1])
    return probability, probability >= 0.5


@torch.no_grad()
def evaluate(bundle: Bundle, corpus: Sequence[Sentence]) -> dict:
    """per_label/macro/token_count plus mean cross-entropy on gold tags."""
    corpus = list(corpus)
    if not corpus:
        raise TrainingError("empty evaluation corpus")
    bundle.model.eval()
    loss_fn = nn.CrossEntropyLoss(ignore_index=IGNORE, reduction="sum")
    flat_pred: list[str] = []
    flat_gold: list[str] = []
    total_loss = 0.0
    for sent in corpus:
        flat_pred.extend(predict_tags(bundle, sent.tokens))
        flat_gold.extend(sent.tags)
        ids, word_ids, pad_mask, labels = _batch_tensors(bundle.vocab, [sent])
        tag_logits, _ = bundle.model(ids, word_ids, pad_mask)
        total_loss += float(loss_fn(tag_logits.reshape(-1, len(LABELS)),
                                    labels.reshape(-1)))
    summary = tagging_summary(flat_pred, flat_gold)
    summary["evaluation_loss"] = total_loss / len(flat_gold)
    return summary


def crossvalidate(
    corpus: Sequence[Sentence],
    k: int = 5,
    seed: int = 0,
    epochs: int = DEFAULT_EPOCHS,
    learning_rate: float = DEFAULT_LEARNING_RATE,
    batch_size: int = DEFAULT_BATCH_SIZE,
    merges: int = DEFAULT_MERGES,
    subword_dropout: float = DEFAULT_SUBWORD_DROPOUT,
) -> dict:
    """Seeded k-fold cross validation; per-fold reports share the
    pipeline's metric schema."""
    corpus = list(corpus)
    if k < 2:
        raise TrainingError("need at least 2 folds")
    if len(corpus) < k:
        raise TrainingError(f"{len(corpus)} sentences cannot fill {k} folds")
    order = list(range(len(corpus)))
    random.Random(seed).shuffle(order)
    folds = [sorted(order[i::k]) for i in range(k)]
    fold_summaries: list[dict] = []
    flat_pred: list[str] = []
    flat_gold: list[str] = []
    for fold_no, test_idx in enumerate(folds):
        test_set = set(test_idx)
        train = [s for i, s in enumerate(corpus) if i not in test_set]
        bundle, _ = finetune(
            train, seed=seed + fold_no, epochs=epochs,
            learning_rate=learning_rate, batch_size=batch_size,
            merges=merges, subword_dropout=subword_dropout)
        test = [corpus[i] for i in test_idx]
        fold_summaries.append(evaluate(bundle, test))
        for sent in test:
            flat_pred.extend(predict_tags(bundle, sent.tokens))
            flat_gold.extend(sent.tags)
    pooled = per_label_reports(flat_pred, flat_gold)
    return {
        "k": k,
        "seed": seed,
        "folds": fold_summaries,
        "pooled": {
            "per_label": pooled,
            "macro": macro_average([pooled[label] for label in LABELS]),
            "token_count": len(flat_gold),
        },
        "mean_evaluation_loss": (
            sum(f["evaluation_loss"] for f in fold_summaries) / k),
    }
