"""Binary narrative classifier: hashed n-gram features + logistic regression.

The featurizer hashes token unigrams and adjacent bigrams into a power-of-two
index space (blake2b, stable across runs and platforms), accumulating one
count per occurrence, then L2-normalizes.  Training is shuffled mini-batch
SGD on L2-regularized logistic loss; every random choice is driven by the
caller's seed, so runs are bit-reproducible.  The cross-validation harness
implements stratified k-fold splits and negative subsampling at integer
ratios, reporting per-fold metrics plus micro-pooled counts.
"""

from __future__ import annotations

import hashlib
import json
import math
import random
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .corpus import tokenize
from .metrics import (ConfusionCounts, MetricReport, confusion_from_pairs,
                      macro_average, pool_counts, report_from_counts)

DEFAULT_DIMENSION = 2 ** 18
DEFAULT_EPOCHS = 8
DEFAULT_LEARNING_RATE = 0.1
DEFAULT_L2 = 1e-6
DEFAULT_BATCH_SIZE = 32

MODEL_FORMAT = "cemine-linear-classifier"
MODEL_VERSION = 1


class ClassifierError(ValueError):
    """Invalid classifier inputs (degenerate data, bad hyperparameters)."""


@dataclass(frozen=True)
class LabeledExample:
    text: str
    label: bool


@dataclass(frozen=True)
class SparseFeatureVector:
    """L2-normalized index→weight mapping in a power-of-two feature space."""

    weights: dict[int, float]
    dimension: int

    def dot(self, dense: np.ndarray) -> float:
        return float(sum(dense[i] * w for i, w in self.weights.items()))


@dataclass
class LinearClassifier:
    weights: np.ndarray
    bias: float
    dimension: int
    metadata: dict = field(default_factory=dict)


def _hash_index(feature: str, dimension: int) -> int:
    digest = hashlib.blake2b(feature.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little") % dimension


def featurize(narrative: str, dimension: int = DEFAULT_DIMENSION) -> SparseFeatureVector:
    """Hash unigrams and adjacent bigrams, count occurrences, L2-normalize."""
    if dimension <= 0 or dimension & (dimension - 1):
        raise ClassifierError(f"dimension must be a power of two, got {dimension}")
    tokens = tokenize(narrative)
    counts: dict[int, float] = {}
    features = list(tokens)
    features.extend(f"{a} {b}" for a, b in zip(tokens, tokens[1:]))
    for feat in features:
        idx = _hash_index(feat, dimension)
        counts[idx] = counts.get(idx, 0.0) + 1.0
    norm = math.sqrt(sum(w * w for w in counts.values()))
    if norm > 0:
        counts = {i: w / norm for i, w in counts.items()}
    return SparseFeatureVector(counts, dimension)


def _sigmoid(z: float) -> float:
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    ez = math.exp(z)
    return ez / (1.0 + ez)


def logistic_loss_and_gradient(
    weights: np.ndarray,
    bias: float,
    vectors: Sequence[SparseFeatureVector],
    labels: Sequence[float],
    l2: float,
) -> tuple[float, np.ndarray, float]:
    """Mean logistic loss + (l2/2)‖w‖² and its exact gradient."""
    n = len(vectors)
    if n == 0:
        raise ClassifierError("empty batch")
    grad_w = l2 * weights.astype(float)
    grad_b = 0.0
    loss = 0.5 * l2 * float(weights @ weights)
    for vec, y in zip(vectors, labels):
        z = vec.dot(weights) + bias
        p = _sigmoid(z)
        # Stable -log p(y): log(1+exp(-|z|)) + max(0, ∓z).
        if y >= 0.5:
            loss += (math.log1p(math.exp(-abs(z))) + max(0.0, -z)) / n
        else:
            loss += (math.log1p(math.exp(-abs(z))) + max(0.0, z)) / n
        coeff = (p - y) / n
        for i, w in vec.weights.items():
            grad_w[i] += coeff * w
        grad_b += coeff
    return loss, grad_w, grad_b


def train_classifier(
    train: Sequence[LabeledExample],
    seed: int = 0,
    epochs: int = DEFAULT_EPOCHS,
    learning_rate: float = DEFAULT_LEARNING_RATE,
    l2: float = DEFAULT_L2,
    batch_size: int = DEFAULT_BATCH_SIZE,
    dimension: int = DEFAULT_DIMENSION,
) -> LinearClassifier:
    """Seed-deterministic mini-batch SGD on the regularized logistic loss."""
    if not train:
        raise ClassifierError("empty training set")
    labels = {ex.label for ex in train}
    if len(labels) < 2:
        raise ClassifierError("degenerate training set: only one class present")
    vectors = [featurize(ex.text, dimension) for ex in train]
    ys = [1.0 if ex.label else 0.0 for ex in train]
    weights = np.zeros(dimension, dtype=float)
    bias = 0.0
    rng = random.Random(seed)
    order = list(range(len(train)))
    for _ in range(epochs):
        rng.shuffle(order)
        for start in range(0, len(order), batch_size):
            batch = order[start:start + batch_size]
            # L2 decay on the full vector once per batch, then sparse
            # per-example data-term updates (summed, not averaged, so the
            # effective step per example is independent of batch size).
            if l2:
                weights *= (1.0 - learning_rate * l2)
            grad_b = 0.0
            for idx in batch:
                vec = vectors[idx]
                z = vec.dot(weights) + bias
                coeff = _sigmoid(z) - ys[idx]
                for i, w in vec.weights.items():
                    weights[i] -= learning_rate * coeff * w
                grad_b += coeff
            bias -= learning_rate * grad_b
    return LinearClassifier(
        weights=weights,
        bias=bias,
        dimension=dimension,
        metadata={
            "seed": seed, "epochs": epochs, "learning_rate": learning_rate,
            "l2": l2, "batch_size": batch_size,
        },
    )


def predict(model: LinearClassifier, narrative: str) -> tuple[float, bool]:
    """(probability of the positive class, thresholded label at 0.5)."""
    vec = featurize(narrative, model.dimension)
    prob = _sigmoid(vec.dot(model.weights) + model.bias)
    return prob, prob >= 0.5


def stratified_kfold(labels: Sequence, k: int, seed: int = 0) -> list[list[int]]:
    """Index folds: per-class shuffle then round-robin deal.

    Guarantees a partition whose per-class counts differ by at most one
    across folds.  `labels` may be any hashable per-item class markers.
    """
    if k < 2:
        raise ClassifierError(f"k must be at least 2, got {k}")
    by_class: dict = {}
    for idx, label in enumerate(labels):
        by_class.setdefault(label, []).append(idx)
    rng = random.Random(seed)
    folds: list[list[int]] = [[] for _ in range(k)]
    for label in sorted(by_class, key=repr):
        members = by_class[label]
        if len(members) < k:
            raise ClassifierError(
                f"class {label!r} has {len(members)} members, fewer than k={k}"
            )
        rng.shuffle(members)
        for pos, idx in enumerate(members):
            folds[pos % k].append(idx)
    return [sorted(fold) for fold in folds]


def subsample_negatives(
    dataset: Sequence[LabeledExample], ratio: int, seed: int = 0,
) -> list[LabeledExample]:
    """All positives plus a seeded sample of ratio× as many negatives."""
    if ratio < 1 or ratio != int(ratio):
        raise ClassifierError(f"ratio must be a positive integer, got {ratio}")
    positives = [i for i, ex in enumerate(dataset) if ex.label]
    negatives = [i for i, ex in enumerate(dataset) if not ex.label]
    want = ratio * len(positives)
    if want > len(negatives):
        raise ClassifierError(
            f"need {want} negatives at ratio {ratio}, only {len(negatives)} available"
        )
    rng = random.Random(seed)
    keep = set(positives) | set(rng.sample(negatives, want))
    return [ex for i, ex in enumerate(dataset) if i in keep]


def cross_validate(
    dataset: Sequence[LabeledExample],
    k: int = 10,
    seed: int = 0,
    epochs: int = DEFAULT_EPOCHS,
    learning_rate: float = DEFAULT_LEARNING_RATE,
    l2: float = DEFAULT_L2,
    batch_size: int = DEFAULT_BATCH_SIZE,
    dimension: int = DEFAULT_DIMENSION,
) -> dict:
    """Stratified k-fold evaluation; positive class = True (ADAS).

    Returns per-fold MetricReports, the micro-pooled report over summed
    confusion counts, and the macro (mean-over-folds) summary.
    """
    folds = stratified_kfold([ex.label for ex in dataset], k, seed)
    fold_reports: list[MetricReport] = []
    counts: list[ConfusionCounts] = []
    for fold_no, test_idx in enumerate(folds):
        test_set = set(test_idx)
        train = [ex for i, ex in enumerate(dataset) if i not in test_set]
        model = train_classifier(
            train, seed=seed + fold_no, epochs=epochs,
            learning_rate=learning_rate, l2=l2,
            batch_size=batch_size, dimension=dimension,
        )
        predicted = [predict(model, dataset[i].text)[1] for i in test_idx]
        gold = [dataset[i].label for i in test_idx]
        c = confusion_from_pairs(predicted, gold, True)
        counts.append(c)
        fold_reports.append(report_from_counts(c))
    pooled = report_from_counts(pool_counts(counts))
    return {
        "folds": [r.to_dict() for r in fold_reports],
        "pooled": pooled.to_dict(),
        "macro": macro_average(fold_reports),
        "k": k,
        "seed": seed,
        "dataset_size": len(dataset),
    }


def save_classifier(model: LinearClassifier, path) -> None:
    nonzero = np.nonzero(model.weights)[0]
    payload = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "dimension": model.dimension,
        "bias": model.bias,
        "weights": [[int(i), float(model.weights[i])] for i in nonzero],
        "metadata": model.metadata,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, ensure_ascii=True, separators=(", ", ": "))
        fh.write("\n")


def load_classifier(path) -> LinearClassifier:
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("format") != MODEL_FORMAT:
        raise ClassifierError(f"not a classifier model file: {path}")
    if payload.get("version") != MODEL_VERSION:
        raise ClassifierError(f"unsupported model version {payload.get('version')}")
    weights = np.zeros(payload["dimension"], dtype=float)
    for i, w in payload["weights"]:
        weights[i] = w
    return LinearClassifier(
        weights=weights,
        bias=payload["bias"],
        dimension=payload["dimension"],
        metadata=payload.get("metadata", {}),
    )
