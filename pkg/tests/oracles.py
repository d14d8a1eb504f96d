"""Independent re-derivations used as test oracles.

Nothing here calls the library's inference or metric code paths; shared
surface is limited to data contracts (feature templates, tokenizer, model
containers) so the numeric checks stay meaningful.
"""

from __future__ import annotations

import hashlib
import itertools
import math
import re
from fractions import Fraction

import numpy as np

from cemine.corpus import tokenize
from cemine.tagger import CrfModel, token_features

LABEL_COUNT = 3


def fraction_prf(tp: int, fp: int, fn: int) -> tuple[Fraction, Fraction, Fraction]:
    """Exact precision/recall/F1 in rational arithmetic."""
    precision = Fraction(tp, tp + fp) if tp + fp else Fraction(0)
    recall = Fraction(tp, tp + fn) if tp + fn else Fraction(0)
    if precision + recall > 0:
        f1 = 2 * precision * recall / (precision + recall)
    else:
        f1 = Fraction(0)
    return precision, recall, f1


def random_crf_case(rng, max_len: int = 8) -> tuple[list[str], CrfModel]:
    """A random sentence and a random dense model over its feature set."""
    words = ("the", "sensor", "failed", "car", "swerved", ",", "7",
             "due", "to", "rain", "Brake", "LIGHT", ".", "suddenly")
    n = rng.randint(1, max_len)
    tokens = [rng.choice(words) for _ in range(n)]
    feats = sorted({f for i in range(n) for f in token_features(tokens, i)})
    np_rng = np.random.default_rng(rng.randrange(2 ** 32))
    model = CrfModel(
        features=tuple(feats),
        emission=np_rng.normal(0.0, 0.7, size=(len(feats), LABEL_COUNT)),
        transitions=np_rng.normal(0.0, 0.7, size=(LABEL_COUNT, LABEL_COUNT)),
        start=np_rng.normal(0.0, 0.7, size=LABEL_COUNT),
        stop=np_rng.normal(0.0, 0.7, size=LABEL_COUNT),
    )
    return tokens, model


def emission_matrix(model: CrfModel, tokens) -> np.ndarray:
    """Per-position emission scores summed feature by feature."""
    em = np.zeros((len(tokens), LABEL_COUNT))
    for i in range(len(tokens)):
        for feat in token_features(tokens, i):
            j = model.feature_index.get(feat)
            if j is not None:
                em[i] += model.emission[j]
    return em


def enumerate_posterior(model: CrfModel, tokens):
    """Exhaustive 3^n enumeration of the chain distribution.

    Returns (log_partition, unary (n,3), pairwise (n-1,3,3), max_score).
    """
    em = emission_matrix(model, tokens)
    n = len(tokens)
    paths = np.array(list(itertools.product(range(LABEL_COUNT), repeat=n)),
                     dtype=int)
    total = model.start[paths[:, 0]] + model.stop[paths[:, -1]]
    total = total + em[np.arange(n), paths].sum(axis=1)
    if n > 1:
        total = total + model.transitions[paths[:, :-1], paths[:, 1:]].sum(axis=1)
    peak = float(total.max())
    log_z = peak + math.log(float(np.exp(total - peak).sum()))
    weights = np.exp(total - log_z)
    unary = np.zeros((n, LABEL_COUNT))
    for t in range(n):
        for y in range(LABEL_COUNT):
            unary[t, y] = weights[paths[:, t] == y].sum()
    pairwise = np.zeros((max(n - 1, 0), LABEL_COUNT, LABEL_COUNT))
    for t in range(n - 1):
        for a in range(LABEL_COUNT):
            for b in range(LABEL_COUNT):
                mask = (paths[:, t] == a) & (paths[:, t + 1] == b)
                pairwise[t, a, b] = weights[mask].sum()
    return log_z, unary, pairwise, peak


def path_score(model: CrfModel, tokens, tag_indices) -> float:
    """Score of one path, accumulated term by term."""
    em = emission_matrix(model, tokens)
    total = model.start[tag_indices[0]] + model.stop[tag_indices[-1]]
    for i, y in enumerate(tag_indices):
        total += em[i, y]
    for a, b in zip(tag_indices, tag_indices[1:]):
        total += model.transitions[a, b]
    return float(total)


def featurize_oracle(text: str, dimension: int) -> dict[int, float]:
    """Explicit-dictionary version of the hashed n-gram featurizer."""
    tokens = tokenize(text)
    grams = list(tokens) + [f"{a} {b}" for a, b in zip(tokens, tokens[1:])]
    counts: dict[int, float] = {}
    for gram in grams:
        digest = hashlib.blake2b(gram.encode("utf-8"), digest_size=8).digest()
        idx = int.from_bytes(digest, "little") % dimension
        counts[idx] = counts.get(idx, 0.0) + 1.0
    norm = math.sqrt(sum(v * v for v in counts.values()))
    return {i: v / norm for i, v in counts.items()} if norm else {}


def keyword_scan_oracle(text: str, phrases) -> bool:
    """Regex lookaround version of whole-word phrase matching (ASCII text)."""
    low = text.lower()
    for phrase in phrases:
        pattern = r"(?<![a-z0-9])" + re.escape(phrase) + r"(?![a-z0-9])"
        if re.search(pattern, low):
            return True
    return False
