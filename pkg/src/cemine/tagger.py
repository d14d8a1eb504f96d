"""Linear-chain CRF over {C, E, O} for cause/effect span extraction.

Everything runs in log space: forward-backward uses log-sum-exp, Viterbi is
max-sum with ties broken toward the smaller label index (C < E < O) at every
argmax, so outputs are reproducible across implementations.  Feature
templates are fixed lexical/context ones; unknown features at inference
contribute zero.  Training is mini-batch SGD on the exact NLL gradient
(expected minus empirical feature counts plus the L2 term), seeded and
deterministic.
"""

from __future__ import annotations

import json
import logging
import random
import string
from dataclasses import dataclass, field
from typing import Iterable, Mapping, NamedTuple, Sequence

import numpy as np

from .corpus import AnnotatedSentence, tokenize
from .metrics import MetricReport, macro_average, per_label_reports

LABELS = ("C", "E", "O")
LABEL_INDEX = {label: i for i, label in enumerate(LABELS)}
N_LABELS = len(LABELS)

MODEL_FORMAT = "cemine-crf-tagger"
MODEL_VERSION = 1

DEFAULT_EPOCHS = 30
DEFAULT_LEARNING_RATE = 0.1
DEFAULT_L2 = 1e-5
DEFAULT_BATCH_SIZE = 8

logger = logging.getLogger(__name__)

_PUNCT_CHARS = set(string.punctuation)


class TaggerError(ValueError):
    """Invalid tagger inputs (length mismatch, empty corpus, bad model file)."""


def token_features(tokens: Sequence[str], i: int) -> list[str]:
    """Feature strings for position i; fixed template order."""
    tok = tokens[i]
    low = tok.lower()
    feats = [f"w={tok}", f"lw={low}"]
    for length in (1, 2, 3):
        if len(low) >= length:
            feats.append(f"p{length}={low[:length]}")
            feats.append(f"s{length}={low[-length:]}")
    if tok.isdigit():
        feats.append("isdigit")
    if tok and all(c in _PUNCT_CHARS for c in tok):
        feats.append("ispunct")
    feats.append(f"prev={tokens[i - 1].lower()}" if i > 0 else "prev=<s>")
    feats.append(f"next={tokens[i + 1].lower()}" if i + 1 < len(tokens) else "next=</s>")
    if i == 0:
        feats.append("first")
    if i == len(tokens) - 1:
        feats.append("last")
    feats.append("bias")
    return feats


@dataclass
class CrfModel:
    features: tuple[str, ...]
    emission: np.ndarray      # (num_features, 3)
    transitions: np.ndarray   # (3, 3), [from, to]
    start: np.ndarray         # (3,)
    stop: np.ndarray          # (3,)
    metadata: dict = field(default_factory=dict)
    feature_index: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        self.features = tuple(self.features)
        self.emission = np.asarray(self.emission, dtype=float).reshape(
            len(self.features), N_LABELS)
        self.transitions = np.asarray(self.transitions, dtype=float).reshape(
            N_LABELS, N_LABELS)
        self.start = np.asarray(self.start, dtype=float).reshape(N_LABELS)
        self.stop = np.asarray(self.stop, dtype=float).reshape(N_LABELS)
        for arr in (self.emission, self.transitions, self.start, self.stop):
            if not np.all(np.isfinite(arr)):
                raise TaggerError("model weights must be finite")
        self.feature_index = {f: i for i, f in enumerate(self.features)}

    @classmethod
    def from_weights(
        cls,
        emission_weights: Mapping[tuple[str, str], float] | None = None,
        transitions: Mapping[tuple[str, str], float] | None = None,
        start: Mapping[str, float] | None = None,
        stop: Mapping[str, float] | None = None,
        metadata: dict | None = None,
    ) -> "CrfModel":
        """Build a model from sparse (feature/label)→weight mappings."""
        emission_weights = dict(emission_weights or {})
        feats = tuple(sorted({f for f, _ in emission_weights}))
        index = {f: i for i, f in enumerate(feats)}
        emission = np.zeros((len(feats), N_LABELS))
        for (feat, label), w in emission_weights.items():
            emission[index[feat], LABEL_INDEX[label]] = w
        trans = np.zeros((N_LABELS, N_LABELS))
        for (a, b), w in (transitions or {}).items():
            trans[LABEL_INDEX[a], LABEL_INDEX[b]] = w
        start_v = np.zeros(N_LABELS)
        for label, w in (start or {}).items():
            start_v[LABEL_INDEX[label]] = w
        stop_v = np.zeros(N_LABELS)
        for label, w in (stop or {}).items():
            stop_v[LABEL_INDEX[label]] = w
        return cls(feats, emission, trans, start_v, stop_v, metadata or {})


@dataclass
class CrfGradient:
    """Gradient container aligned with CrfModel's weight arrays."""

    emission: np.ndarray
    transitions: np.ndarray
    start: np.ndarray
    stop: np.ndarray


class Posterior(NamedTuple):
    log_partition: float
    marginals: np.ndarray            # (n, 3)
    pairwise: np.ndarray             # (n-1, 3, 3)
    backward_log_partition: float


def _position_rows(model: CrfModel, tokens: Sequence[str]) -> list[np.ndarray]:
    rows = []
    for i in range(len(tokens)):
        idx = [model.feature_index[f] for f in token_features(tokens, i)
               if f in model.feature_index]
        rows.append(np.asarray(idx, dtype=int))
    return rows


def _emission_scores(model: CrfModel, rows: list[np.ndarray]) -> np.ndarray:
    scores = np.zeros((len(rows), N_LABELS))
    for i, r in enumerate(rows):
        if r.size:
            scores[i] = model.emission[r].sum(axis=0)
    return scores


def _logsumexp(a: np.ndarray, axis: int) -> np.ndarray:
    m = np.max(a, axis=axis, keepdims=True)
    return np.squeeze(m, axis=axis) + np.log(np.sum(np.exp(a - m), axis=axis))


def _tags_to_indices(tags: Sequence[str]) -> list[int]:
    try:
        return [LABEL_INDEX[t] for t in tags]
    except KeyError as exc:
        raise TaggerError(f"unknown tag {exc.args[0]!r}") from exc


def score_sequence(model: CrfModel, tokens: Sequence[str],
                   tags: Sequence[str]) -> float:
    """Unnormalized log-score of one (tokens, tags) path."""
    if len(tokens) != len(tags) or not tokens:
        raise TaggerError(
            f"tokens/tags length mismatch: {len(tokens)} vs {len(tags)}"
        )
    idx = _tags_to_indices(tags)
    scores = _emission_scores(model, _position_rows(model, tokens))
    total = model.start[idx[0]] + model.stop[idx[-1]]
    total += sum(scores[i, y] for i, y in enumerate(idx))
    total += sum(model.transitions[a, b] for a, b in zip(idx, idx[1:]))
    return float(total)


def _forward_backward(scores: np.ndarray, transitions: np.ndarray,
                      start: np.ndarray, stop: np.ndarray) -> Posterior:
    n = scores.shape[0]
    alpha = np.zeros((n, N_LABELS))
    alpha[0] = start + scores[0]
    for t in range(1, n):
        alpha[t] = scores[t] + _logsumexp(alpha[t - 1][:, None] + transitions, axis=0)
    log_z = float(_logsumexp((alpha[n - 1] + stop)[None, :], axis=1)[0])

    beta = np.zeros((n, N_LABELS))
    beta[n - 1] = stop
    for t in range(n - 2, -1, -1):
        beta[t] = _logsumexp(
            transitions + (scores[t + 1] + beta[t + 1])[None, :], axis=1)
    log_z_b = float(_logsumexp((start + scores[0] + beta[0])[None, :], axis=1)[0])

    marginals = np.exp(alpha + beta - log_z)
    pairwise = np.zeros((max(n - 1, 0), N_LABELS, N_LABELS))
    for t in range(n - 1):
        pairwise[t] = np.exp(
            alpha[t][:, None] + transitions
            + (scores[t + 1] + beta[t + 1])[None, :] - log_z)
    return Posterior(log_z, marginals, pairwise, log_z_b)


def forward_backward(model: CrfModel, tokens: Sequence[str]) -> Posterior:
    """Log-partition plus unary and pairwise tag marginals."""
    if not tokens:
        raise TaggerError("empty token sequence")
    scores = _emission_scores(model, _position_rows(model, tokens))
    return _forward_backward(scores, model.transitions, model.start, model.stop)


def viterbi(model: CrfModel, tokens: Sequence[str]) -> tuple[str, ...]:
    """Highest-scoring tag sequence; ties resolve to the smaller label index."""
    if not tokens:
        raise TaggerError("empty token sequence")
    scores = _emission_scores(model, _position_rows(model, tokens))
    n = len(tokens)
    delta = np.zeros((n, N_LABELS))
    back = np.zeros((n, N_LABELS), dtype=int)
    delta[0] = model.start + scores[0]
    for t in range(1, n):
        candidate = delta[t - 1][:, None] + model.transitions
        back[t] = np.argmax(candidate, axis=0)
        delta[t] = candidate[back[t], np.arange(N_LABELS)] + scores[t]
    final = delta[n - 1] + model.stop
    best = int(np.argmax(final))
    path = [best]
    for t in range(n - 1, 0, -1):
        path.append(int(back[t, path[-1]]))
    path.reverse()
    return tuple(LABELS[y] for y in path)


def nll_and_gradient(
    model: CrfModel,
    batch: Sequence[AnnotatedSentence],
    l2: float = 0.0,
) -> tuple[float, CrfGradient]:
    """Summed negative log-likelihood over the batch plus L2, with gradient."""
    if not batch:
        raise TaggerError("empty batch")
    rows_list = [_position_rows(model, s.tokens) for s in batch]
    gold_list = [_tags_to_indices(s.tags) for s in batch]
    return _nll_gradient_cached(model, rows_list, gold_list, l2)


def _nll_gradient_cached(
    model: CrfModel,
    rows_list: list[list[np.ndarray]],
    gold_list: list[list[int]],
    l2: float,
) -> tuple[float, CrfGradient]:
    grad_em = np.zeros_like(model.emission)
    grad_tr = np.zeros_like(model.transitions)
    grad_start = np.zeros_like(model.start)
    grad_stop = np.zeros_like(model.stop)
    loss = 0.0
    for rows, gold in zip(rows_list, gold_list):
        scores = _emission_scores(model, rows)
        post = _forward_backward(scores, model.transitions, model.start, model.stop)
        gold_score = model.start[gold[0]] + model.stop[gold[-1]]
        gold_score += sum(scores[i, y] for i, y in enumerate(gold))
        gold_score += sum(model.transitions[a, b] for a, b in zip(gold, gold[1:]))
        loss += post.log_partition - gold_score
        for i, r in enumerate(rows):
            if r.size:
                grad_em[r] += post.marginals[i]
                grad_em[r, gold[i]] -= 1.0
        grad_tr += post.pairwise.sum(axis=0)
        for a, b in zip(gold, gold[1:]):
            grad_tr[a, b] -= 1.0
        grad_start += post.marginals[0]
        grad_start[gold[0]] -= 1.0
        grad_stop += post.marginals[-1]
        grad_stop[gold[-1]] -= 1.0
    if l2:
        loss += 0.5 * l2 * (
            float(np.sum(model.emission ** 2)) + float(np.sum(model.transitions ** 2))
            + float(np.sum(model.start ** 2)) + float(np.sum(model.stop ** 2)))
        grad_em += l2 * model.emission
        grad_tr += l2 * model.transitions
        grad_start += l2 * model.start
        grad_stop += l2 * model.stop
    return loss, CrfGradient(grad_em, grad_tr, grad_start, grad_stop)


def _corpus_nll(model: CrfModel, rows_list, gold_list, l2: float) -> float:
    """Objective value only (forward pass, no gradient)."""
    loss = 0.0
    for rows, gold in zip(rows_list, gold_list):
        scores = _emission_scores(model, rows)
        n = scores.shape[0]
        alpha = model.start + scores[0]
        for t in range(1, n):
            alpha = scores[t] + _logsumexp(alpha[:, None] + model.transitions, axis=0)
        log_z = float(_logsumexp((alpha + model.stop)[None, :], axis=1)[0])
        gold_score = model.start[gold[0]] + model.stop[gold[-1]]
        gold_score += sum(scores[i, y] for i, y in enumerate(gold))
        gold_score += sum(model.transitions[a, b] for a, b in zip(gold, gold[1:]))
        loss += log_z - gold_score
    if l2:
        loss += 0.5 * l2 * (
            float(np.sum(model.emission ** 2)) + float(np.sum(model.transitions ** 2))
            + float(np.sum(model.start ** 2)) + float(np.sum(model.stop ** 2)))
    return loss


def train_tagger(
    corpus: Sequence[AnnotatedSentence],
    seed: int = 0,
    epochs: int = DEFAULT_EPOCHS,
    learning_rate: float = DEFAULT_LEARNING_RATE,
    l2: float = DEFAULT_L2,
    batch_size: int = DEFAULT_BATCH_SIZE,
) -> CrfModel:
    """Mini-batch SGD on the CRF NLL; per-epoch shuffling driven by seed."""
    corpus = list(corpus)
    if not corpus:
        raise TaggerError("empty training corpus")
    feature_set: set[str] = set()
    for sent in corpus:
        for i in range(len(sent.tokens)):
            feature_set.update(token_features(sent.tokens, i))
    model = CrfModel(
        features=tuple(sorted(feature_set)),
        emission=np.zeros((len(feature_set), N_LABELS)),
        transitions=np.zeros((N_LABELS, N_LABELS)),
        start=np.zeros(N_LABELS),
        stop=np.zeros(N_LABELS),
        metadata={
            "seed": seed, "epochs": epochs, "learning_rate": learning_rate,
            "l2": l2, "batch_size": batch_size,
        },
    )
    rows_list = [_position_rows(model, s.tokens) for s in corpus]
    gold_list = [_tags_to_indices(s.tags) for s in corpus]
    rng = random.Random(seed)
    order = list(range(len(corpus)))
    epoch_losses: list[float] = []
    for epoch in range(epochs):
        rng.shuffle(order)
        for begin in range(0, len(order), batch_size):
            batch = order[begin:begin + batch_size]
            loss, grad = _nll_gradient_cached(
                model,
                [rows_list[i] for i in batch],
                [gold_list[i] for i in batch],
                l2,
            )
            scale = learning_rate / len(batch)
            model.emission -= scale * grad.emission
            model.transitions -= scale * grad.transitions
            model.start -= scale * grad.start
            model.stop -= scale * grad.stop
        epoch_loss = _corpus_nll(model, rows_list, gold_list, l2)
        epoch_losses.append(epoch_loss)
        logger.info("epoch %d/%d training loss %.6f", epoch + 1, epochs, epoch_loss)
    model.metadata["epoch_losses"] = epoch_losses
    return model


def tag(model: CrfModel, tokens: Sequence[str]) -> tuple[str, ...]:
    """Viterbi decode a pre-tokenized sentence."""
    return viterbi(model, tokens)


def tag_text(model: CrfModel, text: str) -> tuple[tuple[str, ...], tuple[str, ...]]:
    """Tokenize a raw narrative (corpus rule) and tag it."""
    tokens = tokenize(text)
    if not tokens:
        return (), ()
    return tuple(tokens), viterbi(model, tokens)


@dataclass(frozen=True)
class Span:
    start: int
    end: int
    text: str

    def __post_init__(self):
        if not (0 <= self.start < self.end):
            raise TaggerError(f"invalid span [{self.start}, {self.end})")


def decode_spans(tokens: Sequence[str],
                 tags: Sequence[str]) -> tuple[list[Span], list[Span]]:
    """Maximal runs of C become cause spans, of E effect spans."""
    if len(tokens) != len(tags):
        raise TaggerError(
            f"tokens/tags length mismatch: {len(tokens)} vs {len(tags)}"
        )
    _tags_to_indices(tags)
    causes: list[Span] = []
    effects: list[Span] = []
    i = 0
    n = len(tags)
    while i < n:
        label = tags[i]
        if label == "O":
            i += 1
            continue
        j = i
        while j < n and tags[j] == label:
            j += 1
        span = Span(i, j, " ".join(tokens[i:j]))
        (causes if label == "C" else effects).append(span)
        i = j
    return causes, effects


def spans_to_tags(n: int, cause_spans: Iterable[Span],
                  effect_spans: Iterable[Span]) -> tuple[str, ...]:
    """Inverse of decode_spans; spans must be disjoint and in range."""
    tags = ["O"] * n
    for label, spans in (("C", cause_spans), ("E", effect_spans)):
        for span in spans:
            if span.end > n:
                raise TaggerError(f"span [{span.start}, {span.end}) exceeds length {n}")
            for i in range(span.start, span.end):
                if tags[i] != "O":
                    raise TaggerError(f"overlapping spans at position {i}")
                tags[i] = label
    return tuple(tags)


@dataclass(frozen=True)
class CauseEffectInstance:
    complaint_id: str
    tokens: tuple[str, ...]
    tags: tuple[str, ...]
    cause_spans: tuple[Span, ...]
    effect_spans: tuple[Span, ...]
    adas_category: str | None = None

    @classmethod
    def from_tags(cls, complaint_id: str, tokens: Sequence[str],
                  tags: Sequence[str],
                  adas_category: str | None = None) -> "CauseEffectInstance":
        causes, effects = decode_spans(tokens, tags)
        return cls(
            complaint_id=complaint_id,
            tokens=tuple(tokens),
            tags=tuple(tags),
            cause_spans=tuple(causes),
            effect_spans=tuple(effects),
            adas_category=adas_category,
        )


def instance_to_json(inst: CauseEffectInstance) -> str:
    def spans(items):
        return [{"start": s.start, "end": s.end, "text": s.text} for s in items]
    payload = {
        "complaint_id": inst.complaint_id,
        "adas_category": inst.adas_category,
        "tokens": list(inst.tokens),
        "tags": list(inst.tags),
        "cause_spans": spans(inst.cause_spans),
        "effect_spans": spans(inst.effect_spans),
    }
    return json.dumps(payload, ensure_ascii=True, separators=(", ", ": "))


def instance_from_json(line: str) -> CauseEffectInstance:
    obj = json.loads(line)
    inst = CauseEffectInstance.from_tags(
        obj["complaint_id"], obj["tokens"], obj["tags"],
        obj.get("adas_category"))
    declared_causes = [(s["start"], s["end"], s["text"]) for s in obj["cause_spans"]]
    declared_effects = [(s["start"], s["end"], s["text"]) for s in obj["effect_spans"]]
    if (declared_causes != [(s.start, s.end, s.text) for s in inst.cause_spans]
            or declared_effects != [(s.start, s.end, s.text) for s in inst.effect_spans]):
        raise TaggerError(
            f"instance {obj['complaint_id']!r}: spans inconsistent with tags"
        )
    return inst


def evaluate_tagging(
    predicted: Sequence[AnnotatedSentence],
    gold: Sequence[AnnotatedSentence],
    model: CrfModel | None = None,
) -> dict:
    """Token-level per-label and macro metrics; NLL-based loss when a model
    (hence marginals) is available."""
    if len(predicted) != len(gold):
        raise TaggerError(
            f"corpus size mismatch: {len(predicted)} vs {len(gold)}"
        )
    flat_pred: list[str] = []
    flat_gold: list[str] = []
    for p, g in zip(predicted, gold):
        if tuple(p.tokens) != tuple(g.tokens):
            raise TaggerError(f"token mismatch on sentence {g.sentence_id!r}")
        flat_pred.extend(p.tags)
        flat_gold.extend(g.tags)
    reports = per_label_reports(flat_pred, flat_gold, LABELS)
    result = {
        "per_label": {label: reports[label].to_dict() for label in LABELS},
        "macro": macro_average([reports[label] for label in LABELS]),
        "token_count": len(flat_gold),
        "evaluation_loss": None,
    }
    if model is not None:
        total = 0.0
        count = 0
        for sent in gold:
            post = forward_backward(model, sent.tokens)
            for i, t in enumerate(_tags_to_indices(sent.tags)):
                # Clamp to avoid -inf on a vanishing gold marginal.
                total += -float(np.log(max(post.marginals[i, t], 1e-300)))
                count += 1
        result["evaluation_loss"] = total / count if count else 0.0
    return result


def save_tagger(model: CrfModel, path) -> None:
    payload = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "labels": list(LABELS),
        "features": list(model.features),
        "emission": [[float(w) for w in row] for row in model.emission],
        "transitions": [[float(w) for w in row] for row in model.transitions],
        "start": [float(w) for w in model.start],
        "stop": [float(w) for w in model.stop],
        "metadata": model.metadata,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, ensure_ascii=True, separators=(", ", ": "))
        fh.write("\n")


def load_tagger(path) -> CrfModel:
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("format") != MODEL_FORMAT:
        raise TaggerError(f"not a tagger model file: {path}")
    if payload.get("version") != MODEL_VERSION:
        raise TaggerError(f"unsupported model version {payload.get('version')}")
    if tuple(payload.get("labels", ())) != LABELS:
        raise TaggerError("model file declares an unexpected label order")
    return CrfModel(
        features=tuple(payload["features"]),
        emission=np.asarray(payload["emission"], dtype=float),
        transitions=np.asarray(payload["transitions"], dtype=float),
        start=np.asarray(payload["start"], dtype=float),
        stop=np.asarray(payload["stop"], dtype=float),
        metadata=payload.get("metadata", {}),
    )
