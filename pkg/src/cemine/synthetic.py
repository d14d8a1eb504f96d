"""Seeded synthetic corpora for capacity and protocol testing.

Two generators live here.  The template corpus builds cause-connective-
effect sentences ("X caused Y", "due to X, Y", "X, as a result Y") with
gold C/E/O tags; the held-out variant draws its filler words from pools
disjoint from the training pools, so a tagger only generalizes through
context features and transitions, never by memorizing fillers.  The
classifier corpus builds linearly separable positive/negative narratives
over disjoint vocabularies at configurable sizes.
"""

from __future__ import annotations

import random
from typing import Sequence

from .classifier import LabeledExample
from .corpus import AnnotatedSentence

# Filler pools for the template corpus.  Held-out pools share no content
# words with the training pools; structure words ("the", connectives,
# punctuation) are common to both by design.
_TRAIN_SYSTEMS = (
    "sensor", "radar", "camera", "autopilot", "computer", "module",
    "processor", "lidar", "antenna", "display",
)
_TRAIN_CAUSE_TAILS = (
    ("failed",), ("malfunctioned",), ("overheated",),
    ("misread", "the", "road"), ("engaged", "without", "warning"),
    ("lost", "calibration"), ("reported", "a", "fault"),
    ("shorted", "out"),
)
_TRAIN_OBJECTS = (
    "car", "vehicle", "truck", "brakes", "steering", "engine",
    "wheel", "dashboard",
)
_TRAIN_EFFECT_TAILS = (
    ("swerved", "sharply"), ("stopped", "suddenly"), ("stalled",),
    ("drifted", "left"), ("braked", "hard"), ("lost", "power"),
    ("shook", "violently"), ("accelerated", "abruptly"),
)

_HELDOUT_SYSTEMS = (
    "gyroscope", "actuator", "controller", "firmware", "transceiver",
    "regulator", "servo", "chipset",
)
_HELDOUT_CAUSE_TAILS = (
    ("glitched",), ("froze",), ("misjudged", "the", "curve"),
    ("activated", "unexpectedly"), ("dropped", "its", "signal"),
    ("corrupted", "its", "memory"),
)
_HELDOUT_OBJECTS = (
    "suv", "sedan", "minivan", "coupe", "pickup", "wagon",
)
_HELDOUT_EFFECT_TAILS = (
    ("lurched", "forward"), ("veered", "right"), ("shut", "down"),
    ("skidded", "badly"), ("decelerated", "hard"), ("rattled", "loudly"),
)

# Template layouts: lists of ("cause"|"effect"|literal-token, tag) slots.
_TEMPLATES = (
    (("cause", "C"), ("caused", "O"), ("effect", "E")),
    (("due", "O"), ("to", "O"), ("cause", "C"), (",", "O"), ("effect", "E")),
    (("cause", "C"), (",", "O"), ("as", "O"), ("a", "O"), ("result", "O"),
     ("effect", "E")),
    (("effect", "E"), ("because", "O"), ("of", "O"), ("cause", "C")),
    (("cause", "C"), ("led", "O"), ("to", "O"), ("effect", "E")),
    (("effect", "E"), ("was", "O"), ("triggered", "O"), ("by", "O"),
     ("cause", "C")),
)

_CLASSIFIER_POSITIVE_VOCAB = (
    "autopilot", "braking", "cruise", "lane", "assist", "sensor", "radar",
    "camera", "steering", "collision", "warning", "disengaged", "swerved",
    "highway", "suddenly", "emergency", "detection",
)
_CLASSIFIER_NEGATIVE_VOCAB = (
    "paint", "upholstery", "sunroof", "stereo", "cupholder", "trim",
    "carpet", "lighter", "antenna", "hubcap", "bumper", "sticker",
    "window", "seat", "mat", "visor", "console",
)


def _phrase(rng: random.Random, kind: str, heldout: bool) -> list[str]:
    if kind == "cause":
        systems = _HELDOUT_SYSTEMS if heldout else _TRAIN_SYSTEMS
        tails = _HELDOUT_CAUSE_TAILS if heldout else _TRAIN_CAUSE_TAILS
    else:
        systems = _HELDOUT_OBJECTS if heldout else _TRAIN_OBJECTS
        tails = _HELDOUT_EFFECT_TAILS if heldout else _TRAIN_EFFECT_TAILS
    return ["the", rng.choice(systems), *rng.choice(tails)]


def make_template_sentence(rng: random.Random, sentence_id: str,
                           heldout: bool = False) -> AnnotatedSentence:
    template = rng.choice(_TEMPLATES)
    tokens: list[str] = []
    tags: list[str] = []
    for slot, tag in template:
        if slot in ("cause", "effect"):
            phrase = _phrase(rng, slot, heldout)
            tokens.extend(phrase)
            tags.extend([tag] * len(phrase))
        else:
            tokens.append(slot)
            tags.append(tag)
    return AnnotatedSentence(sentence_id, tuple(tokens), tuple(tags),
                             source="synthetic")


def make_template_corpus(n: int, seed: int = 0,
                         heldout: bool = False,
                         id_prefix: str = "synth") -> list[AnnotatedSentence]:
    rng = random.Random(seed)
    return [make_template_sentence(rng, f"{id_prefix}{i}", heldout)
            for i in range(n)]


def make_capacity_corpora(
    train_n: int = 500, heldout_n: int = 100, seed: int = 7,
) -> tuple[list[AnnotatedSentence], list[AnnotatedSentence]]:
    """Training corpus plus a held-out corpus with unseen filler words."""
    train = make_template_corpus(train_n, seed=seed, heldout=False,
                                 id_prefix="train")
    heldout = make_template_corpus(heldout_n, seed=seed + 1, heldout=True,
                                   id_prefix="heldout")
    return train, heldout


def _sentence(rng: random.Random, vocab: Sequence[str]) -> str:
    n = rng.randint(6, 12)
    return " ".join(rng.choice(vocab) for _ in range(n))


def make_classifier_corpus(n_pos: int, n_neg: int,
                           seed: int = 0) -> list[LabeledExample]:
    """Separable labeled narratives: class vocabularies share no words."""
    rng = random.Random(seed)
    examples = [LabeledExample(_sentence(rng, _CLASSIFIER_POSITIVE_VOCAB), True)
                for _ in range(n_pos)]
    examples.extend(
        LabeledExample(_sentence(rng, _CLASSIFIER_NEGATIVE_VOCAB), False)
        for _ in range(n_neg))
    rng.shuffle(examples)
    return examples
