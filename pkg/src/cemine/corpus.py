"""Annotated cause/effect corpora: loading, merging, tag statistics, agreement.

Sentences carry one tag per token, drawn from the flat set {C, E, O}
(cause, effect, other).  The interchange format is a two-column
token<TAB>tag file; blank lines separate sentences and optional
``# id:`` / ``# source:`` comment lines precede a sentence.
"""

from __future__ import annotations

import string
from dataclasses import dataclass
from itertools import combinations
from typing import IO, Iterable, Iterator, Sequence

TAGS = ("C", "E", "O")
SOURCES = ("manual", "dmv", "semeval", "synthetic", "predicted")

_PUNCT_TABLE = str.maketrans({c: f" {c} " for c in string.punctuation})


class CorpusError(ValueError):
    """Invalid corpus contents (bad tags, mismatched raters, id collisions)."""


class CorpusFormatError(CorpusError):
    """Malformed annotation file; carries the offending line number."""

    def __init__(self, message: str, line_no: int):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


def tokenize(text: str) -> list[str]:
    """Lowercase and split raw narrative text, padding punctuation with spaces.

    Annotated corpora are assumed pre-tokenized; this rule is for raw
    complaint narratives only.
    """
    return text.lower().translate(_PUNCT_TABLE).split()


@dataclass(frozen=True)
class AnnotatedSentence:
    """A token sequence with a parallel C/E/O tag sequence."""

    sentence_id: str
    tokens: tuple[str, ...]
    tags: tuple[str, ...]
    source: str = "manual"

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))
        object.__setattr__(self, "tags", tuple(self.tags))
        if not self.tokens:
            raise CorpusError(f"sentence {self.sentence_id!r} has no tokens")
        if len(self.tokens) != len(self.tags):
            raise CorpusError(
                f"sentence {self.sentence_id!r}: {len(self.tokens)} tokens "
                f"vs {len(self.tags)} tags"
            )
        for tag in self.tags:
            if tag not in TAGS:
                raise CorpusError(f"sentence {self.sentence_id!r}: unknown tag {tag!r}")
        if self.source not in SOURCES:
            raise CorpusError(f"sentence {self.sentence_id!r}: unknown source {self.source!r}")

    def __len__(self) -> int:
        return len(self.tokens)


@dataclass(frozen=True)
class TagDistribution:
    """Token counts per tag over a corpus."""

    count_c: int = 0
    count_e: int = 0
    count_o: int = 0
    sentence_count: int = 0

    def __add__(self, other: "TagDistribution") -> "TagDistribution":
        return TagDistribution(
            self.count_c + other.count_c,
            self.count_e + other.count_e,
            self.count_o + other.count_o,
            self.sentence_count + other.sentence_count,
        )

    @property
    def total_tokens(self) -> int:
        return self.count_c + self.count_e + self.count_o


def load_annotations(
    lines: Iterable[str],
    default_source: str = "manual",
) -> list[AnnotatedSentence]:
    """Parse the two-column annotation format into sentences.

    Raises CorpusFormatError with a line number on unknown tags or rows
    that do not have exactly one token and one tag column.
    """
    sentences: list[AnnotatedSentence] = []
    tokens: list[str] = []
    tags: list[str] = []
    sent_id: str | None = None
    source = default_source
    auto_id = 0

    def flush(line_no: int):
        nonlocal tokens, tags, sent_id, source, auto_id
        if not tokens:
            sent_id, source = None, default_source
            return
        if sent_id is None:
            sent_id = f"s{auto_id}"
        auto_id += 1
        try:
            sentences.append(AnnotatedSentence(sent_id, tuple(tokens), tuple(tags), source))
        except CorpusError as exc:
            raise CorpusFormatError(str(exc), line_no) from exc
        tokens, tags = [], []
        sent_id, source = None, default_source

    line_no = 0
    for line_no, raw in enumerate(lines, start=1):
        line = raw.rstrip("\n").rstrip("\r")
        if not line.strip():
            flush(line_no)
            continue
        if not tokens and line.startswith("#"):
            body = line[1:].strip()
            if body.startswith("id:"):
                sent_id = body[len("id:"):].strip()
            elif body.startswith("source:"):
                source = body[len("source:"):].strip()
            # other comments are ignored
            continue
        cols = line.split("\t")
        if len(cols) != 2:
            raise CorpusFormatError(
                f"expected <token><TAB><tag>, got {len(cols)} column(s)", line_no
            )
        token, tag = cols[0], cols[1].strip()
        if not token:
            raise CorpusFormatError("empty token", line_no)
        if tag not in TAGS:
            raise CorpusFormatError(f"unknown tag {tag!r}", line_no)
        tokens.append(token)
        tags.append(tag)
    flush(line_no + 1)
    return sentences


def dump_annotations(sentences: Iterable[AnnotatedSentence], stream: IO[str]) -> None:
    """Write sentences in the canonical two-column format."""
    for sent in sentences:
        stream.write(f"# id: {sent.sentence_id}\n")
        stream.write(f"# source: {sent.source}\n")
        for token, tag in zip(sent.tokens, sent.tags):
            stream.write(f"{token}\t{tag}\n")
        stream.write("\n")


def read_annotation_file(path, default_source: str = "manual") -> list[AnnotatedSentence]:
    with open(path, encoding="utf-8") as fh:
        return load_annotations(fh, default_source=default_source)


def write_annotation_file(path, sentences: Iterable[AnnotatedSentence]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        dump_annotations(sentences, fh)


def merge_corpora(corpora: Sequence[Sequence[AnnotatedSentence]]) -> list[AnnotatedSentence]:
    """Concatenate corpora, namespacing sentence ids by source.

    Raises CorpusError when two sentences collide on (source, sentence_id).
    """
    seen: set[tuple[str, str]] = set()
    merged: list[AnnotatedSentence] = []
    for corpus in corpora:
        for sent in corpus:
            key = (sent.source, sent.sentence_id)
            if key in seen:
                raise CorpusError(f"duplicate sentence {sent.sentence_id!r} in source {sent.source!r}")
            seen.add(key)
            merged.append(
                AnnotatedSentence(
                    f"{sent.source}:{sent.sentence_id}", sent.tokens, sent.tags, sent.source
                )
            )
    return merged


def tag_distribution(corpus: Iterable[AnnotatedSentence]) -> TagDistribution:
    """Exact token counts per tag."""
    counts = {"C": 0, "E": 0, "O": 0}
    n = 0
    for sent in corpus:
        n += 1
        for tag in sent.tags:
            counts[tag] += 1
    return TagDistribution(counts["C"], counts["E"], counts["O"], n)


def _by_id(corpus: Sequence[AnnotatedSentence]) -> dict[str, AnnotatedSentence]:
    out = {}
    for sent in corpus:
        if sent.sentence_id in out:
            raise CorpusError(f"duplicate sentence id {sent.sentence_id!r}")
        out[sent.sentence_id] = sent
    return out


def inter_rater_agreement(
    a: Sequence[AnnotatedSentence], b: Sequence[AnnotatedSentence]
) -> float:
    """Token-level percent agreement between two annotations of one corpus.

    Both corpora must contain the same sentence ids with identical token
    lists; the result is micro-averaged over all token positions.
    """
    map_a, map_b = _by_id(a), _by_id(b)
    if set(map_a) != set(map_b):
        raise CorpusError("rater corpora cover different sentence ids")
    agree = 0
    total = 0
    for sid, sent_a in map_a.items():
        sent_b = map_b[sid]
        if sent_a.tokens != sent_b.tokens:
            raise CorpusError(f"sentence {sid!r}: token lists differ between raters")
        total += len(sent_a)
        agree += sum(x == y for x, y in zip(sent_a.tags, sent_b.tags))
    if total == 0:
        raise CorpusError("empty corpora")
    return agree / total


def pairwise_agreement(raters: Sequence[Sequence[AnnotatedSentence]]) -> float:
    """Mean token-level agreement over all rater pairs (>= 2 raters)."""
    if len(raters) < 2:
        raise CorpusError("need at least two raters")
    values = [inter_rater_agreement(a, b) for a, b in combinations(raters, 2)]
    return sum(values) / len(values)
