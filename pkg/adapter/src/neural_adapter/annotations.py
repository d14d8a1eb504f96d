"""Reader and writer for the annotation interchange format.

One sentence per block: optional ``# id:`` and ``# source:`` comment
lines, then one ``<token><TAB><tag>`` line per token, then a blank line.
Tags are C (cause), E (effect), or O (other). The format is the
interchange contract with the main pipeline, so both directions must be
byte-compatible with what it reads and writes.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import IO, Iterable, Iterator

TAGS = ("C", "E", "O")


class AnnotationError(ValueError):
    """Raised for malformed annotation files or sentences."""


@dataclass(frozen=True)
class Sentence:
    """A token sequence with a parallel C/E/O tag sequence."""

    sentence_id: str
    tokens: tuple[str, ...]
    tags: tuple[str, ...]
    source: str = "manual"

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))
        object.__setattr__(self, "tags", tuple(self.tags))
        if not self.tokens:
            raise AnnotationError(f"sentence {self.sentence_id!r} has no tokens")
        if len(self.tokens) != len(self.tags):
            raise AnnotationError(
                f"sentence {self.sentence_id!r}: {len(self.tokens)} tokens "
                f"vs {len(self.tags)} tags"
            )
        for tag in self.tags:
            if tag not in TAGS:
                raise AnnotationError(
                    f"sentence {self.sentence_id!r}: unknown tag {tag!r}"
                )


def parse_annotations(lines: Iterable[str]) -> list[Sentence]:
    """Parse annotation lines; sentences without an id get s1, s2, ..."""
    sentences: list[Sentence] = []
    pending_id: str | None = None
    pending_source: str | None = None
    tokens: list[str] = []
    tags: list[str] = []

    def flush(line_no: int) -> None:
        nonlocal pending_id, pending_source, tokens, tags
        if not tokens:
            if pending_id is not None or pending_source is not None:
                raise AnnotationError(
                    f"line {line_no}: comment block without token lines"
                )
            return
        sent_id = pending_id or f"s{len(sentences) + 1}"
        sentences.append(Sentence(sent_id, tuple(tokens), tuple(tags),
                                  source=pending_source or "manual"))
        pending_id = pending_source = None
        tokens = []
        tags = []

    line_no = 0
    for line_no, raw in enumerate(lines, start=1):
        line = raw.rstrip("\n").rstrip("\r")
        if not line.strip():
            flush(line_no)
            continue
        if line.startswith("#"):
            if tokens:
                raise AnnotationError(
                    f"line {line_no}: comment inside a sentence block"
                )
            body = line.lstrip("#").strip()
            if body.startswith("id:"):
                pending_id = body[len("id:"):].strip()
            elif body.startswith("source:"):
                pending_source = body[len("source:"):].strip()
            # other comments are ignored
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise AnnotationError(
                f"line {line_no}: expected 'token<TAB>tag', got {line!r}"
            )
        token, tag = parts
        if not token:
            raise AnnotationError(f"line {line_no}: empty token")
        if tag not in TAGS:
            raise AnnotationError(f"line {line_no}: unknown tag {tag!r}")
        tokens.append(token)
        tags.append(tag)
    flush(line_no + 1)
    return sentences


def read_annotation_file(path) -> list[Sentence]:
    with open(path, encoding="utf-8") as fh:
        sentences = parse_annotations(fh)
    if not sentences:
        raise AnnotationError(f"no sentences in {path}")
    return sentences


def write_annotations(stream: IO[str], sentences: Iterable[Sentence]) -> None:
    for sent in sentences:
        stream.write(f"# id: {sent.sentence_id}\n")
        stream.write(f"# source: {sent.source}\n")
        for token, tag in zip(sent.tokens, sent.tags):
            stream.write(f"{token}\t{tag}\n")
        stream.write("\n")


def write_annotation_file(path, sentences: Iterable[Sentence]) -> None:
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        write_annotations(fh, sentences)


def iter_token_lists(sentences: Iterable[Sentence]) -> Iterator[list[str]]:
    for sent in sentences:
        yield list(sent.tokens)
