"""Annotation interchange format: parse, write, and pipeline round trips."""

import io
import json
import subprocess

import pytest

from neural_adapter.annotations import (
    AnnotationError,
    Sentence,
    parse_annotations,
    read_annotation_file,
    write_annotation_file,
    write_annotations,
)

GOLDEN = (
    "# id: demo-3\n"
    "# source: manual\n"
    "the\tO\n"
    "autopilot\tC\n"
    "failed\tC\n"
    "and\tO\n"
    "we\tE\n"
    "crashed\tE\n"
    "\n"
)


def test_parses_golden_block():
    sentences = parse_annotations(io.StringIO(GOLDEN))
    assert len(sentences) == 1
    sent = sentences[0]
    assert sent.sentence_id == "demo-3"
    assert sent.source == "manual"
    assert sent.tokens == ("the", "autopilot", "failed", "and", "we",
                           "crashed")
    assert sent.tags == ("O", "C", "C", "O", "E", "E")


def test_writer_emits_golden_bytes():
    out = io.StringIO()
    write_annotations(out, [Sentence(
        "demo-3", ("the", "autopilot", "failed", "and", "we", "crashed"),
        ("O", "C", "C", "O", "E", "E"))])
    assert out.getvalue() == GOLDEN


def test_round_trip_through_file(tmp_path, tiny_corpus):
    path = tmp_path / "corpus.tsv"
    write_annotation_file(path, tiny_corpus)
    assert read_annotation_file(path) == tiny_corpus


def test_missing_ids_are_numbered():
    text = "a\tO\nb\tC\n\nc\tE\n\n"
    sentences = parse_annotations(text.splitlines())
    assert [s.sentence_id for s in sentences] == ["s1", "s2"]
    assert sentences[1].tokens == ("c",)


def test_final_sentence_without_trailing_blank_line():
    sentences = parse_annotations(["x\tC", "y\tE"])
    assert len(sentences) == 1
    assert sentences[0].tags == ("C", "E")


def test_unknown_comments_are_ignored():
    sentences = parse_annotations(["# reviewed: yes", "x\tO", ""])
    assert sentences[0].sentence_id == "s1"


@pytest.mark.parametrize("lines, message", [
    (["x\tQ"], "unknown tag"),
    (["token with no tab"], "expected"),
    (["\tO"], "empty token"),
    (["a\tO", "# id: late", "b\tO"], "comment inside"),
    (["# id: orphan", ""], "comment block without token"),
])
def test_malformed_input_is_rejected(lines, message):
    with pytest.raises(AnnotationError, match=message):
        parse_annotations(lines)


def test_sentence_invariants():
    with pytest.raises(AnnotationError, match="no tokens"):
        Sentence("x", (), ())
    with pytest.raises(AnnotationError, match="tokens"):
        Sentence("x", ("a",), ("O", "O"))
    with pytest.raises(AnnotationError, match="unknown tag"):
        Sentence("x", ("a",), ("B",))


def test_empty_file_is_rejected(tmp_path):
    path = tmp_path / "empty.tsv"
    path.write_text("\n\n")
    with pytest.raises(AnnotationError, match="no sentences"):
        read_annotation_file(path)


def test_pipeline_cli_accepts_our_files(tmp_path, tiny_corpus_file):
    """The main pipeline must parse what this package writes."""
    proc = subprocess.run(
        ["cemine", "agreement", str(tiny_corpus_file),
         str(tiny_corpus_file)],
        capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    result = json.loads(proc.stdout)
    assert result["agreement"] == 1.0
    assert result["raters"] == 2


def test_our_reader_accepts_pipeline_files(tmp_path):
    """And the reverse: parse what the pipeline writes."""
    out_file = tmp_path / "synth.tsv"
    proc = subprocess.run(
        ["cemine", "synth-corpus", "--kind", "template", "-n", "5",
         "--seed", "3", "--out-file", str(out_file)],
        capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    sentences = read_annotation_file(out_file)
    assert len(sentences) == 5
    for sent in sentences:
        assert len(sent.tokens) == len(sent.tags)
        assert set(sent.tags) <= {"C", "E", "O"}
