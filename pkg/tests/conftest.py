"""Shared fixtures: demo data paths, quick trained models, CLI runner."""

from __future__ import annotations

import logging
import shlex
import sys
from pathlib import Path

import pytest
from importlib import resources

from cemine import classifier as clf
from cemine import cli
from cemine import corpus as corpus_mod
from cemine import synthetic as synth_mod
from cemine import tagger as tagger_mod


@pytest.fixture(scope="session")
def demo_dir() -> Path:
    return Path(str(resources.files("cemine"))) / "data" / "demo"


@pytest.fixture(scope="session")
def demo_annotations(demo_dir) -> list[corpus_mod.AnnotatedSentence]:
    return corpus_mod.read_annotation_file(demo_dir / "annotations.tsv")


@pytest.fixture(scope="session")
def quick_tagger_path(tmp_path_factory, demo_annotations) -> Path:
    """A small saved CRF model; enough structure for protocol round trips."""
    model = tagger_mod.train_tagger(demo_annotations, seed=3, epochs=4)
    path = tmp_path_factory.mktemp("models") / "tagger.json"
    tagger_mod.save_tagger(model, path)
    return path


@pytest.fixture(scope="session")
def quick_classifier_path(tmp_path_factory) -> Path:
    dataset = synth_mod.make_classifier_corpus(30, 30, seed=5)
    model = clf.train_classifier(dataset, seed=5, epochs=4, dimension=2 ** 12)
    path = tmp_path_factory.mktemp("models") / "classifier.json"
    clf.save_classifier(model, path)
    return path


@pytest.fixture(scope="session")
def ref_adapter_cmd(quick_tagger_path) -> str:
    """Shell command string serving the reference adapter over stdio."""
    return (f"{shlex.quote(sys.executable)} -m cemine.ref_adapter "
            f"--tagger-model {shlex.quote(str(quick_tagger_path))}")


@pytest.fixture(scope="session")
def ref_adapter_classify_cmd(quick_tagger_path, quick_classifier_path) -> str:
    return (f"{shlex.quote(sys.executable)} -m cemine.ref_adapter "
            f"--tagger-model {shlex.quote(str(quick_tagger_path))} "
            f"--classifier-model {shlex.quote(str(quick_classifier_path))}")


@pytest.fixture
def run_cli(capsys):
    """Invoke the CLI in process; returns (exit_code, stdout, stderr)."""

    def run(*argv: str):
        # basicConfig pins the stream it saw first; drop handlers so each
        # invocation logs into the current capture, not a closed one
        root = logging.getLogger()
        for handler in root.handlers[:]:
            root.removeHandler(handler)
        code = cli.main(list(argv))
        captured = capsys.readouterr()
        return code, captured.out, captured.err

    return run
