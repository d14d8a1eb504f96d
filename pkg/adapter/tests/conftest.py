"""Shared fixtures: a tiny annotated corpus and a trained bundle."""

import pytest

from neural_adapter.annotations import Sentence, write_annotation_file
from neural_adapter.model import save_bundle
from neural_adapter.training import finetune

TINY_SENTENCES = [
    Sentence("t1", ("the", "sensor", "failed", "so", "the", "car",
                    "stalled"),
             ("O", "C", "C", "O", "E", "E", "E")),
    Sentence("t2", ("due", "to", "the", "radar", "fault", ",", "the",
                    "truck", "swerved"),
             ("O", "O", "C", "C", "C", "O", "E", "E", "E")),
    Sentence("t3", ("the", "camera", "froze", "causing", "the", "brakes",
                    "to", "lock"),
             ("C", "C", "C", "O", "E", "E", "E", "E")),
    Sentence("t4", ("the", "display", "flickered",),
             ("C", "C", "C")),
    Sentence("t5", ("the", "wheel", "shook", "because", "of", "the",
                    "module", "error"),
             ("E", "E", "E", "O", "O", "C", "C", "C")),
    Sentence("t6", ("the", "computer", "crashed", "and", "the", "engine",
                    "stopped"),
             ("C", "C", "C", "O", "E", "E", "E")),
    Sentence("t7", ("nothing", "happened", "today"),
             ("O", "O", "O")),
    Sentence("t8", ("the", "autopilot", "disengaged", "so", "the",
                    "vehicle", "drifted"),
             ("O", "C", "C", "O", "E", "E", "E")),
]


@pytest.fixture(scope="session")
def tiny_corpus():
    return list(TINY_SENTENCES)


@pytest.fixture(scope="session")
def tiny_corpus_file(tmp_path_factory, tiny_corpus):
    path = tmp_path_factory.mktemp("corpus") / "tiny.tsv"
    write_annotation_file(path, tiny_corpus)
    return path


@pytest.fixture(scope="session")
def trained_bundle(tiny_corpus):
    bundle, _ = finetune(tiny_corpus, seed=11, epochs=20,
                         learning_rate=3e-3, batch_size=4, merges=32,
                         subword_dropout=0.2)
    return bundle


@pytest.fixture(scope="session")
def model_dir(tmp_path_factory, trained_bundle):
    path = tmp_path_factory.mktemp("model") / "bundle"
    save_bundle(path, trained_bundle)
    return path
