"""Model forward contract, artifact round trips, alignment invariance."""

import json
import random

import pytest
import torch

from neural_adapter.annotations import Sentence
from neural_adapter.model import (
    LABELS,
    ModelError,
    load_bundle,
    new_bundle,
    save_bundle,
)
from neural_adapter.subwords import SubwordVocab
from neural_adapter.training import _batch_tensors, predict_tags


def test_forward_shapes(trained_bundle):
    sents = [Sentence("a", ("the", "sensor", "failed"), ("O", "C", "C")),
             Sentence("b", ("the", "car",), ("E", "E"))]
    ids, word_ids, pad_mask, labels = _batch_tensors(
        trained_bundle.vocab, sents)
    tag_logits, cls_logits = trained_bundle.model(ids, word_ids, pad_mask)
    assert tag_logits.shape == (*ids.shape, len(LABELS))
    assert cls_logits.shape == (2, 2)
    assert labels.shape == ids.shape


def test_padding_does_not_change_predictions(trained_bundle):
    short = Sentence("s", ("the", "car",), ("E", "E"))
    long = Sentence("l", ("due", "to", "the", "radar", "fault", ",",
                          "the", "truck", "swerved"),
                    ("O", "O", "C", "C", "C", "O", "E", "E", "E"))
    model, vocab = trained_bundle.model, trained_bundle.vocab
    model.eval()
    with torch.no_grad():
        alone = model(*_batch_tensors(vocab, [short])[:3])[0][0]
        batch_ids, batch_words, batch_mask, _ = _batch_tensors(
            vocab, [short, long])
        padded = model(batch_ids, batch_words, batch_mask)[0][0]
    n = alone.shape[0]
    torch.testing.assert_close(padded[:n], alone, rtol=1e-5, atol=1e-5)


def test_word_count_invariance_under_any_tokenization(trained_bundle):
    rng = random.Random(4)
    alphabet = "abcdefghijklmnopqrstuvwxyz0123456789,.éΩ"
    for _ in range(25):
        words = ["".join(rng.choice(alphabet)
                         for _ in range(rng.randrange(1, 12)))
                 for _ in range(rng.randrange(1, 15))]
        tags = predict_tags(trained_bundle, words)
        assert len(tags) == len(words)
        assert set(tags) <= set(LABELS)


def test_save_load_round_trip(tmp_path, trained_bundle):
    target = tmp_path / "saved"
    save_bundle(target, trained_bundle)
    clone = load_bundle(target)
    tokens = ("the", "sensor", "failed", "so", "the", "car", "stalled")
    assert predict_tags(clone, tokens) == predict_tags(trained_bundle,
                                                       tokens)
    assert clone.config == trained_bundle.config


def test_load_rejects_missing_and_inconsistent_artifacts(tmp_path,
                                                         trained_bundle):
    with pytest.raises(ModelError, match="missing model artifact"):
        load_bundle(tmp_path / "nowhere")
    target = tmp_path / "tampered"
    save_bundle(target, trained_bundle)
    config = json.loads((target / "config.json").read_text())
    config["vocab_size"] += 1
    (target / "config.json").write_text(json.dumps(config))
    with pytest.raises(ModelError, match="vocab_size"):
        load_bundle(target)
    (target / "config.json").write_text(json.dumps({"surprise": 1}))
    with pytest.raises(ModelError, match="malformed model config"):
        load_bundle(target)


def test_new_bundle_is_seeded():
    vocab = SubwordVocab.train(["alpha", "beta", "gamma"] * 4, merges=8)
    a = new_bundle(vocab, seed=5)
    b = new_bundle(vocab, seed=5)
    for pa, pb in zip(a.model.parameters(), b.model.parameters()):
        torch.testing.assert_close(pa, pb, rtol=0, atol=0)
