"""Hashed-feature logistic classifier: featurization, training, validation."""

import math
import random

import numpy as np
import pytest

from cemine.classifier import (
    ClassifierError,
    LabeledExample,
    LinearClassifier,
    cross_validate,
    featurize,
    load_classifier,
    logistic_loss_and_gradient,
    predict,
    save_classifier,
    stratified_kfold,
    subsample_negatives,
    train_classifier,
)
from cemine.metrics import ConfusionCounts, pool_counts, report_from_counts
from oracles import featurize_oracle

TEXT_POOL = [
    "the autopilot swerved into the median without warning",
    "brake pedal felt soft after the recall work",
    "radio display flickers when it rains",
    "adaptive cruise control slammed the brakes for no reason",
    "the dealership could not reproduce the rattle",
    "forward collision alert went off on an empty road",
    "paint is peeling on the hood",
    "lane keep assist pulled the car toward the shoulder",
]


def test_featurize_matches_dictionary_oracle():
    rng = random.Random(23)
    for _ in range(50):
        text = " ".join(rng.choice(TEXT_POOL).split()[: rng.randint(1, 9)])
        for dimension in (2 ** 6, 2 ** 10, 2 ** 18):
            got = featurize(text, dimension)
            assert got.dimension == dimension
            want = featurize_oracle(text, dimension)
            assert got.weights.keys() == want.keys()
            for idx, w in want.items():
                assert got.weights[idx] == pytest.approx(w, abs=1e-12)


def test_featurize_counts_then_normalizes():
    # tokens: brake, brake; bigram: "brake brake" -> counts (2, 1), norm √5
    vec = featurize("brake brake", 2 ** 16)
    values = sorted(vec.weights.values(), reverse=True)
    assert values == [pytest.approx(2 / math.sqrt(5)),
                      pytest.approx(1 / math.sqrt(5))]
    assert sum(v * v for v in vec.weights.values()) == pytest.approx(1.0)
    assert featurize("", 2 ** 16).weights == {}


@pytest.mark.parametrize("dimension", [0, -4, 3, 100, 2 ** 10 + 1])
def test_featurize_rejects_non_power_of_two(dimension):
    with pytest.raises(ClassifierError, match="power of two"):
        featurize("text", dimension)


def test_loss_gradient_matches_central_differences():
    dim = 64
    rng = np.random.default_rng(5)
    weights = rng.normal(0, 0.5, size=dim)
    bias = 0.3
    vectors = [featurize(t, dim) for t in TEXT_POOL]
    labels = [1.0, 0.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0]
    for l2 in (0.0, 1e-2):
        loss, grad_w, grad_b = logistic_loss_and_gradient(
            weights, bias, vectors, labels, l2)
        assert math.isfinite(loss)
        eps = 1e-6
        touched = sorted({i for v in vectors for i in v.weights})
        for i in touched[:20]:
            bumped = weights.copy()
            bumped[i] += eps
            up, _, _ = logistic_loss_and_gradient(bumped, bias, vectors, labels, l2)
            bumped[i] -= 2 * eps
            down, _, _ = logistic_loss_and_gradient(bumped, bias, vectors, labels, l2)
            assert grad_w[i] == pytest.approx((up - down) / (2 * eps), abs=1e-6)
        up, _, _ = logistic_loss_and_gradient(weights, bias + eps, vectors, labels, l2)
        down, _, _ = logistic_loss_and_gradient(weights, bias - eps, vectors, labels, l2)
        assert grad_b == pytest.approx((up - down) / (2 * eps), abs=1e-6)
    with pytest.raises(ClassifierError, match="empty batch"):
        logistic_loss_and_gradient(weights, bias, [], [], 0.0)


def _toy_dataset(n_pos=12, n_neg=12):
    data = []
    for i in range(n_pos):
        data.append(LabeledExample(f"autopilot failure case {i}", True))
    for i in range(n_neg):
        data.append(LabeledExample(f"squeaky door hinge item {i}", False))
    return data


def test_training_is_seed_deterministic():
    data = _toy_dataset()
    a = train_classifier(data, seed=9, epochs=3, dimension=2 ** 10)
    b = train_classifier(data, seed=9, epochs=3, dimension=2 ** 10)
    assert np.array_equal(a.weights, b.weights)
    assert a.bias == b.bias
    c = train_classifier(data, seed=10, epochs=3, dimension=2 ** 10)
    assert not np.array_equal(a.weights, c.weights)


def test_training_rejects_degenerate_data():
    with pytest.raises(ClassifierError, match="empty"):
        train_classifier([])
    with pytest.raises(ClassifierError, match="one class"):
        train_classifier([LabeledExample("a", True), LabeledExample("b", True)])


def test_training_fits_separable_data():
    data = _toy_dataset()
    model = train_classifier(data, seed=1, epochs=6, dimension=2 ** 12)
    for ex in data:
        prob, label = predict(model, ex.text)
        assert label == ex.label
        assert 0.0 <= prob <= 1.0
    assert model.metadata["seed"] == 1


def test_training_reduces_loss_on_tiny_problem():
    data = [LabeledExample("good day sunshine", True),
            LabeledExample("bad night storm", False)]
    dim = 2 ** 8
    vectors = [featurize(ex.text, dim) for ex in data]
    labels = [1.0, 0.0]
    start, _, _ = logistic_loss_and_gradient(np.zeros(dim), 0.0, vectors, labels, 0.0)
    losses = [start]
    for epochs in (1, 2, 4, 8):
        m = train_classifier(data, seed=0, epochs=epochs, learning_rate=0.01,
                             l2=0.0, batch_size=2, dimension=dim)
        loss, _, _ = logistic_loss_and_gradient(m.weights, m.bias, vectors, labels, 0.0)
        losses.append(loss)
    assert all(b < a for a, b in zip(losses, losses[1:]))


def test_stratified_kfold_partitions_and_balances():
    labels = [True] * 17 + [False] * 31
    k = 5
    folds = stratified_kfold(labels, k, seed=3)
    flat = [i for fold in folds for i in fold]
    assert sorted(flat) == list(range(len(labels)))
    pos_counts = [sum(labels[i] for i in fold) for fold in folds]
    neg_counts = [sum(not labels[i] for i in fold) for fold in folds]
    assert max(pos_counts) - min(pos_counts) <= 1
    assert max(neg_counts) - min(neg_counts) <= 1
    assert folds == stratified_kfold(labels, k, seed=3)
    assert folds != stratified_kfold(labels, k, seed=4)


def test_stratified_kfold_argument_errors():
    with pytest.raises(ClassifierError, match="at least 2"):
        stratified_kfold([True, False], 1)
    with pytest.raises(ClassifierError, match="fewer than k"):
        stratified_kfold([True, True, False], 3)


def test_subsample_negatives_counts_and_order():
    data = _toy_dataset(n_pos=3, n_neg=10)
    out = subsample_negatives(data, ratio=2, seed=7)
    assert sum(ex.label for ex in out) == 3
    assert sum(not ex.label for ex in out) == 6
    # original dataset order is preserved
    indexes = [data.index(ex) for ex in out]
    assert indexes == sorted(indexes)
    assert out == subsample_negatives(data, ratio=2, seed=7)
    assert out != subsample_negatives(data, ratio=2, seed=8)


def test_subsample_negatives_errors():
    data = _toy_dataset(n_pos=3, n_neg=5)
    with pytest.raises(ClassifierError, match="only 5 available"):
        subsample_negatives(data, ratio=2)
    with pytest.raises(ClassifierError, match="positive integer"):
        subsample_negatives(data, ratio=0)


def test_cross_validate_shape_and_pooling():
    data = _toy_dataset(n_pos=9, n_neg=9)
    result = cross_validate(data, k=3, seed=2, epochs=3, dimension=2 ** 10)
    assert set(result) == {"folds", "pooled", "macro", "k", "seed",
                           "dataset_size"}
    assert result["k"] == 3 and result["seed"] == 2
    assert result["dataset_size"] == 18
    assert len(result["folds"]) == 3
    counts = [ConfusionCounts(**fold["counts"]) for fold in result["folds"]]
    # every example appears in exactly one test fold
    assert sum(c.true_positive + c.false_positive + c.false_negative
               + c.true_negative for c in counts) == 18
    pooled = report_from_counts(pool_counts(counts))
    assert result["pooled"] == pooled.to_dict()
    assert set(result["macro"]) == {"precision", "recall", "f1"}


def test_save_load_round_trip(tmp_path):
    data = _toy_dataset()
    model = train_classifier(data, seed=4, epochs=2, dimension=2 ** 10)
    path = tmp_path / "clf.json"
    save_classifier(model, path)
    loaded = load_classifier(path)
    assert np.array_equal(loaded.weights, model.weights)
    assert loaded.bias == model.bias
    assert loaded.dimension == model.dimension
    assert loaded.metadata == model.metadata
    for ex in data[:4]:
        assert predict(loaded, ex.text) == predict(model, ex.text)


def test_load_rejects_foreign_files(tmp_path):
    path = tmp_path / "other.json"
    path.write_text('{"format": "something-else", "version": 1}')
    with pytest.raises(ClassifierError, match="not a classifier"):
        load_classifier(path)
    path.write_text('{"format": "cemine-linear-classifier", "version": 99, '
                    '"dimension": 4, "bias": 0, "weights": []}')
    with pytest.raises(ClassifierError, match="version"):
        load_classifier(path)


def test_predict_uses_model_dimension():
    model = LinearClassifier(weights=np.zeros(2 ** 6), bias=0.0,
                             dimension=2 ** 6)
    prob, label = predict(model, "anything at all")
    assert prob == pytest.approx(0.5)
    assert label is True
