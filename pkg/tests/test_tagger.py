"""Linear-chain CRF tagger: inference vs brute-force enumeration, spans."""

import math
import random

import numpy as np
import pytest

from cemine.corpus import AnnotatedSentence
from cemine.tagger import (
    LABELS,
    CauseEffectInstance,
    CrfModel,
    Span,
    TaggerError,
    decode_spans,
    evaluate_tagging,
    forward_backward,
    instance_from_json,
    instance_to_json,
    load_tagger,
    nll_and_gradient,
    save_tagger,
    score_sequence,
    spans_to_tags,
    tag_text,
    token_features,
    train_tagger,
    viterbi,
)
from oracles import enumerate_posterior, path_score, random_crf_case


def test_token_features_golden_templates():
    tokens = ["The", "brakes", "7", ","]
    assert token_features(tokens, 0) == [
        "w=The", "lw=the", "p1=t", "s1=e", "p2=th", "s2=he", "p3=the",
        "s3=the", "prev=<s>", "next=brakes", "first", "bias",
    ]
    assert token_features(tokens, 2) == [
        "w=7", "lw=7", "p1=7", "s1=7", "isdigit", "prev=brakes", "next=,",
        "bias",
    ]
    assert token_features(tokens, 3) == [
        "w=,", "lw=,", "p1=,", "s1=,", "ispunct", "prev=7", "next=</s>",
        "last", "bias",
    ]


def _tiny_model():
    return CrfModel.from_weights(
        emission_weights={
            ("w=alpha", "C"): 1.5,
            ("bias", "E"): 0.25,
            ("next=beta", "C"): -0.5,
        },
        transitions={("C", "E"): 0.7},
        start={"C": 0.1},
        stop={"E": 0.2},
    )


def test_from_weights_builds_sorted_feature_table():
    model = _tiny_model()
    assert model.features == ("bias", "next=beta", "w=alpha")
    assert model.emission[model.feature_index["w=alpha"], 0] == 1.5
    assert model.emission[model.feature_index["bias"], 1] == 0.25
    assert model.transitions[0, 1] == 0.7
    assert model.start[0] == 0.1 and model.stop[1] == 0.2


def test_model_rejects_nonfinite_weights():
    with pytest.raises(TaggerError, match="finite"):
        CrfModel.from_weights(emission_weights={("bias", "C"): math.inf})
    with pytest.raises(TaggerError, match="finite"):
        CrfModel.from_weights(start={"C": math.nan})


def test_score_sequence_hand_computed():
    model = _tiny_model()
    # start[C] + em(alpha,C) + trans[C,E] + em(beta,E) + stop[E]
    # = 0.1 + (1.5 - 0.5) + 0.7 + 0.25 + 0.2
    got = score_sequence(model, ["alpha", "beta"], ("C", "E"))
    assert got == pytest.approx(2.25)
    # unseen features fall out of the sum entirely
    assert score_sequence(model, ["gamma"], ("O",)) == pytest.approx(0.0)
    with pytest.raises(TaggerError, match="mismatch"):
        score_sequence(model, ["alpha"], ("C", "E"))
    with pytest.raises(TaggerError, match="unknown tag"):
        score_sequence(model, ["alpha"], ("Q",))


def test_inference_matches_enumeration_on_random_models():
    rng = random.Random(99)
    for _ in range(20):
        tokens, model = random_crf_case(rng, max_len=6)
        want_z, want_unary, want_pair, want_peak = enumerate_posterior(
            model, tokens)
        post = forward_backward(model, tokens)
        assert post.log_partition == pytest.approx(want_z, abs=1e-9)
        assert post.backward_log_partition == pytest.approx(want_z, abs=1e-9)
        np.testing.assert_allclose(post.marginals, want_unary, atol=1e-11)
        np.testing.assert_allclose(post.pairwise, want_pair, atol=1e-11)
        path = viterbi(model, tokens)
        assert score_sequence(model, tokens, path) == pytest.approx(
            want_peak, abs=1e-9)


def test_marginals_are_proper_distributions():
    rng = random.Random(3)
    tokens, model = random_crf_case(rng, max_len=7)
    post = forward_backward(model, tokens)
    n = len(tokens)
    np.testing.assert_allclose(post.marginals.sum(axis=1), np.ones(n),
                               atol=1e-12)
    for t in range(n - 1):
        np.testing.assert_allclose(post.pairwise[t].sum(axis=1),
                                   post.marginals[t], atol=1e-12)
        np.testing.assert_allclose(post.pairwise[t].sum(axis=0),
                                   post.marginals[t + 1], atol=1e-12)


def test_zero_model_ties_break_to_first_label():
    model = CrfModel.from_weights()
    assert viterbi(model, ["a", "b", "c"]) == ("C", "C", "C")
    with pytest.raises(TaggerError, match="empty"):
        viterbi(model, [])
    with pytest.raises(TaggerError, match="empty"):
        forward_backward(model, [])


def test_nll_gradient_matches_finite_differences():
    corpus = [
        AnnotatedSentence("a", ("the", "sensor", "failed"), ("O", "C", "C")),
        AnnotatedSentence("b", ("car", "swerved"), ("O", "E")),
    ]
    rng = random.Random(12)
    _, model = random_crf_case(rng, max_len=3)
    for l2 in (0.0, 1e-2):
        loss, grad = nll_and_gradient(model, corpus, l2=l2)
        assert math.isfinite(loss) and loss > 0
        eps = 1e-6
        for arr, g in ((model.transitions, grad.transitions),
                       (model.start, grad.start),
                       (model.stop, grad.stop),
                       (model.emission, grad.emission)):
            flat = arr.reshape(-1)
            gflat = g.reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + eps
                up, _ = nll_and_gradient(model, corpus, l2=l2)
                flat[i] = orig - eps
                down, _ = nll_and_gradient(model, corpus, l2=l2)
                flat[i] = orig
                assert gflat[i] == pytest.approx((up - down) / (2 * eps),
                                                 abs=1e-5)
    with pytest.raises(TaggerError, match="empty batch"):
        nll_and_gradient(model, [])


def _small_corpus():
    sentences = []
    for i in range(6):
        sentences.append(AnnotatedSentence(
            f"c{i}", ("the", "sensor", "failed", "and", "we", "crashed"),
            ("O", "C", "C", "O", "E", "E")))
        sentences.append(AnnotatedSentence(
            f"o{i}", ("nothing", "went", "wrong", "today"),
            ("O", "O", "O", "O")))
    return sentences


def test_training_is_deterministic_and_fits_small_corpus():
    corpus = _small_corpus()
    a = train_tagger(corpus, seed=2, epochs=8)
    b = train_tagger(corpus, seed=2, epochs=8)
    assert np.array_equal(a.emission, b.emission)
    assert np.array_equal(a.transitions, b.transitions)
    assert a.metadata["epoch_losses"] == b.metadata["epoch_losses"]
    losses = a.metadata["epoch_losses"]
    assert len(losses) == 8 and losses[-1] < losses[0]
    for sent in corpus:
        assert viterbi(a, sent.tokens) == sent.tags
    with pytest.raises(TaggerError, match="empty training corpus"):
        train_tagger([])


def test_tag_text_tokenizes_with_corpus_rule():
    model = train_tagger(_small_corpus(), seed=2, epochs=6)
    tokens, tags = tag_text(model, "The SENSOR failed!")
    assert tokens == ("the", "sensor", "failed", "!")
    assert len(tags) == 4 and set(tags) <= set(LABELS)
    assert tag_text(model, "   ") == ((), ())


def test_decode_spans_maximal_runs():
    tokens = ("a", "b", "c", "d", "e", "f")
    tags = ("C", "C", "O", "E", "O", "C")
    causes, effects = decode_spans(tokens, tags)
    assert causes == [Span(0, 2, "a b"), Span(5, 6, "f")]
    assert effects == [Span(3, 4, "d")]
    assert decode_spans(tokens, ("O",) * 6) == ([], [])
    with pytest.raises(TaggerError, match="mismatch"):
        decode_spans(tokens, ("C",))
    with pytest.raises(TaggerError, match="unknown tag"):
        decode_spans(("a",), ("B",))


def test_spans_to_tags_inverts_decode():
    rng = random.Random(31)
    for _ in range(200):
        n = rng.randint(1, 12)
        tags = tuple(rng.choice(LABELS) for _ in range(n))
        tokens = tuple(f"t{i}" for i in range(n))
        causes, effects = decode_spans(tokens, tags)
        assert spans_to_tags(n, causes, effects) == tags


def test_spans_to_tags_rejects_bad_spans():
    with pytest.raises(TaggerError, match="exceeds length"):
        spans_to_tags(2, [Span(1, 3, "x y")], [])
    with pytest.raises(TaggerError, match="overlapping"):
        spans_to_tags(4, [Span(0, 2, "a b")], [Span(1, 3, "b c")])
    with pytest.raises(TaggerError, match="invalid span"):
        Span(2, 2, "")
    with pytest.raises(TaggerError, match="invalid span"):
        Span(-1, 1, "a")


def test_instance_json_round_trip():
    inst = CauseEffectInstance.from_tags(
        "77", ("the", "sensor", "failed", "so", "we", "crashed"),
        ("O", "C", "C", "O", "E", "E"), adas_category="Autopilot")
    assert inst.cause_spans == (Span(1, 3, "sensor failed"),)
    assert inst.effect_spans == (Span(4, 6, "we crashed"),)
    again = instance_from_json(instance_to_json(inst))
    assert again == inst

    tampered = instance_to_json(inst).replace('"start": 1', '"start": 0')
    with pytest.raises(TaggerError, match="inconsistent"):
        instance_from_json(tampered)


def test_evaluate_tagging_hand_counts():
    gold = [AnnotatedSentence("s", ("a", "b", "c", "d"),
                              ("C", "C", "E", "O"))]
    pred = [AnnotatedSentence("s", ("a", "b", "c", "d"),
                              ("C", "O", "E", "E"), source="predicted")]
    result = evaluate_tagging(pred, gold)
    assert result["token_count"] == 4
    assert result["evaluation_loss"] is None
    c_report = result["per_label"]["C"]
    assert c_report["counts"] == {"true_positive": 1, "false_positive": 0,
                                  "false_negative": 1, "true_negative": 2}
    assert c_report["precision"] == 1.0 and c_report["recall"] == 0.5
    e_report = result["per_label"]["E"]
    assert e_report["precision"] == 0.5 and e_report["recall"] == 1.0
    assert result["macro"]["f1"] == pytest.approx(
        (2 / 3 + 2 / 3 + 0.0) / 3)

    model = CrfModel.from_weights()
    with_loss = evaluate_tagging(pred, gold, model=model)
    # uniform model: every tag has marginal 1/3
    assert with_loss["evaluation_loss"] == pytest.approx(math.log(3))

    with pytest.raises(TaggerError, match="size mismatch"):
        evaluate_tagging(pred, [])
    other = [AnnotatedSentence("s", ("x", "b", "c", "d"),
                               ("C", "C", "E", "O"))]
    with pytest.raises(TaggerError, match="token mismatch"):
        evaluate_tagging(pred, other)


def test_save_load_round_trip(tmp_path):
    model = train_tagger(_small_corpus(), seed=5, epochs=3)
    path = tmp_path / "tagger.json"
    save_tagger(model, path)
    loaded = load_tagger(path)
    assert loaded.features == model.features
    np.testing.assert_array_equal(loaded.emission, model.emission)
    np.testing.assert_array_equal(loaded.transitions, model.transitions)
    np.testing.assert_array_equal(loaded.start, model.start)
    np.testing.assert_array_equal(loaded.stop, model.stop)
    assert loaded.metadata == model.metadata
    tokens = ("the", "sensor", "failed")
    assert viterbi(loaded, tokens) == viterbi(model, tokens)


def test_load_rejects_foreign_files(tmp_path):
    import json

    path = tmp_path / "bad.json"
    path.write_text('{"format": "other", "version": 1}')
    with pytest.raises(TaggerError, match="not a tagger"):
        load_tagger(path)

    model = CrfModel.from_weights(emission_weights={("bias", "C"): 1.0})
    good = tmp_path / "good.json"
    save_tagger(model, good)
    payload = json.loads(good.read_text())
    payload["version"] = 2
    bad = tmp_path / "v2.json"
    bad.write_text(json.dumps(payload))
    with pytest.raises(TaggerError, match="version"):
        load_tagger(bad)
    payload["version"] = 1
    payload["labels"] = ["C", "O", "E"]
    bad.write_text(json.dumps(payload))
    with pytest.raises(TaggerError, match="label order"):
        load_tagger(bad)


def test_random_paths_score_consistently():
    rng = random.Random(7)
    for _ in range(10):
        tokens, model = random_crf_case(rng, max_len=5)
        idx = [rng.randrange(3) for _ in tokens]
        tags = tuple(LABELS[i] for i in idx)
        assert score_sequence(model, tokens, tags) == pytest.approx(
            path_score(model, tokens, idx), abs=1e-10)
