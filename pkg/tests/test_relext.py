"""Relation-extraction CNN: featurization, forward/backward, training."""

import numpy as np
import pytest

from triagekit import relext as R
from triagekit.errors import DataError, SnapshotError
from triagekit.relext import (
    CnnConfig,
    CnnParams,
    Vocab,
    balance_dataset,
    classification_report,
    evaluate,
    featurize_sentence,
    featurize_tokens,
    generate_relation_corpus,
    gradient_check,
    load_checkpoint,
    save_checkpoint,
    train,
)

SMALL = CnnConfig(
    max_len=12, word_dim=6, pos_dim=3, tag_dim=2,
    windows=(2, 3), filters=4, dense_dim=8, dropout=0.0, seed=3,
)


@pytest.fixture(scope="module")
def small_sentences():
    return generate_relation_corpus(8, seed=5)


@pytest.fixture(scope="module")
def small_vocab(small_sentences):
    return Vocab.from_sentences(small_sentences)


def _generic_params(config, vocab, noise_seed=99):
    """Init then move to a generic point so no ReLU kink sits at finite-
    difference scale."""
    params = CnnParams.init(config, len(vocab), len(vocab.tag_ids))
    rng = np.random.default_rng(noise_seed)
    for tensor in params.tensors.values():
        tensor += rng.uniform(-0.5, 0.5, size=tensor.shape)
    return params


class TestFeaturize:
    def test_distance_zero_at_e1_start(self, small_vocab):
        words = ("aa", "bb", "cc", "dd")
        ex = featurize_tokens(words, ("term",) * 4, (1, 2), (3, 4), "located_in", small_vocab, 12)
        # distances are stored with a +max_len offset for embedding lookup
        assert ex.dist1[1] - 12 == 0
        assert ex.dist2[3] - 12 == 0
        assert ex.dist1[0] - 12 == -1

    def test_padding(self, small_vocab):
        ex = featurize_tokens(("aa", "bb", "cc"), ("term",) * 3, (0, 1), (2, 3), None, small_vocab, 45)
        assert int(np.sum(ex.word_ids == R.PAD)) == 42

    def test_truncation_keeps_both_spans(self, small_vocab):
        words = tuple(f"w{i}" for i in range(60))
        e1, e2 = (20, 21), (42, 43)
        ex = featurize_tokens(words, ("term",) * 60, e1, e2, None, small_vocab, 45)
        assert len(ex.word_ids) == 45
        assert 0 <= ex.e1[0] < ex.e1[1] <= 45
        assert 0 <= ex.e2[0] < ex.e2[1] <= 45
        # the stretch between the entities is intact
        assert ex.e2[0] - ex.e1[0] == 42 - 20

    def test_identical_spans_rejected(self, small_vocab):
        with pytest.raises(DataError):
            featurize_tokens(("aa", "bb"), ("term",) * 2, (0, 1), (0, 1), None, small_vocab, 12)

    def test_overlong_entity_stretch_rejected(self, small_vocab):
        words = tuple(f"w{i}" for i in range(60))
        with pytest.raises(DataError):
            featurize_tokens(words, ("term",) * 60, (0, 1), (59, 60), None, small_vocab, 45)


class TestForward:
    def test_all_negative_preactivations_zero_feature_map(self, small_sentences, small_vocab):
        params = CnnParams.init(SMALL, len(small_vocab), len(small_vocab.tag_ids))
        for m in SMALL.windows:
            params.tensors[f"conv_b_{m}"][:] = -1e6
        batch = R._stack([featurize_sentence(s, small_vocab, SMALL.max_len) for s in small_sentences])
        _, cache = R._forward_batch(batch, params, train=False)
        assert np.all(cache["h0"] == 0.0)

    def test_feature_map_length_law(self, small_vocab):
        cfg = CnnConfig(windows=(2, 3, 4), filters=4, dense_dim=8, dropout=0.0)
        sents = generate_relation_corpus(4, seed=1)
        vocab = Vocab.from_sentences(sents)
        params = CnnParams.init(cfg, len(vocab), len(vocab.tag_ids))
        batch = R._stack([featurize_sentence(s, vocab, cfg.max_len) for s in sents])
        _, cache = R._forward_batch(batch, params, train=False)
        for m in (2, 3, 4):
            assert cache[f"z_{m}"].shape[1] == 45 - m + 1
            assert cache[f"z_{m}"].shape[2] == cfg.filters

    def test_softmax_normalized(self, small_sentences, small_vocab):
        params = _generic_params(SMALL, small_vocab)
        examples = [featurize_sentence(s, small_vocab, SMALL.max_len) for s in small_sentences]
        probs = R.predict(params, examples)
        assert np.all(probs > 0) and np.all(probs < 1)
        np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-9)

    def test_inference_deterministic(self, small_sentences, small_vocab):
        params = _generic_params(SMALL, small_vocab)
        ex = featurize_sentence(small_sentences[0], small_vocab, SMALL.max_len)
        assert R.forward(ex, params) == R.forward(ex, params)


class TestGradients:
    def test_gradient_check_every_tensor(self, small_sentences, small_vocab):
        params = _generic_params(SMALL, small_vocab)
        examples = [featurize_sentence(s, small_vocab, SMALL.max_len) for s in small_sentences]
        errors = gradient_check(params, examples, epsilon=1e-4)
        assert set(errors) == set(params.tensors)
        for name, err in errors.items():
            assert err < 1e-4, f"{name}: relative error {err:.3e}"


class TestBalance:
    def test_downsamples_majority(self):
        sents = generate_relation_corpus(400, seed=7)
        positives = [s for s in sents if s.label == "located_in"][:70]
        negatives = [s for s in sents if s.label == "not_located_in"][:30]
        balanced = balance_dataset(positives + negatives, seed=1)
        counts = {c: sum(1 for s in balanced if s.label == c) for c in R.CLASSES}
        assert counts == {"located_in": 30, "not_located_in": 30}

    def test_already_balanced_unchanged_multiset(self):
        sents = generate_relation_corpus(100, seed=7)
        positives = [s for s in sents if s.label == "located_in"][:20]
        negatives = [s for s in sents if s.label == "not_located_in"][:20]
        balanced = balance_dataset(positives + negatives, seed=1)
        assert sorted(map(repr, balanced)) == sorted(map(repr, positives + negatives))

    def test_sub_multiset(self):
        sents = generate_relation_corpus(300, seed=9)
        balanced = balance_dataset(sents, seed=2)
        pool = list(map(repr, sents))
        for s in balanced:
            pool.remove(repr(s))  # raises if not contained

    def test_missing_label(self):
        sents = [s for s in generate_relation_corpus(50, seed=3) if s.label == "located_in"]
        with pytest.raises(DataError):
            balance_dataset(sents, seed=0)


class TestTrain:
    CFG = CnnConfig(epochs=3, filters=16, dense_dim=32, seed=0)

    def test_separable_dataset_high_accuracy(self):
        train_set = balance_dataset(generate_relation_corpus(600, seed=1), seed=4)
        val_set = generate_relation_corpus(100, seed=2)
        params, vocab = train(train_set, val_set, self.CFG)
        report = evaluate(params, train_set, vocab)
        accuracy_proxy = min(report[c]["f_score"] for c in R.CLASSES)
        assert accuracy_proxy >= 0.99

    def test_zero_learning_rate_keeps_init(self):
        cfg = CnnConfig(epochs=2, filters=8, dense_dim=16, seed=5, learning_rate=0.0)
        train_set = balance_dataset(generate_relation_corpus(100, seed=1), seed=4)
        val_set = generate_relation_corpus(30, seed=2)
        params, vocab = train(train_set, val_set, cfg)
        fresh = CnnParams.init(cfg, len(vocab), len(vocab.tag_ids))
        for name in fresh.tensors:
            np.testing.assert_array_equal(params.tensors[name], fresh.tensors[name])

    def test_deterministic_under_seed(self):
        train_set = balance_dataset(generate_relation_corpus(150, seed=1), seed=4)
        val_set = generate_relation_corpus(40, seed=2)
        cfg = CnnConfig(epochs=2, filters=8, dense_dim=16, seed=11)
        a, _ = train(train_set, val_set, cfg)
        b, _ = train(train_set, val_set, cfg)
        for name in a.tensors:
            np.testing.assert_array_equal(a.tensors[name], b.tensors[name])

    def test_empty_sets_rejected(self):
        with pytest.raises(DataError):
            train([], generate_relation_corpus(5, seed=1), self.CFG)


class TestEvaluate:
    def test_all_correct(self):
        predicted = np.array([0, 1, 0, 1, 1])
        report = classification_report(predicted, predicted.copy())
        for cls in R.CLASSES:
            assert report[cls]["precision"] == report[cls]["recall"] == report[cls]["f_score"] == 1.0

    def test_all_predicted_located_on_balanced_set(self):
        actual = np.array([0, 0, 1, 1])
        predicted = np.ones(4, dtype=int)
        report = classification_report(predicted, actual)
        assert report["located_in"]["recall"] == 1.0
        assert report["located_in"]["precision"] == 0.5
        assert report["not_located_in"]["zero_division"] is True
        assert report["not_located_in"]["precision"] == 0.0

    def test_empty_test_set(self, small_vocab):
        params = CnnParams.init(SMALL, len(small_vocab), len(small_vocab.tag_ids))
        with pytest.raises(DataError):
            evaluate(params, [], small_vocab)


class TestCheckpoint:
    def test_round_trip(self, small_sentences, small_vocab, tmp_path):
        params = _generic_params(SMALL, small_vocab)
        path = tmp_path / "model.bin"
        save_checkpoint(params, path)
        loaded = load_checkpoint(path)
        assert set(loaded.tensors) == set(params.tensors)
        for name, tensor in params.tensors.items():
            np.testing.assert_allclose(loaded.tensors[name], tensor, atol=1e-6)
        assert loaded.config.windows == SMALL.windows

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "junk.bin"
        path.write_bytes(b"NOPE" + b"\x00" * 64)
        with pytest.raises(SnapshotError):
            load_checkpoint(path)

    def test_predictions_survive_round_trip(self, small_sentences, small_vocab, tmp_path):
        params = _generic_params(SMALL, small_vocab)
        path = tmp_path / "model.bin"
        save_checkpoint(params, path)
        loaded = load_checkpoint(path)
        examples = [featurize_sentence(s, small_vocab, SMALL.max_len) for s in small_sentences]
        np.testing.assert_allclose(
            R.predict(params, examples), R.predict(loaded, examples), atol=1e-5
        )


class TestCorpusGenerator:
    def test_deterministic(self):
        assert generate_relation_corpus(50, seed=3) == generate_relation_corpus(50, seed=3)

    def test_separable_signal(self):
        # located_in iff a connective sits directly before E2
        for s in generate_relation_corpus(200, seed=8):
            has_conn = s.words[s.e2[0] - 1] in R.CONNECTIVES
            assert has_conn == (s.label == "located_in")
