import numpy as np
import pytest

from acoustic_cohorts.conditioning import inference_feature, one_hot
from acoustic_cohorts.demo_model import (
    DemoClassifier,
    TrainConfig,
    evaluate,
    forward,
    init_model,
    load_classifier,
    loss_and_grad,
    make_demo_data,
    save_classifier,
    save_loss_curve,
    train,
)
from acoustic_cohorts.errors import DataError, UsageError
from acoustic_cohorts.kmeans import ClusterId
from oracles import central_diff_grads, cross_entropy_mp, softmax_mp


def tiny_batch(C=3, F=4, k=2, B=8, seed=0):
    rng = np.random.default_rng(seed)
    batch = []
    for i in range(B):
        x = rng.normal(size=F)
        cid = ClusterId(int(rng.integers(0, k + 1)), k)
        batch.append((x, one_hot(cid, k), int(rng.integers(0, C))))
    return batch


class TestForward:
    def test_zero_model_is_uniform(self):
        model = DemoClassifier(np.zeros((3, 6)), np.zeros(3), 3, 4, 1)
        probs = forward(model, np.ones(4), inference_feature(1))
        np.testing.assert_allclose(probs, np.full(3, 1 / 3), atol=1e-15)

    def test_logit_shift_invariance(self):
        rng = np.random.default_rng(5)
        W = rng.normal(size=(4, 7))
        b = rng.normal(size=4)
        model = DemoClassifier(W, b, 4, 4, 2)
        shifted = DemoClassifier(W, b + 3.5, 4, 4, 2)
        x = rng.normal(size=4)
        cond = one_hot(ClusterId(1, 2), 2)
        np.testing.assert_allclose(
            forward(model, x, cond), forward(shifted, x, cond), atol=1e-12
        )

    def test_matches_high_precision_softmax(self):
        rng = np.random.default_rng(11)
        W = rng.normal(scale=3.0, size=(5, 9))
        b = rng.normal(size=5)
        model = DemoClassifier(W, b, 5, 6, 2)
        x = rng.normal(size=6)
        cond = one_hot(ClusterId(0, 2), 2)
        z = np.concatenate([x, cond.onehot])
        expected = softmax_mp(W @ z + b)
        np.testing.assert_allclose(forward(model, x, cond), expected, atol=1e-12)

    def test_probabilities_sum_to_one(self):
        rng = np.random.default_rng(2)
        model = init_model(3, 5, 4, seed=1)
        for _ in range(10):
            probs = forward(model, rng.normal(size=5), inference_feature(4))
            assert probs.sum() == pytest.approx(1.0, abs=1e-12)
            assert np.all(probs >= 0)


class TestLossAndGrad:
    def test_gradients_match_finite_differences(self):
        batch = tiny_batch(C=3, F=4, k=2, B=8, seed=0)
        model = init_model(3, 4, 2, seed=3)
        _, dW, db = loss_and_grad(model, batch)

        def loss_of(W, b):
            return loss_and_grad(DemoClassifier(W, b, 3, 4, 2), batch)[0]

        fdW, fdb = central_diff_grads(loss_of, model.W.copy(), model.b.copy(), h=1e-5)
        for got, want in ((dW, fdW), (db, fdb)):
            rel = np.abs(got - want) / np.maximum.reduce(
                [np.abs(got), np.abs(want), np.full_like(got, 1e-6)]
            )
            assert rel.max() <= 1e-5

    def test_loss_matches_high_precision_cross_entropy(self):
        batch = tiny_batch(C=4, F=3, k=3, B=6, seed=7)
        model = init_model(4, 3, 3, seed=9)
        loss, _, _ = loss_and_grad(model, batch)
        Z = np.vstack([np.concatenate([x, cond.onehot]) for x, cond, _ in batch])
        labels = [label for _, _, label in batch]
        expected = cross_entropy_mp(Z @ model.W.T + model.b, labels)
        assert loss == pytest.approx(expected, abs=1e-12)

    def test_gradient_vanishes_at_optimum(self):
        # one example per class with huge correct logits: loss ~ 0, grads ~ 0
        C, F = 3, 3
        W = np.hstack([np.eye(C) * 50.0, np.zeros((C, 2))])
        model = DemoClassifier(W, np.zeros(C), C, F, 1)
        batch = [
            (np.eye(F)[c], one_hot(ClusterId(0, 1), 1), c) for c in range(C)
        ]
        loss, dW, db = loss_and_grad(model, batch)
        assert loss <= 1e-6
        assert np.abs(dW).max() <= 1e-6 and np.abs(db).max() <= 1e-6

    def test_duplicating_batch_keeps_mean_loss_and_grads(self):
        batch = tiny_batch(seed=4)
        model = init_model(3, 4, 2, seed=5)
        loss1, dW1, db1 = loss_and_grad(model, batch)
        loss2, dW2, db2 = loss_and_grad(model, batch + batch)
        assert loss2 == pytest.approx(loss1, abs=1e-12)
        np.testing.assert_allclose(dW2, dW1, atol=1e-12)
        np.testing.assert_allclose(db2, db1, atol=1e-12)

    def test_empty_batch_rejected(self):
        model = init_model(2, 2, 1, seed=0)
        with pytest.raises(DataError):
            loss_and_grad(model, [])

    def test_out_of_range_label_rejected(self):
        model = init_model(2, 2, 1, seed=0)
        batch = [(np.zeros(2), one_hot(ClusterId(0, 1), 1), 5)]
        with pytest.raises(DataError):
            loss_and_grad(model, batch)


class TestTrain:
    def test_zero_epochs_returns_seeded_init(self):
        data = make_demo_data(20, k=2, seed=0)
        config = TrainConfig(learning_rate=0.1, epochs=0, seed=42)
        model, curve = train(config, data, k=2)
        ref = init_model(2, 2, 2, seed=42)
        assert np.array_equal(model.W, ref.W)
        assert np.array_equal(model.b, ref.b)
        assert curve == ()

    def test_deterministic(self):
        data = make_demo_data(100, k=3, seed=1)
        config = TrainConfig(learning_rate=0.2, epochs=20, seed=6)
        m1, c1 = train(config, data, k=3)
        m2, c2 = train(config, data, k=3)
        assert np.array_equal(m1.W, m2.W) and np.array_equal(m1.b, m2.b)
        assert c1 == c2

    def test_loss_decreases_on_separable_data(self):
        data = make_demo_data(1000, k=2, seed=0, class_sep=3.0, cluster_shift=0.5)
        config = TrainConfig(learning_rate=0.5, epochs=500, seed=0, p_unknown=0.1)
        model, curve = train(config, data, k=2)
        assert curve[-1] < curve[0]
        assert evaluate(model, data, "true-id") >= 0.95

    def test_batch_order_permutation_keeps_gradients(self):
        # full-batch gradients are a mean, so example order cannot matter
        # once each example's masking decision is fixed
        batch = tiny_batch(C=3, F=4, k=2, B=16, seed=6)
        model = init_model(3, 4, 2, seed=2)
        loss1, dW1, db1 = loss_and_grad(model, batch)
        shuffled = [batch[i] for i in np.random.default_rng(0).permutation(16)]
        loss2, dW2, db2 = loss_and_grad(model, shuffled)
        assert loss2 == pytest.approx(loss1, abs=1e-12)
        np.testing.assert_allclose(dW2, dW1, atol=1e-12)
        np.testing.assert_allclose(db2, db1, atol=1e-12)

    def test_empty_data_rejected(self):
        with pytest.raises(DataError):
            train(TrainConfig(0.1, 1, 0), [], k=2)

    def test_config_validation(self):
        with pytest.raises(UsageError):
            TrainConfig(learning_rate=0.0, epochs=1, seed=0)
        with pytest.raises(UsageError):
            TrainConfig(learning_rate=0.1, epochs=-1, seed=0)
        with pytest.raises(UsageError):
            TrainConfig(learning_rate=0.1, epochs=1, seed=0, p_unknown=2.0)


class TestEvaluate:
    def test_zero_model_predicts_class_zero(self):
        data = make_demo_data(200, k=2, seed=8)
        model = DemoClassifier(np.zeros((2, 5)), np.zeros(2), 2, 2, 2)
        freq0 = sum(1 for _, _, label in data if label == 0) / len(data)
        assert evaluate(model, data, "true-id") == pytest.approx(freq0)
        assert evaluate(model, data, "unknown-only") == pytest.approx(freq0)

    def test_true_id_beats_unknown_when_clusters_informative(self):
        data = make_demo_data(4000, k=2, seed=3, class_sep=1.0, cluster_shift=1.0)
        config = TrainConfig(learning_rate=0.5, epochs=300, seed=3, p_unknown=0.1)
        model, _ = train(config, data, k=2)
        assert evaluate(model, data, "true-id") > evaluate(model, data, "unknown-only")

    def test_repeatable(self):
        data = make_demo_data(300, k=2, seed=5)
        model, _ = train(TrainConfig(0.3, 30, 1), data, k=2)
        assert evaluate(model, data, "true-id") == evaluate(model, data, "true-id")

    def test_bad_mode_rejected(self):
        data = make_demo_data(10, k=1, seed=0)
        model = init_model(2, 2, 1, seed=0)
        with pytest.raises(UsageError):
            evaluate(model, data, "oracle")


class TestMakeDemoData:
    def test_shapes_and_ranges(self):
        data = make_demo_data(50, k=4, seed=2, n_features=3)
        assert len(data) == 50
        for x, cid, label in data:
            assert x.shape == (3,)
            assert 0 <= cid.value < 4 and cid.k == 4
            assert label in (0, 1)

    def test_deterministic(self):
        a = make_demo_data(30, k=2, seed=9)
        b = make_demo_data(30, k=2, seed=9)
        for (xa, ca, la), (xb, cb, lb) in zip(a, b):
            assert np.array_equal(xa, xb) and ca == cb and la == lb


class TestSerialization:
    def test_classifier_round_trip_bit_exact(self, tmp_path):
        data = make_demo_data(60, k=2, seed=4)
        model, _ = train(TrainConfig(0.2, 10, 7), data, k=2)
        first, second = tmp_path / "m1.txt", tmp_path / "m2.txt"
        save_classifier(model, str(first))
        loaded = load_classifier(str(first))
        assert np.array_equal(loaded.W, model.W)
        assert np.array_equal(loaded.b, model.b)
        assert (loaded.C, loaded.F, loaded.k) == (model.C, model.F, model.k)
        save_classifier(loaded, str(second))
        assert first.read_bytes() == second.read_bytes()

    def test_loss_curve_file(self, tmp_path):
        path = tmp_path / "curve.txt"
        save_loss_curve((1.5, 0.75, 0.5), str(path))
        lines = path.read_text().splitlines()
        assert lines[0].split() == ["epoch", "loss"]
        assert len(lines) == 4
        assert float(lines[1].split()[1]) == 1.5
