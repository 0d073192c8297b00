"""Adam optimizer, class weights, and the training loop."""

import numpy as np
import pytest

from ferkit.errors import FerkitError
from ferkit.model import build_model
from ferkit.training import (
    AdamHyper,
    AdamState,
    ArrayDataset,
    TrainConfig,
    adam_step,
    compute_class_weights,
    evaluate_arrays,
    train,
)
from tests.test_model import small_dense_spec


def scalar_adam_reference(grads, alpha=0.001, b1=0.9, b2=0.999, eps=1e-8, theta=0.0):
    """Independently coded scalar Adam trace (the oracle)."""
    m = v = 0.0
    out = []
    for t, g in enumerate(grads, start=1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        m_hat = m / (1 - b1**t)
        v_hat = v / (1 - b2**t)
        theta = theta - alpha * m_hat / (v_hat**0.5 + eps)
        out.append(theta)
    return out


class TestAdam:
    def test_first_step_hand_trace(self):
        params = {"w": np.array([0.0])}
        state = AdamState.zeros_like(params)
        adam_step(state, params, {"w": np.array([1.0])})
        assert state.t == 1
        np.testing.assert_allclose(params["w"][0], -0.001 / (1 + 1e-8), atol=1e-12)

    def test_zero_gradient_advances_t_only(self):
        params = {"w": np.array([1.5])}
        state = AdamState.zeros_like(params)
        adam_step(state, params, {"w": np.array([0.0])})
        assert state.t == 1
        assert params["w"][0] == 1.5

    def test_hundred_step_trace_matches_reference(self):
        rng = np.random.default_rng(0)
        grads = rng.standard_normal(100)
        expected = scalar_adam_reference(grads)
        params = {"w": np.array([0.0])}
        state = AdamState.zeros_like(params)
        for g in grads:
            adam_step(state, params, {"w": np.array([g])})
        trace_final = expected[-1]
        np.testing.assert_allclose(params["w"][0], trace_final, atol=1e-10)

    def test_non_finite_gradient_rejected_without_mutation(self):
        params = {"w": np.array([1.0])}
        state = AdamState.zeros_like(params)
        with pytest.raises(FerkitError):
            adam_step(state, params, {"w": np.array([np.nan])})
        assert state.t == 0
        assert params["w"][0] == 1.0

    def test_zero_alpha_advances_moments_but_not_params(self):
        params = {"w": np.array([2.0, -1.0])}
        state = AdamState.zeros_like(params)
        adam_step(state, params, {"w": np.array([1.0, 3.0])}, AdamHyper(alpha=0.0))
        assert state.t == 1
        assert np.all(state.m["w"] != 0.0) and np.all(state.v["w"] != 0.0)
        np.testing.assert_array_equal(params["w"], [2.0, -1.0])

    def test_update_magnitude_bounded(self):
        hyper = AdamHyper()
        bound = hyper.alpha * (1 / (1 - hyper.beta1)) * 1.1
        rng = np.random.default_rng(1)
        params = {"w": np.zeros(16)}
        state = AdamState.zeros_like(params)
        for _ in range(50):
            before = params["w"].copy()
            adam_step(state, params, {"w": rng.standard_normal(16) * 10}, hyper)
            assert np.all(np.abs(params["w"] - before) <= bound)


class TestClassWeights:
    def test_balanced_counts_give_unit_weights(self):
        np.testing.assert_allclose(compute_class_weights([10] * 8), np.ones(8))

    def test_published_imbalance_ratio(self):
        counts = [1000, 134_915, 1000, 1000, 1000, 1000, 1000, 4_250]
        w = compute_class_weights(counts)
        np.testing.assert_allclose(w[7] / w[1], 134_915 / 4_250, atol=1e-9)
        assert abs(w[7] / w[1] - 31.745) < 0.001

    def test_sample_weighted_mean_is_one(self):
        rng = np.random.default_rng(0)
        for _ in range(10):
            counts = rng.integers(0, 500, size=8)
            if counts.sum() == 0:
                continue
            w = compute_class_weights(counts)
            np.testing.assert_allclose((w * counts).sum() / counts.sum(), 1.0, atol=1e-9)

    def test_single_nonzero_class(self):
        w = compute_class_weights([0, 0, 5, 0, 0, 0, 0, 0])
        assert w[2] == 1.0
        assert np.all(np.delete(w, 2) == 0.0)

    def test_all_zero_rejected(self):
        with pytest.raises(ValueError):
            compute_class_weights([0] * 8)


def tiny_dataset(seed, n=16):
    rng = np.random.default_rng(seed)
    images = rng.random((n, 4, 4, 3), dtype=np.float32)
    labels = np.arange(n) % 8
    return ArrayDataset(images=images, labels=labels)


class TestTrainLoop:
    def test_small_model_memorizes(self):
        data = tiny_dataset(0, n=8)
        model = build_model(small_dense_spec(hidden=64), 0)
        config = TrainConfig(epochs=120, batch_size=8, seed=0, class_weighting=False)
        history, best = train(model, data, data, config)
        assert max(e.train_acc for e in history.epochs) == 1.0
        assert history.epochs[-1].train_loss < 0.2

    def test_fixed_seed_reproducible(self):
        data = tiny_dataset(1)
        config = TrainConfig(epochs=3, batch_size=4, seed=5)
        h1, m1 = train(build_model(small_dense_spec(), 5), data, data, config)
        h2, m2 = train(build_model(small_dense_spec(), 5), data, data, config)
        assert h1 == h2
        for name in m1.params:
            np.testing.assert_array_equal(m1.params[name], m2.params[name])

    def test_untrained_accuracy_near_chance(self):
        data = tiny_dataset(3, n=64)
        model = build_model(small_dense_spec(), 3)
        top1, top3 = evaluate_arrays(model, data)
        assert abs(top1 - 1 / 8) <= 0.1

    def test_best_checkpoint_matches_history_peak(self):
        train_data = tiny_dataset(2, n=24)
        eval_data = tiny_dataset(7, n=24)
        config = TrainConfig(epochs=5, batch_size=8, seed=2)
        history, best = train(build_model(small_dense_spec(), 2), train_data, eval_data, config)
        peak = history.epochs[history.peak_epoch]
        assert peak.eval_top1 == max(e.eval_top1 for e in history.epochs)
        top1, _ = evaluate_arrays(best, eval_data, config.batch_size)
        assert top1 == peak.eval_top1

    def test_history_csv(self, tmp_path):
        data = tiny_dataset(4)
        history, _ = train(
            build_model(small_dense_spec(), 0), data, data, TrainConfig(epochs=2, batch_size=8)
        )
        path = tmp_path / "history.csv"
        history.write_csv(path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "epoch,train_loss,train_acc,eval_top1,eval_top3"
        assert len(lines) == 3


def make_imbalanced(seed, n_major, n_minor):
    """Two overlapping brightness-coded classes at a heavy ratio."""
    rng = np.random.default_rng(seed)
    major = np.clip(rng.normal(0.35, 0.18, (n_major, 4, 4, 3)), 0, 1).astype(np.float32)
    minor = np.clip(rng.normal(0.65, 0.18, (n_minor, 4, 4, 3)), 0, 1).astype(np.float32)
    return ArrayDataset(
        images=np.concatenate([major, minor]),
        labels=np.array([0] * n_major + [1] * n_minor),
    )


def minority_recall(model, data):
    predictions = model.forward(data.images, mode="infer").argmax(axis=1)
    mask = data.labels == 1
    return float((predictions[mask] == 1).mean())


def test_class_weighting_improves_minority_recall():
    wins = 0
    for seed in range(5):
        train_data = make_imbalanced(seed, n_major=200, n_minor=2)
        eval_data = make_imbalanced(seed + 100, n_major=50, n_minor=20)
        recall = {}
        for weighted in (True, False):
            model = build_model(small_dense_spec(), seed)
            config = TrainConfig(epochs=8, batch_size=16, seed=seed, class_weighting=weighted)
            _, best = train(model, train_data, eval_data, config)
            recall[weighted] = minority_recall(best, eval_data)
        if recall[True] > recall[False]:
            wins += 1
    assert wins >= 3
