"""Recurrent head tests: gate algebra, BPTT gradient checks, Adam, training."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rmtkit.optim import init_adam
from rmtkit.recurrent import (
    CELL_KINDS,
    TrainConfig,
    adam_step,
    auroc,
    backward,
    bce_loss,
    cell_step,
    gate,
    head_forward,
    init_head,
    param_count,
    train,
    trainable_keys,
)


def zero_weight_head(cell_kind, hidden, inputs=6):
    params = init_head(cell_kind, hidden_size=hidden, input_size=inputs, seed=0)
    for key in trainable_keys(params):
        params.tensors[key] = np.zeros_like(params.tensors[key])
    return params


class TestCellStep:
    def test_gru_zero_weights_halves_state(self):
        params = zero_weight_head("gru", 4)
        v = np.array([0.3, -1.2, 0.0, 2.0])
        new = cell_step(params, np.zeros(4), v)
        np.testing.assert_allclose(new, 0.5 * v, atol=1e-12)

    def test_lstm_zero_weights(self):
        params = zero_weight_head("lstm", 4)
        v = np.array([0.5, -0.5, 1.0, 0.0])
        h_new, c_new = cell_step(params, np.zeros(4), (np.zeros(4), v))
        np.testing.assert_allclose(c_new, 0.5 * v, atol=1e-12)
        np.testing.assert_allclose(h_new, 0.5 * np.tanh(0.5 * v), atol=1e-12)

    def test_vanilla_without_recurrence_ignores_state(self):
        params = init_head("vanilla", hidden_size=4, input_size=6, seed=1)
        params.tensors["w_hh"] = np.zeros_like(params.tensors["w_hh"])
        f = np.linspace(-1, 1, 4)
        out1 = cell_step(params, f, np.zeros(4))
        out2 = cell_step(params, f, np.ones(4))
        np.testing.assert_allclose(out1, out2, atol=1e-12)

    def test_shape_mismatch_raises(self):
        params = init_head("gru", hidden_size=4, input_size=6, seed=0)
        with pytest.raises(ValueError):
            cell_step(params, np.zeros(3), np.zeros(4))


class TestHeadForward:
    def test_zero_output_head_gives_half(self):
        params = init_head("gru", hidden_size=8, input_size=5, seed=0)
        params.tensors["w_out"] = np.zeros(8)
        params.tensors["b_out"] = np.zeros(())
        probs = head_forward(params, np.random.default_rng(0).standard_normal((7, 5)))
        np.testing.assert_allclose(probs, 0.5, atol=1e-12)

    def test_single_step_series(self):
        params = init_head("lstm", hidden_size=4, input_size=5, seed=2)
        probs = head_forward(params, np.ones((1, 5)))
        assert probs.shape == (1,)
        assert 0.0 < probs[0] < 1.0

    @pytest.mark.parametrize("kind", CELL_KINDS)
    def test_causality_prefix_exact(self, kind):
        params = init_head(kind, hidden_size=6, input_size=5, seed=3)
        x = np.random.default_rng(4).standard_normal((9, 5))
        full = head_forward(params, x)
        prefix = head_forward(params, x[:5])
        np.testing.assert_array_equal(full[:5], prefix)
        doubled = head_forward(params, np.concatenate([x, x]))
        np.testing.assert_array_equal(doubled[: len(x)], full)

    def test_empty_series_raises(self):
        params = init_head("gru", hidden_size=4, input_size=5, seed=0)
        with pytest.raises(ValueError):
            head_forward(params, np.zeros((0, 5)))


class TestBceLoss:
    def test_half_probability_gives_log_two(self):
        assert bce_loss(np.array([0.5]), 0) == pytest.approx(np.log(2), abs=1e-12)
        assert bce_loss(np.array([0.5]), 1) == pytest.approx(np.log(2), abs=1e-12)

    def test_point_nine_positive(self):
        assert bce_loss(np.array([0.2, 0.9]), 1) == pytest.approx(-np.log(0.9), abs=1e-12)

    def test_limit_to_zero(self):
        assert bce_loss(np.array([1.0 - 1e-9]), 1) < 1e-6
        assert bce_loss(np.array([1e-9]), 0) < 1e-6

    def test_mean_reduction(self):
        probs = np.array([0.5, 0.9])
        expected = 0.5 * (-np.log(0.5) - np.log(0.9))
        assert bce_loss(probs, 1, reduction="mean") == pytest.approx(expected, abs=1e-12)


def finite_difference_grads(params, x, label, reduction="final", step=1e-5):
    grads = {}
    for key in trainable_keys(params):
        tensor = params.tensors[key]
        grad = np.zeros_like(tensor)
        it = np.nditer(tensor, flags=["multi_index"])
        while not it.finished:
            idx = it.multi_index
            original = tensor[idx]
            tensor[idx] = original + step
            up = bce_loss(head_forward(params, x), label, reduction)
            tensor[idx] = original - step
            down = bce_loss(head_forward(params, x), label, reduction)
            tensor[idx] = original
            grad[idx] = (up - down) / (2 * step)
            it.iternext()
        grads[key] = grad
    return grads


class TestBackward:
    @pytest.mark.parametrize("kind", CELL_KINDS)
    @pytest.mark.parametrize("steps", [1, 5])
    def test_gradients_match_finite_differences(self, kind, steps):
        params = init_head(kind, hidden_size=4, input_size=5, seed=11)
        x = np.random.default_rng(12).standard_normal((steps, 5))
        label = 1
        analytic = backward(params, x, label)
        numeric = finite_difference_grads(params, x, label)
        for key in analytic:
            np.testing.assert_allclose(
                analytic[key], numeric[key], rtol=1e-4, atol=1e-8, err_msg=f"{kind}/{key}"
            )

    def test_mean_reduction_gradients(self):
        params = init_head("gru", hidden_size=4, input_size=5, seed=13)
        x = np.random.default_rng(14).standard_normal((6, 5))
        analytic = backward(params, x, 0, reduction="mean")
        numeric = finite_difference_grads(params, x, 0, reduction="mean")
        for key in analytic:
            np.testing.assert_allclose(analytic[key], numeric[key], rtol=1e-4, atol=1e-8)

    def test_no_recurrence_used_on_length_one(self):
        params = init_head("vanilla", hidden_size=4, input_size=5, seed=15)
        grads = backward(params, np.ones((1, 5)), 1)
        np.testing.assert_array_equal(grads["w_hh"], np.zeros((4, 4)))

    def test_output_bias_gradient_vanishes_at_optimum(self):
        params = init_head("gru", hidden_size=4, input_size=5, seed=16)
        params.tensors["w_out"] = np.zeros(4)
        params.tensors["b_out"] = np.array(50.0)  # saturates sigmoid at ~1
        grads = backward(params, np.ones((3, 5)), 1)
        assert abs(grads["b_out"]) <= 1e-6


class TestAdamStep:
    def test_zero_gradient_no_decay_is_identity(self):
        params = init_head("vanilla", hidden_size=4, input_size=5, seed=17)
        config = TrainConfig(weight_decay=0.0)
        before = {k: v.copy() for k, v in params.tensors.items()}
        grads = {k: np.zeros_like(params.tensors[k]) for k in trainable_keys(params)}
        state = init_adam(params.tensors, trainable_keys(params))
        adam_step(params, grads, state, config)
        for key in trainable_keys(params):
            np.testing.assert_array_equal(params.tensors[key], before[key])

    def test_first_step_is_signed_unit_step(self):
        params = init_head("vanilla", hidden_size=4, input_size=5, seed=18)
        config = TrainConfig(learning_rate=1e-3, weight_decay=0.0)
        g = 0.37
        grads = {k: np.zeros_like(params.tensors[k]) for k in trainable_keys(params)}
        grads["b_out"] = np.array(g)
        theta = float(params.tensors["b_out"])
        state = init_adam(params.tensors, trainable_keys(params))
        adam_step(params, grads, state, config)
        expected = theta - config.learning_rate * g / (abs(g) + config.adam_eps)
        assert float(params.tensors["b_out"]) == pytest.approx(expected, abs=1e-12)

    def test_pure_decay_shrinks_weights(self):
        params = init_head("vanilla", hidden_size=4, input_size=5, seed=19)
        config = TrainConfig(weight_decay=1e-2)
        before = np.abs(params.tensors["w_xh"]).copy()
        grads = {k: np.zeros_like(params.tensors[k]) for k in trainable_keys(params)}
        state = init_adam(params.tensors, trainable_keys(params))
        adam_step(params, grads, state, config)
        after = np.abs(params.tensors["w_xh"])
        nonzero = before > 0
        assert np.all(after[nonzero] < before[nonzero])


class TestParamCounts:
    def test_closed_form_counts_h16(self):
        # shared: (22 + 1) * 16 + 16 + 1 = 385; cell blocks: 2 h^2 + h = 528
        shared = 23 * 16 + 17
        assert param_count(init_head("vanilla", 16, 22)) == shared + 528
        assert param_count(init_head("gru", 16, 22)) == shared + 3 * 528
        assert param_count(init_head("lstm", 16, 22)) == shared + 4 * 528

    def test_ordering(self):
        counts = [param_count(init_head(k, 16, 22)) for k in ("vanilla", "gru", "lstm")]
        assert counts[0] < counts[1] < counts[2]


def synthetic_series_dataset(n, steps=12, features=22, shift=10.0, seed=0, slot=6):
    """Separable synthetic descriptor series: class means +-shift on one slot."""
    rng = np.random.default_rng(seed)
    data = []
    for i in range(n):
        label = i % 2
        x = rng.standard_normal((steps, features))
        x[:, slot] += shift if label else -shift
        data.append((x, label))
    return data


class TestTrain:
    def test_separable_dataset_reaches_perfect_auroc(self):
        data = synthetic_series_dataset(48, seed=1)
        config = TrainConfig(
            epochs=5, seed=0, cell_kind="gru", hidden_size=8, batch_size=4, learning_rate=1e-2
        )
        _, history = train(data, config)
        assert history["val_auroc"][-1] == 1.0

    def test_loss_nonincreasing_on_separable_set(self):
        data = synthetic_series_dataset(48, seed=2)
        config = TrainConfig(epochs=8, seed=0, cell_kind="gru", hidden_size=8)
        _, history = train(data, config)
        losses = history["train_loss"]
        for a, b in zip(losses, losses[1:]):
            assert b <= a + 1e-3

    def test_shuffled_labels_near_chance(self):
        aurocs = []
        for seed in range(20):
            rng = np.random.default_rng(100 + seed)
            data = synthetic_series_dataset(40, seed=seed)
            shuffled = [(x, int(rng.integers(2))) for x, _ in data]
            labels = [l for _, l in shuffled]
            if len(set(labels)) < 2:
                continue
            config = TrainConfig(epochs=3, seed=seed, cell_kind="vanilla", hidden_size=4)
            _, history = train(shuffled, config)
            aurocs.append(history["val_auroc"][-1])
        assert 0.35 <= float(np.median(aurocs)) <= 0.65

    def test_single_class_raises(self):
        data = [(np.zeros((4, 22)), 1), (np.ones((4, 22)), 1)]
        with pytest.raises(ValueError):
            train(data, TrainConfig(epochs=1))

    def test_fixed_seed_reproducible(self):
        data = synthetic_series_dataset(24, seed=3)
        config = TrainConfig(epochs=3, seed=7, cell_kind="gru", hidden_size=4)
        params_a, hist_a = train(data, config)
        params_b, hist_b = train(data, config)
        assert hist_a["train_loss"] == hist_b["train_loss"]
        for key in params_a.tensors:
            np.testing.assert_array_equal(params_a.tensors[key], params_b.tensors[key])


class TestAuroc:
    def test_perfect_separation(self):
        assert auroc([0.9, 0.8, 0.2, 0.1], [1, 1, 0, 0]) == 1.0

    def test_all_ties_give_half(self):
        assert auroc([0.5, 0.5, 0.5, 0.5], [1, 0, 1, 0]) == 0.5

    def test_hand_counted_pairs(self):
        assert auroc([0.9, 0.8, 0.4, 0.3], [1, 0, 1, 0]) == pytest.approx(0.75)

    def test_matches_brute_force_pair_counting(self):
        rng = np.random.default_rng(21)
        scores = np.round(rng.uniform(0, 1, 60), 2)  # induce ties
        labels = rng.integers(0, 2, 60)
        if len(set(labels.tolist())) < 2:
            labels[0], labels[1] = 0, 1
        pos = scores[labels == 1]
        neg = scores[labels == 0]
        wins = sum((p > n) + 0.5 * (p == n) for p in pos for n in neg)
        assert auroc(scores, labels) == pytest.approx(wins / (len(pos) * len(neg)), abs=1e-12)

    @given(st.floats(0.1, 5.0), st.floats(-2.0, 2.0))
    @settings(max_examples=30)
    def test_invariant_under_increasing_transform(self, scale, shift):
        rng = np.random.default_rng(22)
        scores = rng.standard_normal(40)
        labels = np.array([0, 1] * 20)
        transformed = np.exp(scale * scores) + shift
        assert auroc(scores, labels) == pytest.approx(auroc(transformed, labels), abs=1e-12)

    def test_single_class_raises(self):
        with pytest.raises(ValueError):
            auroc([0.1, 0.9], [1, 1])


class TestGate:
    def test_alarm_above_threshold(self):
        assert gate(0.9, 0.5) is True

    def test_strict_inequality_at_threshold(self):
        assert gate(0.5, 0.5) is False

    def test_pass_below(self):
        assert gate(0.2, 0.5) is False
