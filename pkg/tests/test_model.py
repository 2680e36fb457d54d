import numpy as np
import pytest

from _oracles import central_difference_gradient, max_relative_error
from subtail.core import DegenerateVectorError, RandomSource, SubtailError
from subtail.losses import weighted_cross_entropy
from subtail.model import (
    ClassifierParams,
    EncoderParams,
    OptimizerState,
    classifier_backward,
    classify,
    encode,
    encoder_backward,
    init_classifier,
    init_encoder,
    optimizer_step,
)


def _random_encoder(rng, d=5, h=7, e=3):
    return EncoderParams(
        W1=rng.standard_normal((h, d)) * 0.5,
        b1=rng.standard_normal(h) * 0.1,
        W2=rng.standard_normal((e, h)) * 0.5,
        b2=rng.standard_normal(e) * 0.1,
    )


def _encoder_value(params, x, probe):
    z, _ = encode(params, x)
    return float(np.sum(z * probe))


def _param_gradient_check(params, x, probe):
    z, cache = encode(params, x)
    grads = encoder_backward(params, cache, probe)
    worst = 0.0
    for name, arr in params.arrays().items():
        def f(_a, _name=name):
            return _encoder_value(params, x, probe)

        num = central_difference_gradient(f, arr)
        worst = max(worst, max_relative_error(grads[name], num))
    return worst


class TestEncode:
    def test_zero_weights_give_bias_direction(self):
        b2 = np.array([3.0, 4.0])
        params = EncoderParams(np.zeros((4, 2)), np.zeros(4), np.zeros((2, 4)), b2)
        z, _ = encode(params, np.random.default_rng(0).standard_normal((5, 2)))
        np.testing.assert_allclose(z, np.tile([0.6, 0.8], (5, 1)), atol=1e-15)

    def test_unit_output(self):
        rng = np.random.default_rng(1)
        params = _random_encoder(rng)
        z, _ = encode(params, rng.standard_normal((9, 5)))
        np.testing.assert_allclose(np.linalg.norm(z, axis=1), 1.0, atol=1e-9)

    def test_degenerate_embedding_raises(self):
        params = EncoderParams(np.zeros((3, 2)), np.zeros(3), np.zeros((2, 3)), np.zeros(2))
        with pytest.raises(DegenerateVectorError):
            encode(params, np.ones((1, 2)))

    def test_parameter_gradients_match_finite_differences(self):
        rng = np.random.default_rng(2)
        for _ in range(5):
            params = _random_encoder(rng)
            x = rng.standard_normal((4, 5))
            probe = rng.standard_normal((4, 3))
            assert _param_gradient_check(params, x, probe) < 1e-5

    def test_final_layer_scale_invariance(self):
        rng = np.random.default_rng(3)
        params = _random_encoder(rng)
        x = rng.standard_normal((6, 5))
        z, _ = encode(params, x)
        scaled = EncoderParams(params.W1, params.b1, 2.5 * params.W2, 2.5 * params.b2)
        z_scaled, _ = encode(scaled, x)
        assert np.max(np.abs(z - z_scaled)) <= 1e-12


class TestEncoderBackward:
    def test_zero_upstream_gradient(self):
        rng = np.random.default_rng(4)
        params = _random_encoder(rng)
        _, cache = encode(params, rng.standard_normal((3, 5)))
        grads = encoder_backward(params, cache, np.zeros((3, 3)))
        for g in grads.values():
            np.testing.assert_array_equal(g, np.zeros_like(g))

    def test_rectifier_mask(self):
        # drive one hidden unit strongly negative: its incoming weights get no gradient
        params = EncoderParams(
            W1=np.array([[1.0, 0.0], [0.0, 1.0]]),
            b1=np.array([0.0, -100.0]),
            W2=np.array([[1.0, 1.0], [1.0, -1.0]]),
            b2=np.array([0.1, 0.1]),
        )
        x = np.array([[1.0, 1.0]])
        _, cache = encode(params, x)
        grads = encoder_backward(params, cache, np.array([[0.3, -0.2]]))
        np.testing.assert_array_equal(grads["W1"][1], np.zeros(2))
        assert grads["b1"][1] == 0.0

    def test_shape_mismatch(self):
        rng = np.random.default_rng(5)
        params = _random_encoder(rng)
        _, cache = encode(params, rng.standard_normal((3, 5)))
        with pytest.raises(SubtailError):
            encoder_backward(params, cache, np.zeros((2, 3)))


class TestClassify:
    def test_zero_params_uniform_softmax(self):
        params = ClassifierParams(np.zeros((4, 3)), np.zeros(4))
        logits = classify(params, np.random.default_rng(0).standard_normal((2, 3)))
        np.testing.assert_array_equal(logits, np.zeros((2, 4)))

    def test_opposite_rows_double_margin(self):
        w = np.array([0.5, -1.0, 0.25])
        params = ClassifierParams(np.vstack([w, -w]), np.zeros(2))
        z = np.random.default_rng(1).standard_normal((3, 3))
        logits = classify(params, z)
        np.testing.assert_allclose(logits[:, 0] - logits[:, 1], 2.0 * (z @ w), atol=1e-12)

    def test_gradient_through_cross_entropy(self):
        rng = np.random.default_rng(6)
        params = ClassifierParams(rng.standard_normal((4, 3)), rng.standard_normal(4))
        z = rng.standard_normal((5, 3))
        labels = rng.integers(4, size=5)
        w = rng.uniform(0.5, 2.0, size=4)

        def value(_arr, which):
            logits = classify(params, z)
            return weighted_cross_entropy(logits, labels, w).value

        out = weighted_cross_entropy(classify(params, z), labels, w)
        grads, grad_z = classifier_backward(params, z, out.gradient)
        num_W = central_difference_gradient(lambda a: value(a, "W"), params.W)
        num_b = central_difference_gradient(lambda a: value(a, "b"), params.b)
        num_z = central_difference_gradient(lambda a: value(a, "z"), z)
        assert max_relative_error(grads["W"], num_W) < 1e-6
        assert max_relative_error(grads["b"], num_b) < 1e-6
        assert max_relative_error(grad_z, num_z) < 1e-6


class TestOptimizer:
    def test_zero_gradient_no_change(self):
        params = {"w": np.array([1.0, -2.0])}
        state = OptimizerState(learning_rate=0.1)
        optimizer_step(state, params, {"w": np.zeros(2)})
        np.testing.assert_array_equal(params["w"], [1.0, -2.0])

    def test_scalar_recursion_oracle(self):
        lr, b1, b2, eps = 0.05, 0.9, 0.999, 1e-8
        grads = [0.3, -0.7, 0.2, 0.9, -0.1]
        # hand-stepped reference recursion
        p_ref, m, v = 1.0, 0.0, 0.0
        for t, g in enumerate(grads, start=1):
            m = b1 * m + (1 - b1) * g
            v = b2 * v + (1 - b2) * g * g
            p_ref -= lr * (m / (1 - b1**t)) / (np.sqrt(v / (1 - b2**t)) + eps)

        params = {"p": np.array([1.0])}
        state = OptimizerState(learning_rate=lr, beta1=b1, beta2=b2, epsilon=eps)
        for g in grads:
            optimizer_step(state, params, {"p": np.array([g])})
        assert params["p"][0] == pytest.approx(p_ref, abs=1e-15)

    def test_deterministic_runs(self):
        def run():
            rng = np.random.default_rng(7)
            params = {"w": rng.standard_normal(4)}
            state = OptimizerState(learning_rate=0.01)
            for _ in range(100):
                optimizer_step(state, params, {"w": rng.standard_normal(4)})
            return params["w"]

        np.testing.assert_array_equal(run(), run())

    def test_non_finite_gradient_diverges(self):
        state = OptimizerState(learning_rate=0.1)
        with pytest.raises(SubtailError, match="diverged"):
            optimizer_step(state, {"w": np.zeros(1)}, {"w": np.array([np.nan])})


class TestInitialization:
    def test_deterministic(self):
        src = RandomSource(11, "init")
        a = init_encoder(4, 8, 3, src)
        b = init_encoder(4, 8, 3, src)
        for k in a.arrays():
            np.testing.assert_array_equal(a.arrays()[k], b.arrays()[k])

    def test_fan_scaled_bounds(self):
        params = init_encoder(10, 20, 5, RandomSource(1, "init"))
        limit1 = np.sqrt(6.0 / (10 + 20))
        limit2 = np.sqrt(6.0 / (20 + 5))
        assert np.abs(params.W1).max() <= limit1
        assert np.abs(params.W2).max() <= limit2
        np.testing.assert_array_equal(params.b1, np.zeros(20))

    def test_classifier_shapes(self):
        clf = init_classifier(5, 3, RandomSource(2, "init"))
        assert clf.W.shape == (3, 5) and clf.b.shape == (3,)


def test_separable_toy_training_drives_ce_down():
    # two linearly separable blobs; supervised path through classifier and
    # encoder should fit quickly
    rng = np.random.default_rng(8)
    x = np.concatenate([rng.normal(-2.0, 0.3, (20, 4)), rng.normal(2.0, 0.3, (20, 4))])
    labels = np.array([0] * 20 + [1] * 20)
    encoder = init_encoder(4, 16, 8, RandomSource(3, "init"))
    classifier = init_classifier(8, 2, RandomSource(4, "init"))
    opt_enc = OptimizerState(learning_rate=5e-3)
    opt_clf = OptimizerState(learning_rate=5e-3)
    weights = np.ones(2)
    value = np.inf
    for _ in range(500):
        z, cache = encode(encoder, x)
        out = weighted_cross_entropy(classify(classifier, z), labels, weights)
        clf_grads, grad_z = classifier_backward(classifier, z, out.gradient)
        enc_grads = encoder_backward(encoder, cache, grad_z)
        optimizer_step(opt_clf, classifier.arrays(), clf_grads)
        optimizer_step(opt_enc, encoder.arrays(), enc_grads)
        value = out.value
        if value < 0.01:
            break
    assert value < 0.01
