import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from numpy.testing import assert_allclose, assert_array_equal

from ungsl.numerics import (
    AdamState, NonFiniteGradient, ParamTensor, adam_step, finite_diff_check, glorot,
    log_softmax_rows, sigmoid, softmax_rows,
)
from ungsl.seeding import stream, stream_seed


class TestActivations:
    def test_sigmoid_zero_is_half(self):
        assert sigmoid(0.0) == 0.5

    def test_sigmoid_extremes_are_finite(self):
        out = sigmoid(np.array([-1000.0, 1000.0]))
        assert_array_equal(out, [0.0, 1.0])

    def test_sigmoid_symmetry(self):
        x = np.linspace(-30, 30, 61)
        assert_allclose(sigmoid(x) + sigmoid(-x), 1.0, atol=1e-15)

    @given(arrays(np.float64, (4, 5), elements=st.floats(-500, 500)))
    @settings(max_examples=60, deadline=None)
    def test_softmax_rows_sum_to_one(self, logits):
        p = softmax_rows(logits)
        assert np.all(p >= 0)
        assert_allclose(p.sum(axis=1), 1.0, atol=1e-12)
        assert_allclose(np.exp(log_softmax_rows(logits)), p, atol=1e-12)

    def test_softmax_shift_invariant(self):
        x = np.array([[1.0, 2.0, 3.0]])
        assert_allclose(softmax_rows(x), softmax_rows(x + 1e4), rtol=1e-12)


class TestAdam:
    def test_first_step_moves_by_lr(self):
        # bias correction makes the first update lr * sign(g)
        p = ParamTensor("w", np.array([1.0, -2.0, 0.5]))
        p.grad[...] = [3.0, -0.1, 1e-3]
        adam_step([p], AdamState([p], lr=0.1))
        assert_allclose(p.value, [0.9, -1.9, 0.4], atol=1e-5)

    def test_matches_reference_over_steps(self):
        rng = np.random.default_rng(0)
        w0 = rng.standard_normal(4)
        grads = rng.standard_normal((5, 4))
        p = ParamTensor("w", w0.copy(), weight_decay=0.1)
        st_ = AdamState([p], lr=0.01)
        m = np.zeros(4)
        v = np.zeros(4)
        w = w0.copy()
        for t, g in enumerate(grads, 1):
            p.zero_grad()
            p.grad += g
            adam_step([p], st_)
            g = g + 0.1 * w
            m = 0.9 * m + 0.1 * g
            v = 0.999 * v + 0.001 * g * g
            w = w - 0.01 * (m / (1 - 0.9 ** t)) / (np.sqrt(v / (1 - 0.999 ** t)) + 1e-8)
        assert_allclose(p.value, w, rtol=1e-13)

    def test_per_parameter_lr(self):
        a = ParamTensor("a", np.zeros(1))
        b = ParamTensor("b", np.zeros(1), lr=0.5)
        a.grad[...] = 1.0
        b.grad[...] = 1.0
        adam_step([a, b], AdamState([a, b], lr=0.01))
        assert_allclose([a.value[0], b.value[0]], [-0.01, -0.5], rtol=1e-6)

    def test_non_finite_gradient_leaves_params_untouched(self):
        a = ParamTensor("a", np.ones(2))
        b = ParamTensor("b", np.ones(2))
        a.grad[...] = 1.0
        b.grad[...] = [np.nan, 0.0]
        state = AdamState([a, b])
        with pytest.raises(NonFiniteGradient) as err:
            adam_step([a, b], state)
        assert err.value.param_name == "b"
        assert_array_equal(a.value, 1.0)
        assert state.t == 0

    def test_duplicate_names_rejected(self):
        with pytest.raises(ValueError):
            AdamState([ParamTensor("w", np.zeros(1)), ParamTensor("w", np.zeros(1))])


class TestFiniteDifferences:
    def test_quadratic_passes(self):
        A = np.array([[2.0, 0.5], [0.5, 1.0]])
        p = ParamTensor("x", np.array([0.3, -0.7]))

        def loss():
            p.zero_grad()
            p.grad += A @ p.value
            return 0.5 * p.value @ A @ p.value

        assert finite_diff_check(loss, [p]) < 1e-8

    def test_wrong_gradient_detected(self):
        p = ParamTensor("x", np.array([1.0, 2.0]))

        def loss():
            p.zero_grad()
            p.grad += 3 * p.value  # true gradient is 2x
            return float(p.value @ p.value)

        # |3x - 2x| / max(|3x|, |2x|)
        assert_allclose(finite_diff_check(loss, [p]), 1 / 3, rtol=1e-6)

    def test_tiny_gradients_compared_against_floor(self):
        p = ParamTensor("x", np.array([0.0]))

        def loss():
            p.zero_grad()
            p.grad += 1e-12  # true gradient is 1e-12 + 2x
            return float(1e-12 * p.value[0] + p.value[0] ** 2)

        assert finite_diff_check(loss, [p]) < 1e-3

    def test_values_restored(self):
        p = ParamTensor("x", np.array([1.0, 2.0]))

        def loss():
            p.zero_grad()
            p.grad += 2 * p.value
            return float(p.value @ p.value)

        finite_diff_check(loss, [p])
        assert_array_equal(p.value, [1.0, 2.0])


class TestSeeding:
    def test_same_label_same_stream(self):
        assert_array_equal(stream(7, "gnn/init").random(5), stream(7, "gnn/init").random(5))

    def test_labels_and_masters_differ(self):
        assert stream_seed(7, "gnn/init") != stream_seed(7, "gnn/dropout")
        assert stream_seed(7, "gnn/init") != stream_seed(8, "gnn/init")

    def test_seed_is_64_bit(self):
        assert 0 <= stream_seed(0, "x") < 2**64

    def test_glorot_bounds(self):
        w = glorot(stream(0, "g"), 30, 10)
        assert np.abs(w).max() <= np.sqrt(6 / 40)
