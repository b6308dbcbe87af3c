import numpy as np
import pytest

from advdebias.errors import NumericError, ShapeError, StateError, ValidationError
from advdebias.numkit import (
    DenseLayer,
    adam_step,
    finite_diff_check,
    layer_rng,
    matmul,
    softmax_xent,
)


class TestMatmul:
    def test_identity_left(self):
        a = np.array([[3.0, 4.0], [5.0, 6.0]])
        np.testing.assert_array_equal(matmul(np.eye(2), a), a)

    def test_zero_case(self):
        out = matmul(np.array([[1.0, 2.0]]), np.array([[0.0], [0.0]]))
        np.testing.assert_array_equal(out, [[0.0]])

    def test_2x2_times_2x1(self):
        out = matmul(np.array([[1.0, 2.0], [3.0, 4.0]]),
                     np.array([[5.0], [6.0]]))
        np.testing.assert_array_equal(out, [[17.0], [39.0]])

    def test_shape_mismatch_names_both_shapes(self):
        with pytest.raises(ShapeError, match=r"\(2, 3\).*\(2, 2\)"):
            matmul(np.zeros((2, 3)), np.zeros((2, 2)))

    @pytest.mark.parametrize("seed", range(20))
    def test_identity_property(self, seed):
        rng = layer_rng(seed, 99)
        a = rng.normal(size=(rng.integers(1, 6), rng.integers(1, 6)))
        np.testing.assert_array_equal(matmul(a, np.eye(a.shape[1])), a)
        np.testing.assert_array_equal(matmul(np.eye(a.shape[0]), a), a)


class TestDenseLayer:
    def test_identity_weights_pass_through(self):
        layer = DenseLayer(3, 3, "identity")
        layer.weight[:] = np.eye(3)
        x = np.arange(6.0).reshape(2, 3)
        np.testing.assert_array_equal(layer.forward(x), x)

    def test_relu_gates_forward_and_backward(self):
        layer = DenseLayer(2, 2, "relu")
        layer.weight[:] = np.eye(2)
        out = layer.forward(np.array([[-1.0, 2.0]]))
        np.testing.assert_array_equal(out, [[0.0, 2.0]])
        dx = layer.backward(np.array([[1.0, 1.0]]))
        assert dx[0, 0] == 0.0
        assert dx[0, 1] == 1.0

    def test_backward_before_forward_raises(self):
        layer = DenseLayer(2, 2)
        with pytest.raises(StateError):
            layer.backward(np.zeros((1, 2)))

    def test_forward_shape_mismatch(self):
        layer = DenseLayer(3, 2)
        with pytest.raises(ShapeError):
            layer.forward(np.zeros((4, 5)))

    def test_random_layer_matches_finite_differences(self):
        rng = layer_rng(7, 1)
        layer = DenseLayer(4, 3, "tanh", rng)
        x = rng.normal(size=(5, 4))
        labels = rng.integers(0, 3, size=5)

        def loss_fn():
            out = layer.forward(x)
            return softmax_xent(out, labels)[0]

        layer.zero_grads()
        out = layer.forward(x)
        _, grad = softmax_xent(out, labels)
        layer.backward(grad)
        err = finite_diff_check(
            loss_fn,
            [(layer.weight, layer.weight_grad.copy()),
             (layer.bias, layer.bias_grad.copy())])
        assert err < 1e-5

    @pytest.mark.parametrize("seed", range(100))
    def test_gradients_all_activations_property(self, seed):
        rng = layer_rng(seed, 2)
        activation = ("identity", "tanh", "relu")[seed % 3]
        n_in = int(rng.integers(1, 6))
        n_out = int(rng.integers(2, 6))
        n = int(rng.integers(1, 5))
        layer = DenseLayer(n_in, n_out, activation, rng)
        x = rng.normal(size=(n, n_in))
        labels = rng.integers(0, n_out, size=n)

        def loss_fn():
            return softmax_xent(layer.forward(x), labels)[0]

        layer.zero_grads()
        _, grad = softmax_xent(layer.forward(x), labels)
        layer.backward(grad)
        err = finite_diff_check(
            loss_fn,
            [(layer.weight, layer.weight_grad.copy()),
             (layer.bias, layer.bias_grad.copy())])
        assert err < 1e-4


class TestSoftmaxXent:
    def test_uniform_logits_loss_is_ln2(self):
        loss, _ = softmax_xent(np.array([[0.0, 0.0]]), np.array([0]))
        assert loss == pytest.approx(np.log(2.0), abs=1e-12)

    def test_uniform_logits_gradient(self):
        _, grad = softmax_xent(np.array([[0.0, 0.0]]), np.array([0]))
        np.testing.assert_allclose(grad, [[-0.5, 0.5]], atol=1e-12)

    def test_wide_margin_loss(self):
        # -log(1/(1+e^-20)) evaluated at high precision
        loss, _ = softmax_xent(np.array([[10.0, -10.0]]), np.array([0]))
        assert loss == pytest.approx(2.0611536181902037e-09, rel=1e-6)

    def test_label_out_of_range(self):
        with pytest.raises(ValidationError):
            softmax_xent(np.zeros((1, 2)), np.array([2]))

    @pytest.mark.parametrize("seed", range(25))
    def test_loss_nonneg_and_grad_rows_sum_zero(self, seed):
        rng = layer_rng(seed, 3)
        logits = rng.normal(size=(4, 3)) * 10
        labels = rng.integers(0, 3, size=4)
        loss, grad = softmax_xent(logits, labels)
        assert loss >= 0.0
        np.testing.assert_allclose(grad.sum(axis=1), 0.0, atol=1e-12)

    def test_stability_under_huge_logits(self):
        loss, grad = softmax_xent(np.array([[1e4, -1e4]]), np.array([0]))
        assert np.isfinite(loss)
        assert np.isfinite(grad).all()


def _scalar_layer(value=1.0, lr=0.1, wd=0.0):
    layer = DenseLayer(1, 1, "identity")
    layer.weight[:] = value
    layer.configure_adam(lr, weight_decay=wd)
    return layer


class TestAdamStep:
    def test_zero_grad_zero_decay_is_fixed_point(self):
        layer = _scalar_layer()
        adam_step([layer])
        assert layer.weight[0, 0] == 1.0
        assert layer.adam.step_count == 1

    def test_first_step_magnitude_near_lr(self):
        layer = _scalar_layer(lr=0.05)
        layer.weight_grad[:] = 0.37
        adam_step([layer])
        assert 1.0 - layer.weight[0, 0] == pytest.approx(0.05, rel=1e-6)

    def test_decoupled_decay_hand_value(self):
        # grad=0, wd=0.01, lr=0.1, theta=1.0 -> 0.999
        layer = _scalar_layer(lr=0.1, wd=0.01)
        adam_step([layer])
        assert layer.weight[0, 0] == pytest.approx(0.999, abs=1e-12)

    def test_empty_set_noop(self):
        adam_step([])

    def test_unconfigured_layer_raises(self):
        with pytest.raises(StateError):
            adam_step([DenseLayer(1, 1)])

    def test_grads_zeroed_and_step_counted(self):
        layer = _scalar_layer()
        layer.weight_grad[:] = 1.0
        adam_step([layer])
        adam_step([layer])
        assert layer.adam.step_count == 2
        assert layer.weight_grad[0, 0] == 0.0

    def test_bit_reproducible(self):
        def run():
            rng = layer_rng(3, 4)
            layer = DenseLayer(3, 2, "tanh", rng)
            layer.configure_adam(1e-2, weight_decay=1e-4)
            for _ in range(10):
                layer.weight_grad[:] = rng.normal(size=(2, 3))
                layer.bias_grad[:] = rng.normal(size=2)
                adam_step([layer])
            return layer.weight.copy(), layer.bias.copy()

        w1, b1 = run()
        w2, b2 = run()
        np.testing.assert_array_equal(w1, w2)
        np.testing.assert_array_equal(b1, b2)


class TestFiniteDiffCheck:
    def test_quadratic_is_exact(self):
        theta = np.array([3.0])
        grad = theta.copy()
        err = finite_diff_check(lambda: 0.5 * theta[0] ** 2, [(theta, grad)])
        assert err < 1e-9

    def test_wrong_gradient_is_caught(self):
        theta = np.array([3.0])
        bad_grad = np.array([-1.0])
        err = finite_diff_check(lambda: 0.5 * theta[0] ** 2, [(theta, bad_grad)])
        assert err > 0.5

    def test_nonfinite_loss_raises(self):
        theta = np.array([1.0])
        with pytest.raises(NumericError):
            finite_diff_check(lambda: float("nan"), [(theta, theta.copy())])
