import numpy as np
import pytest

from advdebias.errors import ValidationError
from advdebias.inlp import (
    iteration_log_csv,
    nullspace_projection,
    run_inlp,
    train_linear_probe,
)
from advdebias.numkit import layer_rng


class TestLinearProbe:
    def test_linearly_separable_is_perfect(self):
        rng = layer_rng(0, 70)
        x = rng.normal(size=(200, 4))
        labels = (x[:, 0] > 0).astype(int)
        x[:, 0] += 2.0 * (2 * labels - 1)
        probe = train_linear_probe(x, labels, epochs=50, seed=0)
        assert probe.accuracy(x, labels) == 1.0

    def test_zero_features_hit_majority(self):
        x = np.zeros((100, 3))
        labels = np.array([1] * 70 + [0] * 30)
        probe = train_linear_probe(x, labels, epochs=20, seed=0)
        assert probe.accuracy(x, labels) == pytest.approx(0.7)

    def test_xor_is_not_linearly_learnable(self):
        rng = layer_rng(1, 70)
        bits = rng.integers(0, 2, size=(400, 2))
        labels = bits[:, 0] ^ bits[:, 1]
        x = bits * 2.0 - 1.0 + 0.05 * rng.normal(size=(400, 2))
        probe = train_linear_probe(x, labels, epochs=50, seed=0)
        assert probe.accuracy(x, labels) <= 0.75

    def test_single_class_rejected(self):
        with pytest.raises(ValidationError):
            train_linear_probe(np.zeros((5, 2)), np.zeros(5))

    def test_deterministic(self):
        rng = layer_rng(2, 70)
        x = rng.normal(size=(60, 3))
        labels = rng.integers(0, 2, size=60)
        p1 = train_linear_probe(x, labels, epochs=10, seed=4)
        p2 = train_linear_probe(x, labels, epochs=10, seed=4)
        np.testing.assert_array_equal(p1.weight, p2.weight)
        assert p1.bias == p2.bias


class TestNullspaceProjection:
    def test_empty_basis_is_identity(self):
        np.testing.assert_array_equal(nullspace_projection(np.zeros((0, 3))),
                                      np.eye(3))

    def test_first_axis_removed(self):
        p = nullspace_projection(np.array([[1.0, 0.0, 0.0]]))
        np.testing.assert_allclose(p, np.diag([0.0, 1.0, 1.0]), atol=1e-15)

    def test_diagonal_direction(self):
        s = 1.0 / np.sqrt(2.0)
        p = nullspace_projection(np.array([[s, s]]))
        np.testing.assert_allclose(p, [[0.5, -0.5], [-0.5, 0.5]], atol=1e-12)

    def test_unnormalized_row_same_projector(self):
        p1 = nullspace_projection(np.array([[3.0, 4.0]]))
        p2 = nullspace_projection(np.array([[0.6, 0.8]]))
        np.testing.assert_allclose(p1, p2, atol=1e-12)

    def test_duplicate_rows_collapse(self):
        v = np.array([[1.0, 2.0, 2.0]])
        p1 = nullspace_projection(v)
        p2 = nullspace_projection(np.vstack([v, v, 2 * v]))
        np.testing.assert_allclose(p1, p2, atol=1e-12)

    def test_not_2d_rejected(self):
        with pytest.raises(ValidationError):
            nullspace_projection(np.zeros(3))

    def test_too_many_rows_rejected(self):
        with pytest.raises(ValidationError):
            nullspace_projection(np.zeros((4, 3)))

    @pytest.mark.parametrize("seed", range(20))
    def test_projector_properties(self, seed):
        rng = layer_rng(seed, 71)
        d = int(rng.integers(2, 9))
        m = int(rng.integers(1, d + 1))
        basis = rng.normal(size=(m, d))
        p = nullspace_projection(basis)
        np.testing.assert_allclose(p @ p, p, atol=1e-8)
        np.testing.assert_allclose(p, p.T, atol=1e-12)
        for v in basis:
            np.testing.assert_allclose(p @ v, 0.0, atol=1e-8)


def _protected_dataset(seed=0, n=600, d=6, strength=3.0):
    rng = layer_rng(seed, 72)
    g = rng.integers(0, 2, size=n)
    x = rng.normal(size=(n, d))
    x[:, 0] += strength * (2 * g - 1)
    return x, g


class TestRunInlp:
    def test_single_direction_removed_in_one_iteration(self):
        # g encoded purely in coordinate 1: g = sign(x_1)
        rng = layer_rng(0, 72)
        x = rng.normal(size=(600, 6))
        g = (x[:, 0] > 0).astype(int)
        res = run_inlp(x[:400], g[:400], x[400:], g[400:], max_iterations=10)
        # iteration 0 trains an effective probe; after one removal a fresh
        # probe drops to chance and the loop stops
        assert res.state.iteration_log[0] >= 0.95
        assert res.state.basis.shape[0] == 1
        # removed direction is (close to) the signal axis e_1
        assert abs(res.state.basis[0, 0]) > 0.99
        majority = max(np.mean(g[400:] == c) for c in (0, 1))
        assert res.state.iteration_log[-1] <= majority + 0.02

    def test_final_probe_at_chance(self):
        x, g = _protected_dataset(1)
        res = run_inlp(x[:400], g[:400], x[400:], g[400:], max_iterations=20)
        majority = max(np.mean(g[400:] == c) for c in (0, 1))
        assert res.state.iteration_log[-1] <= majority + 0.01

    @pytest.mark.parametrize("seed", range(5))
    def test_probe_accuracy_nonincreasing(self, seed):
        rng = layer_rng(seed, 73)
        n, d = 500, 8
        g = rng.integers(0, 2, size=n)
        x = rng.normal(size=(n, d))
        x[:, 0] += 1.5 * (2 * g - 1)
        x[:, 1] += 0.8 * (2 * g - 1)
        res = run_inlp(x[:350], g[:350], x[350:], g[350:], max_iterations=d)
        log = res.state.iteration_log
        for prev, cur in zip(log, log[1:]):
            assert cur <= prev + 0.02

    def test_project_twice_idempotent(self):
        x, g = _protected_dataset(2)
        res = run_inlp(x[:400], g[:400], x[400:], g[400:])
        p = res.state.projector
        np.testing.assert_allclose((x @ p) @ p, x @ p, atol=1e-8)

    def test_iterations_capped_by_dimension(self):
        x, g = _protected_dataset(3, d=4)
        res = run_inlp(x[:400], g[:400], x[400:], g[400:],
                       max_iterations=100, chance_margin=-1.0)
        assert res.state.basis.shape[0] <= 4

    def test_post_hoc_main_classifier(self):
        rng = layer_rng(4, 72)
        n = 600
        y = rng.integers(0, 2, size=n)
        g = rng.integers(0, 2, size=n)
        x = rng.normal(size=(n, 6))
        x[:, 0] += 3.0 * (2 * g - 1)   # protected axis, removed by INLP
        x[:, 1] += 3.0 * (2 * y - 1)   # main axis, untouched
        res = run_inlp(x[:400], g[:400], x[400:], g[400:], y_train=y[:400])
        assert res.main_classifier is not None
        acc = res.main_classifier.accuracy(x[400:] @ res.state.projector,
                                           y[400:])
        assert acc >= 0.95

    def test_no_labels_no_main_classifier(self):
        x, g = _protected_dataset(5)
        res = run_inlp(x[:400], g[:400], x[400:], g[400:])
        assert res.main_classifier is None

    def test_iteration_log_csv(self):
        x, g = _protected_dataset(6)
        res = run_inlp(x[:400], g[:400], x[400:], g[400:])
        text = iteration_log_csv(res.state)
        lines = text.strip().split("\n")
        assert lines[0] == "iteration,probe_dev_accuracy"
        assert len(lines) == 1 + len(res.state.iteration_log)
        assert lines[1].startswith("0,")
