import math

import numpy as np
import pytest

from convmix.densemath import (
    Adam,
    derive_seed,
    finite_diff_check,
    kmeanspp_centers,
    pairwise_euclidean,
    seeded_rng,
    softmax,
    spearman,
)
from convmix.errors import (
    DegenerateInput,
    LengthMismatch,
    NonFiniteGradient,
    ShapeMismatch,
)


class TestSoftmax:
    def test_uniform(self):
        np.testing.assert_allclose(softmax([0.0, 0.0, 0.0]), [1 / 3] * 3, atol=1e-15)

    def test_analytic(self):
        np.testing.assert_allclose(softmax([math.log(2), 0.0, 0.0]),
                                   [0.5, 0.25, 0.25], atol=1e-15)

    def test_large_logit_no_overflow(self):
        p = softmax([1000.0, 0.0, 0.0])
        assert np.all(np.isfinite(p))
        assert p[0] > 1 - 1e-12 and p[1] < 1e-12

    def test_sums_to_one_and_shift_invariant(self):
        rng = seeded_rng(0)
        for _ in range(20):
            z = rng.normal(scale=5, size=7)
            p = softmax(z)
            assert abs(p.sum() - 1.0) < 1e-12
            np.testing.assert_allclose(p, softmax(z + 17.3), atol=1e-12)


class TestPairwiseEuclidean:
    def test_scalar(self):
        np.testing.assert_allclose(pairwise_euclidean(np.array([[0.0]]),
                                                      np.array([[3.0]])), [[3.0]])

    def test_self_zero_diagonal_symmetric(self):
        a = seeded_rng(1).normal(size=(6, 3))
        d = pairwise_euclidean(a, a)
        assert np.all(np.diag(d) == 0.0)
        np.testing.assert_allclose(d, d.T, atol=1e-12)

    def test_hand_case(self):
        a = np.array([[0.0, 0.0], [1.0, 1.0]])
        b = np.array([[1.0, 0.0]])
        np.testing.assert_allclose(pairwise_euclidean(a, b), [[1.0], [1.0]])

    def test_triangle_inequality(self):
        rng = seeded_rng(2)
        x = rng.normal(size=(30, 4))
        d = pairwise_euclidean(x, x)
        for _ in range(200):
            i, j, k = rng.integers(0, 30, size=3)
            assert d[i, j] <= d[i, k] + d[k, j] + 1e-9

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            pairwise_euclidean(np.zeros((2, 3)), np.zeros((2, 4)))


class TestAdam:
    def test_quadratic_convergence(self):
        x = np.array([1.0])
        opt = Adam(lr=0.1)
        for _ in range(200):
            opt.step({"x": x}, {"x": 2.0 * x})
        assert abs(x[0]) < 0.01

    def test_zero_gradient_keeps_params(self):
        x = np.array([1.5, -2.0])
        opt = Adam(lr=0.1)
        opt.step({"x": x}, {"x": np.zeros(2)})
        np.testing.assert_allclose(x, [1.5, -2.0])
        assert opt.t == 1

    def test_nan_gradient(self):
        opt = Adam()
        with pytest.raises(NonFiniteGradient):
            opt.step({"x": np.ones(2)}, {"x": np.array([1.0, np.nan])})

    def test_shape_mismatch(self):
        opt = Adam()
        with pytest.raises(ShapeMismatch):
            opt.step({"x": np.ones(2)}, {"x": np.ones(3)})


class TestFiniteDiff:
    def test_square(self):
        p = {"x": np.array([3.0])}
        err = finite_diff_check(lambda q: float(q["x"][0] ** 2), p,
                                {"x": np.array([6.0])})
        assert err < 1e-6

    def test_quadratic_form(self):
        rng = seeded_rng(3)
        a = rng.normal(size=(4, 4))
        a = a + a.T
        x = rng.normal(size=4)
        loss = lambda p: float(p["x"] @ a @ p["x"])
        err = finite_diff_check(loss, {"x": x.copy()}, {"x": 2.0 * a @ x})
        assert err < 1e-6

    def test_detects_wrong_gradient(self):
        p = {"x": np.array([3.0])}
        err = finite_diff_check(lambda q: float(q["x"][0] ** 2), p,
                                {"x": np.array([5.0])})
        assert err > 0.1


class TestSpearman:
    def test_monotone(self):
        assert spearman([1, 2, 3], [10, 20, 30]) == pytest.approx(1.0)

    def test_antimonotone(self):
        assert spearman([1, 2, 3], [30, 20, 10]) == pytest.approx(-1.0)

    def test_hand_case(self):
        assert spearman([1, 2, 3, 4], [1, 3, 2, 4]) == pytest.approx(0.8)

    def test_tie_average_ranks(self):
        # (1,1,2) ranks -> (1.5, 1.5, 3); perfectly co-monotone with (5,5,9)
        assert spearman([1, 1, 2], [5, 5, 9]) == pytest.approx(1.0)

    def test_monotone_transform_invariance(self):
        rng = seeded_rng(4)
        x = rng.normal(size=40)
        y = rng.normal(size=40)
        base = spearman(x, y)
        assert spearman(np.exp(x), y) == pytest.approx(base, abs=1e-12)
        assert spearman(x, y**3) == pytest.approx(base, abs=1e-12)

    def test_errors(self):
        with pytest.raises(LengthMismatch):
            spearman([1, 2], [1, 2, 3])
        with pytest.raises(DegenerateInput):
            spearman([1, 1, 1], [1, 2, 3])


class TestRng:
    def test_same_seed_same_stream(self):
        a = seeded_rng(123).random(100)
        b = seeded_rng(123).random(100)
        np.testing.assert_array_equal(a, b)

    def test_different_seeds_differ(self):
        assert not np.array_equal(seeded_rng(1).random(100), seeded_rng(2).random(100))

    def test_uniform_mean(self):
        draws = seeded_rng(5).random(1_000_000)
        assert abs(draws.mean() - 0.5) < 0.002

    def test_derive_seed_label_sensitivity(self):
        assert derive_seed(0, "step1") != derive_seed(0, "step2")
        assert derive_seed(0, "step1") == derive_seed(0, "step1")
        assert derive_seed(0, "step1") != derive_seed(1, "step1")


class TestKmeansppCenters:
    def test_deterministic(self):
        x = seeded_rng(6).normal(size=(20, 3))
        c1 = kmeanspp_centers(x, 4, seeded_rng(7))
        c2 = kmeanspp_centers(x, 4, seeded_rng(7))
        np.testing.assert_array_equal(c1, c2)

    def test_centers_are_data_points(self):
        x = seeded_rng(8).normal(size=(15, 2))
        centers = kmeanspp_centers(x, 3, seeded_rng(9))
        for c in centers:
            assert np.any(np.all(np.isclose(x, c), axis=1))
