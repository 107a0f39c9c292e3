import math

import numpy as np
import pytest

from convmix.densemath import finite_diff_check, seeded_rng
from convmix.errors import ComplementEmpty, EmptyPairSet, ShapeMismatch
from convmix.refine import (
    NeighborPairs,
    RefinerParams,
    Step2Config,
    _loss_grad_exact,
    _loss_grad_sampled,
    init_refiner,
    knn_pairs,
    loss_refine,
    refine_forward,
    sample_negatives,
    train_step2,
)


def as_pair_set(pairs):
    return {tuple(p) for p in pairs.positives.tolist()}


class TestKnnPairs:
    def test_line_example(self):
        h = np.array([[0.0], [0.1], [5.0]])
        assert as_pair_set(knn_pairs(h, 1)) == {(0, 1), (1, 2)}

    def test_saturation(self):
        h = seeded_rng(0).normal(size=(5, 2))
        pairs = knn_pairs(h, 10)
        assert len(pairs.positives) == 10    # all C(5,2) pairs

    def test_tie_breaks_to_lower_index(self):
        h = np.array([[0.0], [0.0], [1.0]])
        # node 2 is equidistant from 0 and 1; the tie goes to node 0
        pairs = knn_pairs(h, 1)
        assert as_pair_set(pairs) == {(0, 1), (0, 2)}

    def test_pure_function(self):
        h = seeded_rng(1).normal(size=(12, 3))
        p1 = knn_pairs(h, 3)
        p2 = knn_pairs(h, 3)
        np.testing.assert_array_equal(p1.positives, p2.positives)

    def test_neighbor_lists_have_k_entries(self):
        h = seeded_rng(2).normal(size=(9, 2))
        pairs = knn_pairs(h, 4)
        assert all(len(lst) == 4 for lst in pairs.neighbor_lists)
        assert all(i not in lst for i, lst in enumerate(pairs.neighbor_lists))


class TestSampleNegatives:
    def test_only_complement_pair(self):
        pairs = NeighborPairs(positives=np.array([[0, 1], [1, 2]]),
                              neighbor_lists=[], num_nodes=3, k=1)
        neg = sample_negatives(pairs, 1, seeded_rng(3))
        np.testing.assert_array_equal(neg, [[0, 2]])

    def test_complement_empty(self):
        pairs = NeighborPairs(positives=np.array([[0, 1], [0, 2], [1, 2]]),
                              neighbor_lists=[], num_nodes=3, k=2)
        with pytest.raises(ComplementEmpty):
            sample_negatives(pairs, 1, seeded_rng(4))

    def test_deterministic(self):
        h = seeded_rng(5).normal(size=(20, 2))
        pairs = knn_pairs(h, 2)
        n1 = sample_negatives(pairs, 30, seeded_rng(6))
        n2 = sample_negatives(pairs, 30, seeded_rng(6))
        np.testing.assert_array_equal(n1, n2)
        pos = as_pair_set(pairs)
        assert all(tuple(p) not in pos and p[0] != p[1] for p in n1.tolist())


class TestRefineForward:
    def test_zero_params_identity(self):
        h = seeded_rng(7).normal(size=(6, 4))
        params = RefinerParams(w1=np.zeros((4, 3)), b1=np.zeros(3),
                               w2=np.zeros((3, 4)), b2=np.zeros(4))
        z = refine_forward(h, params)
        assert np.array_equal(z, h)

    def test_zero_input_bias_path(self):
        rng = seeded_rng(8)
        params = init_refiner(3, 5, rng)
        params.b1[:] = rng.normal(size=5)
        params.w2[:] = rng.normal(size=(5, 3))
        params.b2[:] = rng.normal(size=3)
        z = refine_forward(np.zeros((2, 3)), params)
        expected = np.tanh(params.b1) @ params.w2 + params.b2
        np.testing.assert_allclose(z, np.tile(expected, (2, 1)), atol=1e-12)

    def test_residual_matches_independent_forward(self):
        rng = seeded_rng(9)
        h = rng.normal(size=(7, 3))
        params = init_refiner(3, 4, rng)
        params.w2[:] = rng.normal(size=(4, 3))
        params.b2[:] = rng.normal(size=3)
        z = refine_forward(h, params)
        # row-by-row oracle
        for i in range(7):
            hidden = np.tanh(params.w1.T @ h[i] + params.b1)
            f_i = params.w2.T @ hidden + params.b2
            np.testing.assert_allclose(z[i] - h[i], f_i, atol=1e-12)

    def test_shape_mismatch(self):
        params = init_refiner(3, 4, seeded_rng(10))
        with pytest.raises(ShapeMismatch):
            refine_forward(np.zeros((2, 5)), params)


class TestLossRefine:
    def test_hand_case(self):
        z = np.array([[0.0], [1.0], [10.0], [11.0]])
        pos = np.array([[0, 1], [2, 3]])
        neg = np.array([[0, 2], [0, 3], [1, 2], [1, 3]])
        assert loss_refine(z, pos, neg, tau=1.0) == pytest.approx(math.exp(-9.0),
                                                                  rel=1e-12)

    def test_equal_means_give_one(self):
        z = np.array([[0.0], [1.0], [2.0]])
        pos = np.array([[0, 1]])
        neg = np.array([[1, 2]])
        assert loss_refine(z, pos, neg, tau=1.0) == pytest.approx(1.0)

    def test_large_tau_limit(self):
        z = seeded_rng(11).normal(size=(6, 2))
        pos = np.array([[0, 1], [2, 3]])
        neg = np.array([[0, 4], [1, 5]])
        assert loss_refine(z, pos, neg, tau=1e9) == pytest.approx(1.0, abs=1e-6)

    def test_positivity(self):
        rng = seeded_rng(12)
        for _ in range(10):
            z = rng.normal(size=(8, 3))
            pos = np.array([[0, 1], [2, 3]])
            neg = np.array([[4, 5], [6, 7]])
            assert loss_refine(z, pos, neg, tau=0.5) > 0

    def test_empty_pairs(self):
        with pytest.raises(EmptyPairSet):
            loss_refine(np.zeros((3, 1)), np.empty((0, 2), dtype=int),
                        np.array([[0, 1]]), tau=1.0)


class TestGradients:
    def _exact_loss_fn(self, h, pos_w, counts, tau):
        def fn(p):
            rp = RefinerParams(w1=p["w1"], b1=p["b1"], w2=p["w2"], b2=p["b2"])
            z = refine_forward(h, rp)
            n = len(h)
            d = np.linalg.norm(z[:, None, :] - z[None, :, :], axis=2)
            iu = np.triu_indices(n, 1)
            mask = pos_w[iu] > 0
            return float(np.exp((d[iu][mask].mean() - d[iu][~mask].mean()) / tau))
        return fn

    def test_exact_complement_gradients(self):
        for seed in range(6):
            rng = seeded_rng(500 + seed)
            h = rng.normal(size=(6, 3))
            params = init_refiner(3, 4, rng)
            params.w2[:] = rng.normal(scale=0.3, size=(4, 3))
            params.b2[:] = rng.normal(scale=0.1, size=3)
            pairs = knn_pairs(h, 2)
            n = 6
            pos_w = np.zeros((n, n))
            pos_w[pairs.positives[:, 0], pairs.positives[:, 1]] = 1.0
            pos_w += pos_w.T
            counts = (len(pairs.positives), n * (n - 1) // 2 - len(pairs.positives))
            z, u = refine_forward(h, params, return_hidden=True)
            _, grads = _loss_grad_exact(z, u, h, params, pos_w, counts, tau=0.8)
            err = finite_diff_check(self._exact_loss_fn(h, pos_w, counts, 0.8),
                                    {k: v.copy() for k, v in params.as_dict().items()},
                                    grads, eps=1e-6)
            assert err < 1e-4, f"seed {seed}: {err}"

    def test_sampled_gradients(self):
        rng = seeded_rng(600)
        h = rng.normal(size=(8, 2))
        params = init_refiner(2, 3, rng)
        params.w2[:] = rng.normal(scale=0.3, size=(3, 2))
        pos = np.array([[0, 1], [2, 3]])
        neg = np.array([[4, 5], [6, 7], [0, 4]])
        z, u = refine_forward(h, params, return_hidden=True)
        _, grads = _loss_grad_sampled(z, u, h, params, pos, neg, tau=1.0)

        def fn(p):
            rp = RefinerParams(w1=p["w1"], b1=p["b1"], w2=p["w2"], b2=p["b2"])
            return loss_refine(refine_forward(h, rp), pos, neg, tau=1.0)

        err = finite_diff_check(fn, {k: v.copy() for k, v in params.as_dict().items()},
                                grads, eps=1e-6)
        assert err < 1e-4


class TestTrainStep2:
    def test_skip_preservation_bitwise(self):
        h = seeded_rng(13).normal(size=(10, 4))
        params = init_refiner(4, 4, seeded_rng(14))
        assert np.array_equal(refine_forward(h, params), h)

    def test_zero_lr_returns_initial_forward(self):
        h = seeded_rng(15).normal(size=(12, 3))
        res = train_step2(h, Step2Config(knn=2, epochs=5, lr=0.0, seed=1))
        assert np.array_equal(res.embeddings, h)   # zero-init output layer

    def test_trace_decreasing_after_warmup(self):
        h = seeded_rng(16).normal(size=(50, 4))
        res = train_step2(h, Step2Config(knn=5, epochs=60, seed=2))
        trace = res.trace["total"]
        for a, b in zip(trace[10:], trace[11:]):
            assert b <= a + 1e-9

    def test_deterministic(self):
        h = seeded_rng(17).normal(size=(15, 3))
        cfg = Step2Config(knn=3, epochs=10, seed=3)
        r1 = train_step2(h, cfg)
        r2 = train_step2(h, cfg)
        np.testing.assert_array_equal(r1.embeddings, r2.embeddings)

    def test_sampled_negative_mode(self):
        h = seeded_rng(18).normal(size=(25, 3))
        cfg = Step2Config(knn=3, epochs=8, seed=4, neg_exact_threshold=10,
                          neg_sample=60)
        res = train_step2(h, cfg)
        assert np.isfinite(res.trace["total"]).all()

    def test_exact_loss_matches_loss_refine_on_full_complement(self):
        h = seeded_rng(19).normal(size=(7, 2))
        cfg = Step2Config(knn=2, epochs=1, lr=0.0, seed=5)
        res = train_step2(h, cfg)
        pos = res.pairs.positives
        pos_set = {tuple(p) for p in pos.tolist()}
        neg = np.array([(i, j) for i in range(7) for j in range(i + 1, 7)
                        if (i, j) not in pos_set])
        expected = loss_refine(h, pos, neg, tau=cfg.tau)   # z = h at zero lr
        assert res.trace["total"][0] == pytest.approx(expected, rel=1e-12)
