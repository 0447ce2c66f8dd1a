import math

import numpy as np
import pytest

from tailprune import (
    EmbeddingDataset,
    KernelMatrix,
    ScoreKind,
    median_bandwidth,
    rbf_kernel,
    score_scalar,
)

from conftest import tiny_dataset


def make_ds(logits, labels, emb=None):
    logits = np.asarray(logits, dtype=np.float32)
    n, C = logits.shape
    if emb is None:
        emb = np.arange(n * 2, dtype=np.float32).reshape(n, 2)
    return EmbeddingDataset(emb, np.asarray(labels, dtype=np.int64), C,
                            teacher_logits=logits)


class TestScores:
    def test_loss_matches_hand_computation(self):
        ds = make_ds([[2.0, 0.0], [0.0, 1.0]], [0, 1])
        got = score_scalar(ds, ScoreKind.LOSS)
        expected = [math.log(1 + math.exp(-2.0)), math.log(1 + math.exp(-1.0))]
        np.testing.assert_allclose(got, expected, rtol=1e-12)

    def test_entropy_uniform_is_log_c(self):
        ds = make_ds(np.zeros((2, 4)), [0, 3])
        got = score_scalar(ds, ScoreKind.ENTROPY)
        np.testing.assert_allclose(got, math.log(4), rtol=1e-12)

    def test_entropy_nonnegative_on_peaked_rows(self):
        ds = make_ds([[60.0, 0.0, 0.0]], [0])
        assert score_scalar(ds, ScoreKind.ENTROPY)[0] >= 0.0

    def test_el2n_hand_computation(self):
        ds = make_ds([[0.0, 0.0]], [0])
        # probs (0.5, 0.5), residual (-0.5, 0.5)
        got = score_scalar(ds, ScoreKind.EL2N)
        np.testing.assert_allclose(got, [math.sqrt(0.5)], rtol=1e-12)

    def test_el2n_confident_correct_near_zero(self):
        ds = make_ds([[50.0, 0.0]], [0])
        assert score_scalar(ds, ScoreKind.EL2N)[0] < 1e-9

    def test_grad_norm_matches_finite_difference(self):
        # the score claims to equal the full gradient norm of the CE loss
        # through a linear layer with bias, at W = 0, b = 0
        rng = np.random.default_rng(42)
        emb = rng.normal(0, 2.0, (3, 4))
        logits = np.zeros((3, 3))
        labels = np.array([0, 2, 1])
        ds = make_ds(logits, labels, emb=emb.astype(np.float32))
        got = score_scalar(ds, ScoreKind.GRAD_NORM)

        phi = ds.embeddings.astype(np.float64)
        h = 1e-6
        for i in range(3):
            def ce(W, b):
                z = W @ phi[i] + b
                z = z - z.max()
                return float(-z[labels[i]] + math.log(np.exp(z).sum()))

            sq = 0.0
            for r in range(3):
                for c in range(4):
                    Wp = np.zeros((3, 4)); Wp[r, c] = h
                    Wm = np.zeros((3, 4)); Wm[r, c] = -h
                    g = (ce(Wp, np.zeros(3)) - ce(Wm, np.zeros(3))) / (2 * h)
                    sq += g * g
                bp = np.zeros(3); bp[r] = h
                bm = np.zeros(3); bm[r] = -h
                g = (ce(np.zeros((3, 4)), bp) - ce(np.zeros((3, 4)), bm)) / (2 * h)
                sq += g * g
            np.testing.assert_allclose(got[i], math.sqrt(sq), rtol=1e-5)

    def test_center_dist_symmetric_pair(self):
        emb = np.array([[0.0, 0.0], [2.0, 0.0], [5.0, 5.0]], dtype=np.float32)
        ds = EmbeddingDataset(emb, np.array([0, 0, 1]), 2)
        got = score_scalar(ds, ScoreKind.CENTER_DIST)
        np.testing.assert_allclose(got, [1.0, 1.0, 0.0], atol=1e-12)

    def test_logit_kinds_require_logits(self):
        ds = tiny_dataset()
        for kind in (ScoreKind.LOSS, ScoreKind.ENTROPY, ScoreKind.EL2N,
                     ScoreKind.GRAD_NORM):
            with pytest.raises(ValueError):
                score_scalar(ds, kind)
        score_scalar(ds, ScoreKind.CENTER_DIST)  # works without logits


class TestBandwidth:
    def test_two_points(self):
        pts = np.array([[0.0, 0.0], [3.0, 4.0]])
        assert median_bandwidth(pts) == 5.0

    def test_identical_points_rejected(self):
        with pytest.raises(ValueError):
            median_bandwidth(np.ones((5, 2)))

    def test_single_point_rejected(self):
        with pytest.raises(ValueError):
            median_bandwidth(np.ones((1, 2)))

    def test_subsample_deterministic(self):
        rng = np.random.default_rng(0)
        pts = rng.normal(0, 1, (3000, 3))
        assert median_bandwidth(pts) == median_bandwidth(pts)


class TestRbfKernel:
    def test_diagonal_exactly_one(self):
        rng = np.random.default_rng(1)
        K = rbf_kernel(rng.normal(0, 1, (40, 5)))
        np.testing.assert_array_equal(np.diag(K.values), 1.0)

    def test_exactly_symmetric(self):
        rng = np.random.default_rng(2)
        K = rbf_kernel(rng.normal(0, 1, (40, 5))).values
        np.testing.assert_array_equal(K, K.T)

    def test_range(self):
        rng = np.random.default_rng(3)
        K = rbf_kernel(rng.normal(0, 1, (30, 4))).values
        assert K.min() >= 0.0 and K.max() <= 1.0

    def test_known_value(self):
        # two points at distance d with bandwidth d: exp(-d^2/(2 d^2))
        pts = np.array([[0.0], [2.0]])
        K = rbf_kernel(pts, bandwidth=2.0)
        np.testing.assert_allclose(K.values[0, 1], math.exp(-0.5), rtol=1e-15)

    def test_default_bandwidth_is_median(self):
        pts = np.array([[0.0], [1.0], [3.0]])
        K = rbf_kernel(pts)
        assert K.bandwidth == 2.0  # pairwise distances 1, 2, 3

    def test_single_point(self):
        K = rbf_kernel(np.zeros((1, 3)), bandwidth=1.0)
        np.testing.assert_array_equal(K.values, [[1.0]])

    def test_invalid_bandwidth(self):
        with pytest.raises(ValueError):
            rbf_kernel(np.zeros((2, 2)), bandwidth=0.0)

    def test_kernel_matrix_must_be_square(self):
        with pytest.raises(ValueError):
            KernelMatrix(np.zeros((2, 3)), 1.0)
