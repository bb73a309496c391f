import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from uae.baselines import pca_fit
from uae.data_io import make_two_gaussian_mixture
from uae.errors import DimensionError, ValidationError
from uae.evaluation import (
    MixtureStudyConfig,
    evaluate_model,
    mixture_study,
    knn_predict,
    l2_per_image,
    pca_linear_decoder,
    pca_linear_reconstruct,
    principal_angle,
)
from uae.nets import build_model
from uae.rng import Rng


class TestL2:
    def test_equal(self, rng):
        X = rng.normal((5, 3))
        assert l2_per_image(X, X) == (0.0, 0.0)

    def test_three_four_five(self):
        assert l2_per_image([[3.0, 4.0]], [[0.0, 0.0]]) == (5.0, 0.0)

    def test_loop_oracle(self, rng):
        X, Y = rng.normal((40, 6)), rng.normal((40, 6))
        errs = [math.sqrt(sum((a - b) ** 2 for a, b in zip(x, y))) for x, y in zip(X, Y)]
        mean = sum(errs) / 40
        sd = math.sqrt(sum((e - mean) ** 2 for e in errs) / 39)
        got = l2_per_image(X, Y)
        assert got[0] == pytest.approx(mean, rel=1e-12)
        assert got[1] == pytest.approx(sd / math.sqrt(40), rel=1e-12)

    def test_permutation_invariant(self, rng):
        X, Y = rng.normal((30, 4)), rng.normal((30, 4))
        p = rng.permutation(30)
        assert l2_per_image(X[p], Y[p])[0] == pytest.approx(l2_per_image(X, Y)[0], rel=1e-14)

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            l2_per_image(np.zeros((2, 3)), np.zeros((3, 2)))


def brute_knn(train, labels, test, k):
    out = []
    for t in test:
        d = [((t - x) ** 2).sum() for x in train]
        order = sorted(range(len(train)), key=lambda i: (d[i], i))[:k]
        votes = {}
        for i in order:
            votes[labels[i]] = votes.get(labels[i], 0) + 1
        best = max(votes.values())
        out.append(min(c for c, v in votes.items() if v == best))
    return np.array(out)


class TestKnn:
    def test_exact_match(self):
        train = np.array([[0.0, 0.0], [5.0, 5.0], [9.0, 0.0]])
        assert list(knn_predict(train, [4, 7, 1], train, k=1)) == [4, 7, 1]

    def test_clusters(self, rng):
        centers = np.array([[0, 0], [10, 0], [0, 10]], float)
        labels = np.repeat([0, 1, 2], 30)
        train = centers[labels] + rng.normal((90, 2))
        test = centers[[2, 0, 1]] + 0.1 * rng.normal((3, 2))
        assert list(knn_predict(train, labels, test)) == [2, 0, 1]

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10_000), st.integers(1, 5))
    def test_brute_force_oracle(self, seed, k):
        rng = Rng(seed)
        train = np.round(rng.normal((20, 3)), 1)
        labels = rng.integers(4, (20,))
        test = np.round(rng.normal((8, 3)), 1)
        np.testing.assert_array_equal(knn_predict(train, labels, test, k), brute_knn(train, labels, test, k))

    def test_tie_goes_to_smallest_label(self):
        train = np.array([[-1.0], [1.0]])
        assert knn_predict(train, [5, 2], np.array([[0.0]]), k=2)[0] == 2

    def test_errors(self):
        with pytest.raises(ValidationError):
            knn_predict(np.zeros((0, 2)), [], np.zeros((1, 2)))
        with pytest.raises(ValidationError):
            knn_predict(np.zeros((2, 2)), [0, 1], np.zeros((1, 2)), k=3)
        with pytest.raises(DimensionError):
            knn_predict(np.zeros((2, 2)), [0, 1], np.zeros((1, 3)), k=1)


class TestPrincipalAngle:
    def test_identical(self, rng):
        A = rng.normal((2, 5))
        assert principal_angle(A, A) < 1e-10

    def test_orthogonal(self):
        assert principal_angle([[1.0, 0, 0]], [[0, 1.0, 0]]) == pytest.approx(90.0)

    def test_known_angle(self):
        t = math.radians(30)
        assert principal_angle([[1.0, 0]], [[math.cos(t), math.sin(t)]]) == pytest.approx(30.0, abs=1e-10)

    def test_mixing_invariance_and_symmetry(self, rng):
        A, B = rng.normal((3, 7)), rng.normal((3, 7))
        M = rng.normal((3, 3)) + 3 * np.eye(3)
        assert principal_angle(M @ A, A) < 1e-8
        assert principal_angle(A, B) == pytest.approx(principal_angle(B, A), abs=1e-10)
        assert principal_angle(1e6 * A, B) == pytest.approx(principal_angle(A, B), abs=1e-9)

    def test_rank_deficient(self):
        with pytest.raises(ValidationError):
            principal_angle([[1.0, 2.0], [2.0, 4.0]], [[1.0, 0], [0, 1.0]])


def test_pca_decoder_matches_normal_equations(rng):
    X = make_two_gaussian_mixture(300, rng)
    pca, coef = pca_linear_decoder(X, 1)
    t = pca.transform(X)
    A = np.hstack([t, np.ones((300, 1))])
    ref = np.linalg.solve(A.T @ A, A.T @ X)
    np.testing.assert_allclose(coef, ref, atol=1e-8)
    # with centred projections the affine map is the PCA reconstruction itself
    np.testing.assert_allclose(pca_linear_reconstruct(pca, coef, X), pca.reconstruct(X), atol=1e-8)


def test_evaluate_model_deterministic(rng):
    model = build_model(4, 2, hidden=(3,), seed=1)
    X = rng.uniform((10, 4))
    a, b = evaluate_model(model, X, 5), evaluate_model(model, X, 5)
    assert a == b
    assert (a.m, a.n_test, a.method) == (2, 10, "UAE")


def test_mixture_study_full_rank_control():
    pca, uae, extras = mixture_study(MixtureStudyConfig(m=2, sigma=0.01, epochs=100, seed=0))
    assert pca.mean_l2_per_image < 1e-10
    assert uae.mean_l2_per_image < 0.05
    assert np.linalg.norm(extras["model"].channel.encoder.W) <= 1.05 * 2.0
