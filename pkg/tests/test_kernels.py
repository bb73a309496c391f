"""Each compiled kernel agrees with its numpy twin."""
import numpy as np
import pytest

from uae import kernels
from uae.rng import Rng

needs_numba = pytest.mark.skipif("numba" not in kernels.BACKENDS, reason="numba unavailable")


def test_active_backend_is_registered():
    assert kernels.ACTIVE in kernels.BACKENDS


def test_jacobi(backend, rng):
    a = rng.normal((7, 7))
    s = a + a.T
    vals, vecs, sweeps = backend["jacobi_eigh"](s, 1e-12, 100)
    assert sweeps >= 0
    np.testing.assert_allclose(vecs @ np.diag(vals) @ vecs.T, s, atol=1e-10)
    np.testing.assert_allclose(np.sort(vals), np.linalg.eigvalsh(s), atol=1e-10)


def test_jacobi_reports_nonconvergence(backend, rng):
    a = rng.normal((6, 6))
    _, _, sweeps = backend["jacobi_eigh"](a + a.T, 1e-12, 0)
    assert sweeps == -1


def test_scatter_is_exact_double_sum(backend, rng):
    D = rng.normal((6, 3))
    expected = sum(np.outer(D[i] - D[j], D[i] - D[j]) for i in range(6) for j in range(6))
    np.testing.assert_allclose(backend["pairwise_scatter"](D), expected, atol=1e-12)


def test_ista_single_and_batch_agree(backend, rng):
    W = rng.normal((5, 12))
    Y = rng.normal((4, 5))
    step = 1.0 / (2 * 0.5 * np.linalg.eigvalsh(W.T @ W).max())
    Xb, _ = backend["ista_batch"](Y, W, 0.5, step, 3000, 1e-12)
    for y, xb in zip(Y, Xb):
        x, _ = backend["ista"](y, W, 0.5, step, 3000, 1e-12, np.zeros(12))
        np.testing.assert_allclose(x, xb, atol=1e-12)


def test_knn_ties_go_to_smallest_label(backend):
    train = np.array([[0.0], [2.0]])
    labels = np.array([1, 0], dtype=np.int64)
    out = backend["knn_vote"](train, labels, np.array([[1.0]]), 2, 2)
    assert out[0] == 0


@needs_numba
def test_backends_agree():
    g = Rng(99)
    nb, np_ = kernels.BACKENDS["numba"], kernels.BACKENDS["numpy"]
    a = g.normal((9, 9))
    s = a @ a.T
    v1, _, _ = nb["jacobi_eigh"](s, 1e-12, 100)
    v2, _, _ = np_["jacobi_eigh"](s, 1e-12, 100)
    np.testing.assert_allclose(np.sort(v1), np.sort(v2), rtol=1e-12)
    D = g.normal((30, 4))
    np.testing.assert_allclose(nb["pairwise_scatter"](D), np_["pairwise_scatter"](D), rtol=1e-12)
    W, Y = g.normal((6, 20)), g.normal((5, 6))
    step = 1.0 / (2 * np.linalg.eigvalsh(W.T @ W).max())
    x1, _ = nb["ista_batch"](Y, W, 1.0, step, 5000, 1e-12)
    x2, _ = np_["ista_batch"](Y, W, 1.0, step, 5000, 1e-12)
    np.testing.assert_allclose(x1, x2, atol=1e-10)
    tr, te = g.normal((50, 3)), g.normal((20, 3))
    lab = g.integers(4, (50,))
    np.testing.assert_array_equal(nb["knn_vote"](tr, lab, te, 3, 4), np_["knn_vote"](tr, lab, te, 3, 4))
