"""PCA, the pairwise-difference scatter matrix, random sensing and LASSO via ISTA."""
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import DimensionError, NumericError, ValidationError
from .linalg import as_matrix, power_iteration, sym_eig_topm

LAMBDA_GRID = (0.01, 0.1, 1.0, 10.0)


def pairwise_scatter(D):
    """``sum_{i,j} (x_i - x_j)(x_i - x_j)^T`` over all ordered pairs of rows."""
    D = as_matrix(D, "D")
    if D.shape[0] < 2:
        raise ValidationError("need at least two points")
    return kernels.pairwise_scatter(D)


def biased_cov(D):
    c = D - D.mean(axis=0)
    return c.T @ c / D.shape[0]


@dataclass
class PcaModel:
    mean: np.ndarray
    components: np.ndarray
    eigenvalues: np.ndarray

    def transform(self, X):
        return (np.asarray(X, float) - self.mean) @ self.components.T

    def reconstruct(self, X):
        return self.mean + self.transform(X) @ self.components


def pca_fit(D, m):
    D = as_matrix(D, "D")
    N, n = D.shape
    if m > n or m < 1:
        raise ValidationError(f"m={m} must lie in [1, {n}]")
    if N < 2:
        raise ValidationError("need at least two points")
    vals, vecs = sym_eig_topm(biased_cov(D), m)
    return PcaModel(D.mean(axis=0), vecs, vals)


def random_gaussian_matrix(m, n, rng):
    """I.i.d. unit-variance Gaussian entries, so ``E||W||_F ~ sqrt(m n)``."""
    if m < 1 or n < 1:
        raise ValidationError("dimensions must be >= 1")
    return rng.normal((m, n))


def soft_threshold(v, t):
    if t < 0:
        raise ValidationError("threshold must be >= 0")
    return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)


@dataclass
class LassoConfig:
    """ISTA settings for ``min ||x||_1 + lam ||y - W x||^2``."""

    lam: float = 1.0
    max_iters: int = 20000
    tol: float = 1e-10
    step_size: float = None  # None: 1 / (2 lam L)

    def __post_init__(self):
        if not self.lam > 0:
            raise ValidationError("lambda must be positive")
        if not self.tol > 0:
            raise ValidationError("tol must be positive")


def lipschitz(W):
    """Largest eigenvalue of ``W^T W``, by power iteration on the smaller Gram matrix."""
    W = as_matrix(W, "W")
    G = W @ W.T if W.shape[0] <= W.shape[1] else W.T @ W
    L = power_iteration(G)
    if not np.isfinite(L):
        raise NumericError("power iteration failed")
    return L


def _step(W, cfg):
    if cfg.step_size is not None:
        return float(cfg.step_size)
    L = lipschitz(W)
    return 1.0 / (2.0 * cfg.lam * L) if L > 0 else 1.0


def lasso_recover(y, W, cfg=None):
    cfg = cfg or LassoConfig()
    W = as_matrix(W, "W")
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (W.shape[0],):
        raise DimensionError(f"y has shape {y.shape}, expected ({W.shape[0]},)")
    x, _ = kernels.ista(y, W, cfg.lam, _step(W, cfg), cfg.max_iters, cfg.tol, np.zeros(W.shape[1]))
    return x


def lasso_recover_batch(Y, W, cfg=None):
    """``lasso_recover`` applied to each row of ``Y``."""
    cfg = cfg or LassoConfig()
    W = as_matrix(W, "W")
    Y = as_matrix(Y, "Y")
    if Y.shape[1] != W.shape[0]:
        raise DimensionError(f"Y rows have length {Y.shape[1]}, expected {W.shape[0]}")
    X, _ = kernels.ista_batch(Y, W, cfg.lam, _step(W, cfg), cfg.max_iters, cfg.tol)
    return X


def lasso_objective(x, y, W, lam):
    r = y - W @ x
    return float(np.sum(np.abs(x)) + lam * r @ r)


def tune_lambda(Y_valid, X_valid, W, grid=LAMBDA_GRID, **cfg_kwargs):
    """Pick the lambda with the smallest mean validation l2 error.

    Returns ``(best_lambda, {lambda: error})``.
    """
    errors = {}
    for lam in grid:
        X_hat = lasso_recover_batch(Y_valid, W, LassoConfig(lam=lam, **cfg_kwargs))
        errors[lam] = float(np.mean(np.linalg.norm(X_valid - X_hat, axis=1)))
    best = min(grid, key=lambda lam: (errors[lam], lam))
    return best, errors
