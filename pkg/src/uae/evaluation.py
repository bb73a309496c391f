"""Reconstruction metrics, kNN probe, subspace angles and the 2-D PCA-vs-UAE study."""
import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .baselines import pca_fit
from .data_io import make_two_gaussian_mixture
from .errors import DimensionError, ValidationError
from .nets import build_model, decode, sample_measurement
from .rng import Rng
from .training import TrainConfig, default_norm_bound, fit_with_line_search

STREAM_EVAL = 11


@dataclass
class EvalReport:
    method: str
    m: int
    mean_l2_per_image: float
    std_err: float
    n_test: int
    seed: int = 0


def l2_per_image(X, X_hat):
    """Mean Euclidean row error and its standard error."""
    X = np.asarray(X, dtype=np.float64)
    X_hat = np.asarray(X_hat, dtype=np.float64)
    if X.shape != X_hat.shape:
        raise DimensionError(f"shape mismatch {X.shape} vs {X_hat.shape}")
    err = np.linalg.norm(X - X_hat, axis=-1).reshape(-1)
    if err.size == 0:
        return 0.0, 0.0
    se = float(err.std(ddof=1) / math.sqrt(err.size)) if err.size > 1 else 0.0
    return float(err.mean()), se


def knn_predict(train_Z, train_labels, test_Z, k=3):
    """Majority vote of the ``k`` nearest training rows; ties go to the smallest label."""
    train_Z = np.ascontiguousarray(train_Z, dtype=np.float64)
    test_Z = np.ascontiguousarray(test_Z, dtype=np.float64)
    train_labels = np.asarray(train_labels)
    if train_Z.shape[0] == 0:
        raise ValidationError("empty training set")
    if not 1 <= k <= train_Z.shape[0]:
        raise ValidationError(f"k={k} must lie in [1, {train_Z.shape[0]}]")
    if train_labels.shape[0] != train_Z.shape[0]:
        raise DimensionError("one label per training row required")
    if test_Z.ndim != 2 or test_Z.shape[1] != train_Z.shape[1]:
        raise DimensionError(f"test rows must have {train_Z.shape[1]} columns")
    classes, codes = np.unique(train_labels, return_inverse=True)
    pred = kernels.knn_vote(train_Z, codes.astype(np.int64), test_Z, int(k), classes.size)
    return classes[pred]


def _orthonormal_rows(A, name):
    A = np.asarray(A, dtype=np.float64)
    if A.ndim == 1:
        A = A[None, :]
    q, r = np.linalg.qr(A.T)
    d = np.abs(np.diag(r))
    if d.size == 0 or d.min() <= 1e-10 * max(d.max(), 1e-300):
        raise ValidationError(f"{name} rows are rank deficient")
    return q


def principal_angle(A, B):
    """Largest principal angle, in degrees, between the row spaces of ``A`` and ``B``."""
    qa = _orthonormal_rows(A, "A")
    qb = _orthonormal_rows(B, "B")
    if qa.shape != qb.shape:
        raise DimensionError(f"subspaces differ in shape: {qa.shape} vs {qb.shape}")
    cos = np.linalg.svd(qa.T @ qb, compute_uv=False).min()
    # sine from the residual keeps resolution near zero
    sin = np.linalg.norm(qb - qa @ (qa.T @ qb), 2)
    return math.degrees(math.atan2(sin, cos))


def uae_reconstruct(model, X, rng):
    y, _ = sample_measurement(model.channel, X, rng)
    return decode(model.decoder, y)


def evaluate_model(model, X, eval_seed, method="UAE", seed=0):
    X_hat = uae_reconstruct(model, X, Rng(eval_seed, STREAM_EVAL))
    mean, se = l2_per_image(X, X_hat)
    return EvalReport(method, model.m, mean, se, X.shape[0], seed)


def pca_linear_decoder(train, m):
    """PCA projection plus the least-squares affine map from projections back to the data.

    Returns ``(pca, coef)`` where ``x_hat = [t, 1] @ coef`` for projections ``t``.
    """
    pca = pca_fit(train, m)
    t = pca.transform(train)
    design = np.hstack([t, np.ones((t.shape[0], 1))])
    coef, *_ = np.linalg.lstsq(design, train, rcond=None)
    return pca, coef


def pca_linear_reconstruct(pca, coef, X):
    t = pca.transform(X)
    return np.hstack([t, np.ones((t.shape[0], 1))]) @ coef


@dataclass
class MixtureStudyConfig:
    seed: int = 0
    m: int = 1
    n_train: int = 1000
    n_valid: int = 500
    n_test: int = 1000
    sigma: float = 0.1
    hidden: tuple = (64, 64)
    epochs: int = 200
    lr: float = 0.001
    batch_size: int = 100
    mu_a: tuple = (-2.0, 2.0)
    mu_b: tuple = (2.0, -2.0)
    s_long: float = 2.0
    s_short: float = 0.2


def mixture_study(cfg):
    """PCA + linear decoder against a linear-encoder / MLP-decoder UAE on the 2-D mixture.

    Returns ``(pca_report, uae_report, extras)``; ``extras`` carries the fitted
    PCA, the trained model and the train report.
    """
    rng = Rng(cfg.seed, 0)
    total = cfg.n_train + cfg.n_valid + cfg.n_test
    X = make_two_gaussian_mixture(total, rng, cfg.mu_a, cfg.mu_b, cfg.s_long, cfg.s_short)
    train = X[: cfg.n_train]
    valid = X[cfg.n_train:cfg.n_train + cfg.n_valid]
    test = X[cfg.n_train + cfg.n_valid:]

    pca, coef = pca_linear_decoder(train, cfg.m)
    pmean, pse = l2_per_image(test, pca_linear_reconstruct(pca, coef, test))
    pca_rep = EvalReport("PCA", cfg.m, pmean, pse, test.shape[0], cfg.seed)

    model = build_model(
        2, cfg.m, hidden=cfg.hidden, sigma=cfg.sigma, output_activation="identity", seed=cfg.seed
    )
    tcfg = TrainConfig(
        lr=cfg.lr,
        batch_size=cfg.batch_size,
        max_epochs=cfg.epochs,
        sigma=cfg.sigma,
        norm_bound_k=default_norm_bound(cfg.m, 2),
        seed=cfg.seed,
    )
    model, report = fit_with_line_search((train, valid), tcfg, model)
    uae_rep = evaluate_model(model, test, cfg.seed, "UAE", cfg.seed)
    return pca_rep, uae_rep, {"pca": pca, "coef": coef, "model": model, "report": report}
