"""Gibbs chain that alternates the measurement channel and the decoder."""
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .nets import decode, sample_measurement
from .rng import Rng

STREAM_CHAIN = 7


@dataclass
class ChainConfig:
    burn_in: int = 1000
    n_samples: int = 100
    thin: int = 10
    decoder_sample_std: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.n_samples < 1:
            raise ValidationError("n_samples must be >= 1")
        if self.thin < 1:
            raise ValidationError("thin must be >= 1")
        if self.burn_in < 0 or self.decoder_sample_std < 0:
            raise ValidationError("burn_in and decoder_sample_std must be >= 0")


def gibbs_step(x, channel, decoder, std_dec, rng):
    """``y ~ N(W f(x), sigma^2 I)`` then ``x' = g(y) + std_dec * N(0, I)``."""
    if std_dec < 0:
        raise ValidationError("std_dec must be >= 0")
    y, _ = sample_measurement(channel, x, rng)
    x_next = decode(decoder, y)
    if std_dec > 0:
        x_next = x_next + std_dec * rng.normal(x_next.shape)
    return x_next, y


def sample_chain(x0, channel, decoder, cfg):
    """Run ``burn_in`` steps, then keep every ``thin``-th state until ``n_samples`` are stored."""
    rng = Rng(cfg.seed, STREAM_CHAIN)
    x = np.asarray(x0, dtype=np.float64)
    for _ in range(cfg.burn_in):
        x, _ = gibbs_step(x, channel, decoder, cfg.decoder_sample_std, rng)
    out = np.empty((cfg.n_samples, x.shape[-1]))
    for i in range(cfg.n_samples):
        for _ in range(cfg.thin):
            x, _ = gibbs_step(x, channel, decoder, cfg.decoder_sample_std, rng)
        out[i] = x
    return out


def linear_gaussian_fixed_point(w, a, b, sigma, std_dec):
    """Stationary mean and variance of ``x' = a (w x + sigma z) + b + std_dec z'``.

    Requires ``|a w| < 1``.
    """
    rho = a * w
    if abs(rho) >= 1:
        raise ValidationError(f"|a w| = {abs(rho)} must be < 1 for a stationary law")
    mean = b / (1.0 - rho)
    var = (a * a * sigma * sigma + std_dec * std_dec) / (1.0 - rho * rho)
    return mean, var


def batch_means_se(samples, n_batches=50):
    """Standard error of the chain mean from non-overlapping batch means (per column)."""
    s = np.asarray(samples, dtype=np.float64)
    if s.ndim == 1:
        s = s[:, None]
    size = s.shape[0] // n_batches
    if size < 1:
        raise ValidationError("too few samples for batch means")
    means = s[: size * n_batches].reshape(n_batches, size, -1).mean(axis=1)
    return means.std(axis=0, ddof=1) / np.sqrt(n_batches)
