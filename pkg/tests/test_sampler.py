import numpy as np
import pytest

from uae.errors import ValidationError
from uae.nets import DecoderNet, Encoder, GaussianChannel, Mlp, MlpSpec, build_model
from uae.rng import Rng
from uae.sampler import (
    STREAM_CHAIN,
    ChainConfig,
    batch_means_se,
    gibbs_step,
    linear_gaussian_fixed_point,
    sample_chain,
)
from uae.training import TrainConfig, fit


def scalar_chain(w, a, b, sigma):
    ch = GaussianChannel(Encoder(np.array([[float(w)]])), sigma)
    dec = DecoderNet(Mlp(MlpSpec([1, 1]), [np.array([[float(a)]])], [np.array([float(b)])]))
    return ch, dec


def test_noiseless_collapses_to_fixed_point():
    ch, dec = scalar_chain(1.0, 0.5, 1.0, 0.0)
    x = np.array([[7.0]])
    for _ in range(100):
        x, _ = gibbs_step(x, ch, dec, 0.0, Rng(0))
    assert x[0, 0] == pytest.approx(2.0, abs=1e-12)


def test_random_walk_variance_grows_linearly():
    ch, dec = scalar_chain(1.0, 1.0, 0.0, 1.0)
    x = np.zeros((2000, 1))
    rng = Rng(4)
    for t in range(1, 1001):
        x, _ = gibbs_step(x, ch, dec, 0.0, rng)
        if t in (250, 1000):
            assert abs(x.var() / t - 1.0) < 0.1


def test_deterministic():
    ch, dec = scalar_chain(1.0, 0.5, 1.0, 0.5)
    cfg = ChainConfig(burn_in=10, n_samples=20, thin=3, decoder_sample_std=0.2, seed=9)
    np.testing.assert_array_equal(sample_chain([0.0], ch, dec, cfg), sample_chain([0.0], ch, dec, cfg))


def test_single_sample_is_one_step():
    ch, dec = scalar_chain(0.7, 0.9, -0.2, 0.3)
    cfg = ChainConfig(burn_in=0, n_samples=1, thin=1, decoder_sample_std=0.1, seed=2)
    out = sample_chain([0.4], ch, dec, cfg)
    ref, _ = gibbs_step(np.array([0.4]), ch, dec, 0.1, Rng(2, STREAM_CHAIN))
    np.testing.assert_array_equal(out[0], ref)


def test_trajectory_length():
    ch, dec = scalar_chain(1.0, 0.5, 0.0, 0.1)
    assert sample_chain([0.0], ch, dec, ChainConfig(burn_in=3, n_samples=17, thin=2)).shape == (17, 1)


def test_config_validation():
    with pytest.raises(ValidationError):
        ChainConfig(n_samples=0)
    with pytest.raises(ValidationError):
        ChainConfig(thin=0)
    with pytest.raises(ValidationError):
        linear_gaussian_fixed_point(1.0, 1.0, 0.0, 1.0, 0.0)


def test_fixed_point_formula():
    mean, var = linear_gaussian_fixed_point(1.0, 0.5, 1.0, 0.5, 1.0)
    assert mean == pytest.approx(2.0)
    assert var == pytest.approx(1.0625 / 0.75)


def test_stationary_moments():
    ch, dec = scalar_chain(1.0, 0.5, 1.0, 0.5)
    s = sample_chain([0.0], ch, dec, ChainConfig(burn_in=500, n_samples=20000, thin=1,
                                                  decoder_sample_std=1.0, seed=1))
    mean, var = linear_gaussian_fixed_point(1.0, 0.5, 1.0, 0.5, 1.0)
    assert abs(s.mean() - mean) < 3 * batch_means_se(s)[0]
    assert abs(s.var() / var - 1) < 0.1


def test_trained_linear_model_mean():
    rng = Rng(6)
    X = 0.5 + 0.1 * rng.normal((600, 1))
    model = build_model(1, 1, hidden=(), output_activation="identity", sigma=0.3, seed=6)
    model, _ = fit((X[:400], X[400:]), TrainConfig(max_epochs=30, lr=0.01, batch_size=20, sigma=0.3), model)
    w = model.channel.encoder.W[0, 0]
    a, b = model.decoder.mlp.weights[0][0, 0], model.decoder.mlp.biases[0][0]
    mean, _ = linear_gaussian_fixed_point(w, a, b, 0.3, 0.0)
    s = sample_chain([0.5], model.channel, model.decoder,
                     ChainConfig(burn_in=200, n_samples=10000, thin=1, seed=3))
    assert abs(s.mean() - mean) < 3 * batch_means_se(s)[0]
    assert abs(mean - 0.5) < 0.05


def test_two_chains_agree():
    ch, dec = scalar_chain(0.8, 0.6, 0.3, 0.4)
    cfg = dict(burn_in=200, n_samples=10000, thin=1, decoder_sample_std=0.5)
    s1 = sample_chain([-3.0], ch, dec, ChainConfig(seed=1, **cfg))
    s2 = sample_chain([3.0], ch, dec, ChainConfig(seed=2, **cfg))
    se = np.hypot(batch_means_se(s1)[0], batch_means_se(s2)[0])
    assert abs(s1.mean() - s2.mean()) < 3 * se


def test_batch_means_needs_samples():
    with pytest.raises(ValidationError):
        batch_means_se(np.zeros(10), n_batches=50)
