import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from uae.errors import DimensionError, StateError, ValidationError
from uae.linalg import finite_diff_grad
from uae.nets import (
    DecoderNet,
    Encoder,
    GaussianChannel,
    Mlp,
    MlpSpec,
    Tape,
    backward,
    build_model,
    decode,
    encode_mean,
    sample_measurement,
)
from uae.rng import Rng
from uae.training import loss_at


def relu(a):
    return np.maximum(a, 0)


class TestEncodeMean:
    def test_zero_input(self, rng):
        enc = Encoder(rng.normal((3, 5)))
        np.testing.assert_array_equal(encode_mean(enc, np.zeros(5)), np.zeros(3))

    def test_identity(self):
        np.testing.assert_array_equal(encode_mean(Encoder(np.eye(2)), [3.0, 4.0]), [3.0, 4.0])

    def test_relu_acquisition_by_hand(self, rng):
        acq = Mlp.init(MlpSpec([4, 6, 5]), rng)
        W = rng.normal((2, 5))
        x = rng.normal(4)
        h = relu(acq.weights[0] @ x + acq.biases[0])
        f = acq.weights[1] @ h + acq.biases[1]
        np.testing.assert_allclose(encode_mean(Encoder(W, acq), x), W @ f, atol=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            encode_mean(Encoder(np.eye(2)), np.zeros(3))

    @settings(max_examples=30, deadline=None)
    @given(st.floats(-5, 5), st.floats(-5, 5), st.integers(0, 2**32))
    def test_linear_without_acquisition(self, alpha, beta, seed):
        g = Rng(seed)
        enc = Encoder(g.normal((3, 6)))
        x1, x2 = g.normal(6), g.normal(6)
        lhs = encode_mean(enc, alpha * x1 + beta * x2)
        rhs = alpha * encode_mean(enc, x1) + beta * encode_mean(enc, x2)
        np.testing.assert_allclose(lhs, rhs, atol=1e-10)


class TestSampleMeasurement:
    def test_zero_noise(self, rng):
        ch = GaussianChannel(Encoder(rng.normal((2, 3))), 0.0)
        x = rng.normal(3)
        y, _ = sample_measurement(ch, x, Rng(0))
        np.testing.assert_array_equal(y, encode_mean(ch.encoder, x))

    def test_deterministic(self, rng):
        ch = GaussianChannel(Encoder(rng.normal((2, 3))), 0.1)
        a = sample_measurement(ch, np.ones(3), Rng(5))
        b = sample_measurement(ch, np.ones(3), Rng(5))
        np.testing.assert_array_equal(a[0], b[0])
        np.testing.assert_array_equal(a[1], b[1])

    def test_moments(self):
        ch = GaussianChannel(Encoder(np.eye(2)), 0.1)
        draws = 100_000
        y, _ = sample_measurement(ch, np.zeros((draws, 2)), Rng(17))
        assert np.all(np.abs(y.mean(axis=0)) < 3 * 0.1 / np.sqrt(draws))
        assert np.all(np.abs(y.var(axis=0) - 0.01) < 0.05 * 0.01)

    def test_y_is_mean_plus_scaled_z(self, rng):
        ch = GaussianChannel(Encoder(rng.normal((3, 4))), 0.7)
        x = rng.normal(4)
        y, z = sample_measurement(ch, x, Rng(1))
        np.testing.assert_allclose(y, encode_mean(ch.encoder, x) + 0.7 * z, atol=0)


class TestDecode:
    def test_zero_final_layer(self, rng):
        mlp = Mlp.init(MlpSpec([2, 4, 3]), rng)
        mlp.weights[-1][:] = 0.0
        mlp.biases[-1][:] = [0.1, -0.2, 0.3]
        np.testing.assert_array_equal(decode(DecoderNet(mlp), rng.normal(2)), [0.1, -0.2, 0.3])

    def test_sigmoid_of_zero(self):
        mlp = Mlp.zeros(MlpSpec([2, 3, 4], output_activation="sigmoid"))
        np.testing.assert_array_equal(decode(DecoderNet(mlp), np.ones(2)), np.full(4, 0.5))

    def test_forward_oracle(self, rng):
        mlp = Mlp.init(MlpSpec([3, 5, 4, 2], output_activation="sigmoid"), rng)
        y = rng.normal(3)
        h = y
        for i, (w, b) in enumerate(zip(mlp.weights, mlp.biases)):
            h = w @ h + b
            if i < 2:
                h = relu(h)
        expected = 1 / (1 + np.exp(-h))
        np.testing.assert_allclose(decode(DecoderNet(mlp), y), expected, rtol=0, atol=1e-12)

    def test_bernoulli_output_in_open_interval(self, rng):
        mlp = Mlp.init(MlpSpec([2, 8, 5], output_activation="sigmoid"), rng)
        out = decode(DecoderNet(mlp, "bernoulli"), 3 * rng.normal((200, 2)))
        assert np.all((out > 0) & (out < 1))

    def test_bernoulli_requires_sigmoid(self, rng):
        with pytest.raises(ValidationError):
            DecoderNet(Mlp.init(MlpSpec([2, 3]), rng), "bernoulli")

    def test_shape_mismatch(self, rng):
        with pytest.raises(DimensionError):
            decode(DecoderNet(Mlp.init(MlpSpec([2, 3]), rng)), np.zeros(3))


class TestBackward:
    def test_missing_tape(self):
        with pytest.raises(StateError):
            backward(None)

    def test_tape_without_loss(self, rng):
        model = build_model(3, 2, hidden=(4,))
        from uae.nets import forward

        with pytest.raises(StateError):
            backward(forward(model.channel, model.decoder, rng.normal((2, 3)), rng.normal((2, 2))))

    def test_disconnected_parameter(self, rng):
        # hidden units whose incoming weights are zero and relu'd away get no gradient
        model = build_model(4, 2, hidden=(3,), sigma=0.1, output_activation="identity")
        model.decoder.mlp.weights[0][1] = 0.0
        model.decoder.mlp.biases[0][1] = -1.0
        X, z = rng.normal((6, 4)), rng.normal((6, 2))
        _, tape = loss_at(X, model.channel, model.decoder, z)
        g = backward(tape)
        assert np.all(g.decoder[0][1] == 0) and g.decoder[1][1] == 0
        assert np.all(g.decoder[2][:, 1] == 0)

    def test_linear_quadratic_closed_form(self, rng):
        n, m, sigma = 4, 2, 0.3
        W, D = rng.normal((m, n)), rng.normal((n, m))
        model = build_model(n, m, hidden=(), sigma=sigma, output_activation="identity", W=W)
        model.decoder.mlp.weights[0][:] = D
        X, z = rng.normal((5, n)), rng.normal((5, m))
        _, tape = loss_at(X, model.channel, model.decoder, z)
        Y = X @ W.T + sigma * z
        R = Y @ D.T - X
        # loss = (1/b) sum ||x - D y||^2 / 2  =>  dL/dD = (1/b) R^T Y
        np.testing.assert_allclose(backward(tape).decoder[0], R.T @ Y / 5, atol=1e-9)
        np.testing.assert_allclose(backward(tape).W, (R @ D).T @ X / 5, atol=1e-9)

    @pytest.mark.parametrize("family,out_act,acq", [
        ("gaussian", "identity", False),
        ("gaussian", "sigmoid", True),
        ("bernoulli", "sigmoid", False),
        ("bernoulli", "sigmoid", True),
    ])
    def test_finite_differences_6_3_6(self, rng, family, out_act, acq):
        model = build_model(6, 3, hidden=(5,), sigma=0.4, family=family, output_activation=out_act,
                            acquisition_hidden=(4,) if acq else None, features=5 if acq else None, seed=3)
        X, z = rng.uniform((4, 6)), rng.normal((4, 3))
        _, tape = loss_at(X, model.channel, model.decoder, z)
        analytic = backward(tape).all()
        numeric = finite_diff_grad(lambda: loss_at(X, model.channel, model.decoder, z)[0], model.params(), 1e-5)
        for a, b in zip(analytic, numeric):
            rel = np.abs(a - b) / np.maximum(np.abs(b), 1e-6)
            assert rel.max() < 1e-4


def test_build_model_shapes():
    model = build_model(10, 3, hidden=(7, 5), seed=1)
    assert model.channel.encoder.W.shape == (3, 10)
    assert model.decoder.mlp.spec.layer_sizes == [3, 7, 5, 10]
    assert model.decoder.mlp.spec.output_activation == "sigmoid"
    assert len(model.params()) == 1 + 6


def test_init_variance():
    model = build_model(400, 50, hidden=(), seed=2)
    assert abs(model.channel.encoder.W.var() - 1 / 400) < 0.1 / 400
