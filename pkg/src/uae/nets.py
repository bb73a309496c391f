"""Encoder, Gaussian measurement channel and decoder with hand-written backprop.

Layer weights are stored ``(out, in)`` so every weight matrix, including the
measurement matrix ``W`` (m x l), maps column vectors the same way. Batches
are rows: a layer computes ``h @ weight.T + bias``.
"""
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DimensionError, StateError, ValidationError
from .rng import Rng

HIDDEN_ACTIVATIONS = ("relu",)
OUTPUT_ACTIVATIONS = ("identity", "sigmoid")
FAMILIES = ("gaussian", "bernoulli")


def sigmoid(a):
    out = np.empty_like(a)
    pos = a >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-a[pos]))
    ea = np.exp(a[~pos])
    out[~pos] = ea / (1.0 + ea)
    return out


@dataclass
class MlpSpec:
    layer_sizes: list
    hidden_activation: str = "relu"
    output_activation: str = "identity"

    def __post_init__(self):
        self.layer_sizes = [int(s) for s in self.layer_sizes]
        if len(self.layer_sizes) < 2:
            raise ValidationError("an MLP needs input and output sizes")
        if min(self.layer_sizes) < 1:
            raise ValidationError(f"layer sizes must be positive: {self.layer_sizes}")
        if self.hidden_activation not in HIDDEN_ACTIVATIONS:
            raise ValidationError(f"unknown hidden activation {self.hidden_activation!r}")
        if self.output_activation not in OUTPUT_ACTIVATIONS:
            raise ValidationError(f"unknown output activation {self.output_activation!r}")

    @property
    def n_in(self):
        return self.layer_sizes[0]

    @property
    def n_out(self):
        return self.layer_sizes[-1]

    def to_dict(self):
        return {
            "layer_sizes": list(self.layer_sizes),
            "hidden_activation": self.hidden_activation,
            "output_activation": self.output_activation,
        }


@dataclass
class Mlp:
    spec: MlpSpec
    weights: list
    biases: list

    @classmethod
    def init(cls, spec, rng):
        """Weights ~ N(0, 1/fan_in), zero biases."""
        weights, biases = [], []
        for fan_in, fan_out in zip(spec.layer_sizes[:-1], spec.layer_sizes[1:]):
            weights.append(rng.normal((fan_out, fan_in)) / np.sqrt(fan_in))
            biases.append(np.zeros(fan_out))
        return cls(spec, weights, biases)

    @classmethod
    def zeros(cls, spec):
        sizes = spec.layer_sizes
        return cls(
            spec,
            [np.zeros((o, i)) for i, o in zip(sizes[:-1], sizes[1:])],
            [np.zeros(o) for o in sizes[1:]],
        )

    def params(self):
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def copy(self):
        return Mlp(self.spec, [w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def forward(self, h):
        """Returns ``(output, pre_output, cache)``; cache holds each layer's input and pre-activation."""
        if h.shape[-1] != self.spec.n_in:
            raise DimensionError(f"MLP expects {self.spec.n_in} inputs, got {h.shape[-1]}")
        cache = []
        last = len(self.weights) - 1
        a = h
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            a = h @ w.T + b
            cache.append((h, a))
            if i < last:
                h = np.maximum(a, 0.0)
        out = sigmoid(a) if self.spec.output_activation == "sigmoid" else a
        return out, a, cache

    def __call__(self, h):
        return self.forward(h)[0]

    def backward(self, cache, grad_pre_out):
        """Backprop from d(loss)/d(final pre-activation). Returns ``(grad_input, param_grads)``."""
        grads = [None] * (2 * len(self.weights))
        g = grad_pre_out
        for i in range(len(self.weights) - 1, -1, -1):
            h_in, a = cache[i]
            if i < len(self.weights) - 1:
                g = g * (a > 0.0)
            grads[2 * i] = g.T @ h_in
            grads[2 * i + 1] = g.sum(axis=0)
            g = g @ self.weights[i]
        return g, grads


@dataclass
class Encoder:
    """``x -> W f(x)`` with ``f`` either the identity or an MLP."""

    W: np.ndarray
    acquisition: Optional[Mlp] = None

    def __post_init__(self):
        self.W = np.ascontiguousarray(self.W, dtype=np.float64)
        if self.W.ndim != 2:
            raise DimensionError("W must be a matrix")
        if self.acquisition is not None and self.acquisition.spec.n_out != self.W.shape[1]:
            raise DimensionError(
                f"acquisition output {self.acquisition.spec.n_out} != W columns {self.W.shape[1]}"
            )
        if not np.all(np.isfinite(self.W)):
            raise ValidationError("W has non-finite entries")

    @property
    def m(self):
        return self.W.shape[0]

    @property
    def l(self):
        return self.W.shape[1]

    @property
    def n(self):
        return self.l if self.acquisition is None else self.acquisition.spec.n_in

    def params(self):
        return [self.W] + ([] if self.acquisition is None else self.acquisition.params())

    def copy(self):
        acq = None if self.acquisition is None else self.acquisition.copy()
        return Encoder(self.W.copy(), acq)


@dataclass
class GaussianChannel:
    encoder: Encoder
    sigma: float

    def __post_init__(self):
        if not self.sigma >= 0:
            raise ValidationError(f"sigma must be >= 0, got {self.sigma}")

    def copy(self):
        return GaussianChannel(self.encoder.copy(), self.sigma)


@dataclass
class DecoderNet:
    mlp: Mlp
    family: str = "gaussian"
    sigma_dec: float = 1.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValidationError(f"unknown decoder family {self.family!r}")
        if self.family == "bernoulli" and self.mlp.spec.output_activation != "sigmoid":
            raise ValidationError("the bernoulli family needs a sigmoid output")

    @property
    def m(self):
        return self.mlp.spec.n_in

    @property
    def n(self):
        return self.mlp.spec.n_out

    def params(self):
        return self.mlp.params()

    def copy(self):
        return DecoderNet(self.mlp.copy(), self.family, self.sigma_dec)


def _rows(x, n, what):
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != n or x.ndim not in (1, 2):
        raise DimensionError(f"{what} expects length-{n} vectors, got shape {x.shape}")
    return x


def _features(enc, x):
    if enc.acquisition is None:
        return x, None
    feats, _, cache = enc.acquisition.forward(x)
    return feats, cache


def encode_mean(enc, x):
    """Noiseless measurement ``W f(x)`` for a vector or a batch of rows."""
    x = _rows(x, enc.n, "encoder")
    feats, _ = _features(enc, x)
    return feats @ enc.W.T


def sample_measurement(ch, x, rng):
    """Reparameterized draw ``y = W f(x) + sigma z``; returns ``(y, z)``."""
    mean = encode_mean(ch.encoder, x)
    z = rng.normal(mean.shape)
    return mean + ch.sigma * z, z


def decode(dec, y):
    y = _rows(y, dec.m, "decoder")
    return dec.mlp(y)


@dataclass
class Tape:
    """Forward record of one minibatch through channel and decoder."""

    channel: GaussianChannel
    decoder: DecoderNet
    x: np.ndarray
    feats: np.ndarray
    acq_cache: Optional[list]
    z: np.ndarray
    y: np.ndarray
    dec_cache: list
    out: np.ndarray
    pre_out: np.ndarray
    grad_pre_out: Optional[np.ndarray] = None


def forward(ch, dec, x, z):
    """Run ``x`` through the channel with fixed noise ``z`` and decode."""
    x = _rows(x, ch.encoder.n, "encoder")
    if x.ndim == 1:
        x = x[None, :]
    z = np.asarray(z, dtype=np.float64).reshape(x.shape[0], ch.encoder.m)
    feats, acq_cache = _features(ch.encoder, x)
    y = feats @ ch.encoder.W.T + ch.sigma * z
    if dec.m != y.shape[1]:
        raise DimensionError(f"decoder expects {dec.m} measurements, channel emits {y.shape[1]}")
    out, pre, dec_cache = dec.mlp.forward(y)
    return Tape(ch, dec, x, feats, acq_cache, z, y, dec_cache, out, pre)


@dataclass
class Gradients:
    W: np.ndarray
    acquisition: list = field(default_factory=list)
    decoder: list = field(default_factory=list)

    def encoder(self):
        return [self.W] + list(self.acquisition)

    def all(self):
        return self.encoder() + list(self.decoder)


def backward(tape):
    """Pathwise gradients of the recorded loss; noise enters as the constant ``z``."""
    if tape is None or tape.grad_pre_out is None:
        raise StateError("backward needs a tape with a recorded loss gradient")
    enc = tape.channel.encoder
    g_y, dec_grads = tape.decoder.mlp.backward(tape.dec_cache, tape.grad_pre_out)
    g_W = g_y.T @ tape.feats
    acq_grads = []
    if enc.acquisition is not None:
        g_feats = g_y @ enc.W
        if enc.acquisition.spec.output_activation == "sigmoid":
            g_feats = g_feats * tape.feats * (1.0 - tape.feats)
        _, acq_grads = enc.acquisition.backward(tape.acq_cache, g_feats)
    return Gradients(g_W, acq_grads, dec_grads)


STREAM_INIT = 1


@dataclass
class UaeModel:
    """A channel and decoder trained together; ``seed`` is recorded in checkpoints."""

    channel: GaussianChannel
    decoder: DecoderNet
    seed: int = 0

    def __post_init__(self):
        if self.channel.encoder.m != self.decoder.m:
            raise DimensionError(
                f"encoder emits {self.channel.encoder.m} measurements, decoder takes {self.decoder.m}"
            )
        if self.channel.encoder.n != self.decoder.n:
            raise DimensionError(
                f"encoder reads {self.channel.encoder.n} inputs, decoder emits {self.decoder.n}"
            )

    @property
    def m(self):
        return self.channel.encoder.m

    @property
    def n(self):
        return self.channel.encoder.n

    @property
    def sigma(self):
        return self.channel.sigma

    def encoder_params(self):
        return self.channel.encoder.params()

    def decoder_params(self):
        return self.decoder.params()

    def params(self):
        return self.encoder_params() + self.decoder_params()

    def copy(self):
        return UaeModel(self.channel.copy(), self.decoder.copy(), self.seed)


def build_model(
    n,
    m,
    hidden=(500, 500),
    sigma=0.1,
    family="gaussian",
    output_activation="sigmoid",
    acquisition_hidden=None,
    features=None,
    seed=0,
    W=None,
):
    """Fresh model with the default initialization drawn from ``Rng(seed, STREAM_INIT)``.

    ``acquisition_hidden``/``features`` switch on an MLP acquisition net
    ``R^n -> R^features``; otherwise the encoder is linear. A given ``W``
    replaces the drawn measurement matrix (e.g. a random projection).
    """
    rng = Rng(seed, STREAM_INIT)
    acquisition = None
    l = n
    if acquisition_hidden is not None or features is not None:
        l = int(features if features is not None else n)
        spec = MlpSpec([n, *(acquisition_hidden or ()), l])
        acquisition = Mlp.init(spec, rng)
    W0 = rng.normal((m, l)) / np.sqrt(l)
    if W is not None:
        W0 = np.array(W, dtype=np.float64)
        if W0.shape != (m, l):
            raise DimensionError(f"W must be {(m, l)}, got {W0.shape}")
    if family == "bernoulli":
        output_activation = "sigmoid"
    dec = Mlp.init(MlpSpec([m, *hidden, n], output_activation=output_activation), rng)
    return UaeModel(GaussianChannel(Encoder(W0, acquisition), float(sigma)), DecoderNet(dec, family), int(seed))
