"""UAE objective, Frobenius-norm penalty and the minibatch training loop."""
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import DimensionError, NumericError, TrainingError, ValidationError
from .linalg import AdamState, adam_update
from .nets import backward, forward
from .rng import Rng

log = logging.getLogger(__name__)

LOG_2PI = math.log(2.0 * math.pi)

# Rng stream ids; per-epoch streams add the epoch index.
STREAM_SHUFFLE = 2 << 32
STREAM_NOISE = 3 << 32
STREAM_VALID = 4

LINE_SEARCH_GRID = (0.1, 1.0, 10.0, 100.0)
NORM_SLACK = 1.05


def default_norm_bound(m, n):
    """Expected Frobenius norm of an m x n matrix of unit-variance Gaussians."""
    return math.sqrt(m * n)


@dataclass
class TrainConfig:
    lr: float = 0.001
    batch_size: int = 100
    max_epochs: int = 200
    patience_epochs: int = None
    sigma: float = 0.1
    norm_bound_k: float = 0.0
    penalty_multiplier: float = 0.0
    freeze_encoder: bool = False
    freeze_decoder: bool = False
    seed: int = 0
    decoder_family: str = "gaussian"
    eval_seed: int = None

    def __post_init__(self):
        if self.freeze_encoder and self.freeze_decoder:
            raise ValidationError("cannot freeze both encoder and decoder")
        if not self.lr > 0:
            raise ValidationError("lr must be positive")
        if self.batch_size < 1:
            raise ValidationError("batch_size must be >= 1")
        if self.max_epochs < 0:
            raise ValidationError("max_epochs must be >= 0")
        if self.norm_bound_k < 0 or self.penalty_multiplier < 0:
            raise ValidationError("norm bound and penalty multiplier must be >= 0")
        if self.penalty_multiplier > 0 and self.norm_bound_k <= 0:
            raise ValidationError("a positive penalty multiplier needs k > 0")
        if self.patience_epochs is None:
            self.patience_epochs = self.max_epochs
        if self.eval_seed is None:
            self.eval_seed = self.seed

    def to_dict(self):
        return asdict(self)


@dataclass
class TrainReport:
    epochs: list = field(default_factory=list)
    train_loss: list = field(default_factory=list)
    valid_loss: list = field(default_factory=list)
    frob_W: list = field(default_factory=list)
    best_epoch: int = 0
    stopped_reason: str = "max_epochs"
    penalty_multiplier: float = 0.0

    @property
    def best_valid_loss(self):
        return self.valid_loss[self.epochs.index(self.best_epoch)]

    def rows(self):
        return list(zip(self.epochs, self.train_loss, self.valid_loss, self.frob_W))


def nll(x, out, pre_out, decoder):
    """Mean negative log-likelihood of rows ``x`` and d(loss)/d(pre_out)."""
    b, n = x.shape
    if decoder.family == "bernoulli":
        if np.any((x < 0.0) | (x > 1.0)):
            raise ValidationError("bernoulli decoder needs data in [0, 1]")
        # BCE from logits: softplus(a) - x a
        a = pre_out
        sp = np.maximum(a, 0.0) + np.log1p(np.exp(-np.abs(a)))
        loss = float(np.sum(sp - x * a)) / b
        return loss, (out - x) / b
    s2 = decoder.sigma_dec**2
    resid = out - x
    loss = float(np.sum(resid * resid)) / (2.0 * s2 * b) + 0.5 * n * (LOG_2PI + math.log(s2))
    grad_out = resid / (s2 * b)
    if decoder.mlp.spec.output_activation == "sigmoid":
        grad_out = grad_out * out * (1.0 - out)
    return loss, grad_out


def uae_loss(batch, channel, decoder, rng):
    """Negated single-sample Monte-Carlo UAE objective for one minibatch.

    Returns ``(loss, tape)``; ``backward(tape)`` gives its pathwise gradients.
    """
    batch = np.atleast_2d(np.asarray(batch, dtype=np.float64))
    z = rng.normal((batch.shape[0], channel.encoder.m))
    return loss_at(batch, channel, decoder, z)


def loss_at(batch, channel, decoder, z):
    """Loss and tape for a fixed noise draw ``z``."""
    tape = forward(channel, decoder, batch, z)
    loss, tape.grad_pre_out = nll(tape.x, tape.out, tape.pre_out, decoder)
    return loss, tape


def norm_penalty(W, k, multiplier):
    """``multiplier * max(0, ||W||_F - k)^2`` and its gradient w.r.t. ``W``."""
    if multiplier <= 0:
        return 0.0, np.zeros_like(W)
    frob = float(np.linalg.norm(W))
    excess = frob - k
    if excess <= 0:
        return 0.0, np.zeros_like(W)
    return multiplier * excess * excess, (2.0 * multiplier * excess / frob) * W


def constrained_loss(loss, W, k, multiplier):
    return loss + norm_penalty(W, k, multiplier)[0]


def mean_loss(X, model, rng, batch_size=1000):
    """Row-weighted uae_loss over ``X`` using one noise draw per row."""
    if X.shape[0] == 0:
        return float("nan")
    total = 0.0
    for start in range(0, X.shape[0], batch_size):
        xb = X[start:start + batch_size]
        loss, _ = uae_loss(xb, model.channel, model.decoder, rng)
        total += loss * xb.shape[0]
    return total / X.shape[0]


def _trainable(model, config):
    params = []
    if not config.freeze_encoder:
        params += model.encoder_params()
    if not config.freeze_decoder:
        params += model.decoder_params()
    return params


def _split(splits):
    if isinstance(splits, dict):
        return np.asarray(splits["train"], float), np.asarray(splits.get("valid", np.empty((0, 0))), float)
    if hasattr(splits, "train"):
        return splits.train, splits.valid
    train, valid = splits
    return np.asarray(train, float), np.asarray(valid, float)


def fit(splits, config, model):
    """Minibatch Adam on the penalized UAE loss.

    ``splits`` is a Dataset, a ``(train, valid)`` pair or a dict with those
    keys. Returns ``(model, report)`` with the parameters of the best
    validation epoch; epoch 0 is the initialization. ``model`` is not
    modified.
    """
    train, valid = _split(splits)
    model = model.copy()
    model.channel.sigma = float(config.sigma)
    if model.decoder.family != config.decoder_family:
        raise ValidationError(
            f"model decoder family {model.decoder.family!r} != config {config.decoder_family!r}"
        )
    if train.ndim != 2 or train.shape[1] != model.n:
        raise DimensionError(f"training data must be N x {model.n}, got {train.shape}")
    has_valid = valid.size > 0
    if has_valid and valid.shape[1] != model.n:
        raise DimensionError(f"validation data must be N x {model.n}, got {valid.shape}")
    selection = valid if has_valid else train

    params = _trainable(model, config)
    enc_trainable = not config.freeze_encoder
    state = AdamState.for_params(params, lr=config.lr)
    W = model.channel.encoder.W
    k, mult = config.norm_bound_k, config.penalty_multiplier
    report = TrainReport(penalty_multiplier=mult)

    def record(epoch, train_loss):
        v = mean_loss(selection, model, Rng(config.eval_seed, STREAM_VALID))
        if not math.isfinite(v):
            raise TrainingError(f"validation loss is not finite after epoch {epoch}")
        report.epochs.append(epoch)
        report.train_loss.append(train_loss)
        report.valid_loss.append(v)
        report.frob_W.append(float(np.linalg.norm(W)))
        return v

    init_train = mean_loss(train, model, Rng(config.eval_seed, STREAM_VALID + 1))
    best = record(0, constrained_loss(init_train, W, k, mult))
    best_params = [p.copy() for p in params]
    n_train = train.shape[0]
    step = 0
    for epoch in range(1, config.max_epochs + 1):
        order = Rng(config.seed, STREAM_SHUFFLE + epoch).permutation(n_train)
        noise = Rng(config.seed, STREAM_NOISE + epoch)
        total = 0.0
        for start in range(0, n_train, config.batch_size):
            xb = train[order[start:start + config.batch_size]]
            loss, tape = uae_loss(xb, model.channel, model.decoder, noise)
            pen, pen_grad = norm_penalty(W, k, mult) if enc_trainable else (0.0, None)
            step += 1
            if not math.isfinite(loss + pen):
                raise TrainingError(f"loss diverged at epoch {epoch}, step {step}")
            grads = backward(tape)
            if pen_grad is not None:
                grads.W += pen_grad
            g = []
            if enc_trainable:
                g += grads.encoder()
            if not config.freeze_decoder:
                g += grads.decoder
            try:
                adam_update(params, g, state)
            except NumericError as exc:
                raise TrainingError(f"epoch {epoch}, step {step}: {exc}") from exc
            total += (loss + pen) * xb.shape[0]
        v = record(epoch, total / max(n_train, 1))
        if v < best:
            best = v
            report.best_epoch = epoch
            best_params = [p.copy() for p in params]
        if epoch - report.best_epoch >= config.patience_epochs and epoch < config.max_epochs:
            report.stopped_reason = "early"
            break
    for p, b in zip(params, best_params):
        p[...] = b
    return model, report


def fit_with_line_search(splits, config, model, grid=LINE_SEARCH_GRID):
    """Pick the smallest penalty multiplier in ``grid`` whose best-epoch ``||W||_F <= 1.05 k``.

    With a frozen encoder or ``k = 0`` this is a single plain ``fit``. If no
    multiplier satisfies the bound, the largest one's result is returned.
    """
    if config.freeze_encoder or config.norm_bound_k <= 0:
        return fit(splits, config, model)
    result = None
    for mult in grid:
        cfg = TrainConfig(**{**config.to_dict(), "penalty_multiplier": float(mult)})
        result = fit(splits, cfg, model)
        frob = float(np.linalg.norm(result[0].channel.encoder.W))
        if frob <= NORM_SLACK * config.norm_bound_k:
            return result
        log.info("multiplier %g leaves ||W||_F=%.4g above %.4g", mult, frob, NORM_SLACK * config.norm_bound_k)
    log.warning("no multiplier in %s met the norm bound", grid)
    return result


TRANSFER_MODES = ("SE", "SD")


def transfer_fit(source, target_splits, mode, config):
    """Retrain a source model on a target domain.

    ``SE`` keeps the source encoder and retrains the decoder; ``SD`` keeps the
    source decoder and retrains the encoder. Training starts from the source
    parameters.
    """
    mode = mode.upper()
    if mode not in TRANSFER_MODES:
        raise ValidationError(f"mode must be one of {TRANSFER_MODES}, got {mode!r}")
    train, _ = _split(target_splits)
    if train.shape[1] != source.n:
        raise ValidationError(f"source model has n={source.n}, target data has n={train.shape[1]}")
    cfg = TrainConfig(
        **{**config.to_dict(), "freeze_encoder": mode == "SE", "freeze_decoder": mode == "SD"}
    )
    if mode == "SD":
        return fit_with_line_search(target_splits, cfg, source)
    return fit(target_splits, cfg, source)
