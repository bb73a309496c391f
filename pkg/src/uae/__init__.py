"""Uncertainty autoencoders: jointly learned noisy linear measurements and decoders."""
from .baselines import (
    LassoConfig,
    PcaModel,
    lasso_recover,
    pairwise_scatter,
    pca_fit,
    random_gaussian_matrix,
    soft_threshold,
)
from .evaluation import EvalReport, knn_predict, l2_per_image, principal_angle
from .linalg import AdamState, adam_update, finite_diff_grad, matmul, sym_eig_topm
from .nets import (
    DecoderNet,
    Encoder,
    GaussianChannel,
    Mlp,
    MlpSpec,
    UaeModel,
    build_model,
    decode,
    encode_mean,
    sample_measurement,
)
from .rng import Rng
from .sampler import ChainConfig, gibbs_step, sample_chain
from .training import TrainConfig, TrainReport, constrained_loss, fit, transfer_fit, uae_loss

__version__ = "0.1.0"
