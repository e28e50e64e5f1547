"""Self-supervised state/action representations: corruption, losses, encoders."""

from .corruption import (
    METHODS,
    corrupt,
    corrupt_each_dim,
    corrupt_mean,
    corrupt_random,
    corrupt_swapping,
    n_corrupt,
)
from .losses import barlow_twins, cosine_matrix, infonce_forward, state_mse, total_loss
from .model import (
    CorruptionConfig,
    ReprConfig,
    RepresentationModel,
    SSLWeights,
    repr_update,
    ssl_losses,
)
