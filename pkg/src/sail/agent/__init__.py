"""Policies, GAE and TRPO."""

from .policy import CategoricalPolicy, GaussianPolicy, make_policy, value_net
from .rollout import RolloutBatch, collect
from .trpo import (
    NumericError,
    TRPOConfig,
    TRPOInfo,
    batch_gae,
    compute_gae,
    conjugate_gradient,
    fit_value,
    surrogate_and_kl,
    trpo_step,
    trpo_update,
)
