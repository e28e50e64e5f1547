"""Discriminator, adversarial losses and the imitation reward.

Orientation: agent samples are pushed toward D=1 and expert samples toward
D=0, so the policy reward ``-log D`` is large where the agent looks like
the expert.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..diffcore import MLP, ops
from ..diffcore.tape import DiffError, Var

LOGIT_CLAMP = 30.0


def _v(x):
    return x.value if isinstance(x, Var) else np.asarray(x, dtype=np.float64)


@dataclass(frozen=True)
class Discriminator:
    in_dim: int
    hidden: tuple[int, ...] = (100, 100, 100)

    @property
    def net(self) -> MLP:
        return MLP(self.in_dim, self.hidden, 1, "tanh", prefix="d.")

    def init(self, rng):
        return self.net.init(rng)

    def logits(self, params, z):
        if _v(z).shape[-1] != self.in_dim:
            raise DiffError(f"discriminator expects input width {self.in_dim}, got {_v(z).shape[-1]}")
        raw = ops.reshape(self.net(params, z), (_v(z).shape[0],))
        return ops.clip(raw, -LOGIT_CLAMP, LOGIT_CLAMP)


def discriminate(disc: Discriminator, params, z):
    """D(z) in (0, 1)."""
    return ops.sigmoid(disc.logits(params, z))


def reward(disc: Discriminator, params, z) -> np.ndarray:
    """``-log D(z)`` per row, evaluated off-tape."""
    logit = _v(disc.logits(params, np.asarray(z, dtype=np.float64)))
    return np.logaddexp(0.0, -logit)


def _nonempty(*xs):
    for x in xs:
        if _v(x).shape[0] == 0:
            raise DiffError("discriminator loss on an empty batch")


def gail_disc_loss(disc, params, z_agent, z_expert):
    """``-[mean log D(agent) + mean log(1 - D(expert))]``."""
    return weighted_disc_loss(disc, params, z_agent, z_expert, None)


def weighted_disc_loss(disc, params, z_agent, z_expert, weights):
    """Expert term weighted per sample by ``weights`` (``y / epsilon``); ``None`` means 1."""
    _nonempty(z_agent, z_expert)
    log_d_agent = ops.log_sigmoid(disc.logits(params, z_agent))
    log_1m_d_exp = ops.log_sigmoid(-disc.logits(params, z_expert))
    if weights is not None:
        weights = np.asarray(weights, dtype=np.float64)
        if weights.shape != (_v(z_expert).shape[0],):
            raise DiffError("one weight per expert sample required")
        log_1m_d_exp = log_1m_d_exp * weights
    return -(ops.mean(log_d_agent) + ops.mean(log_1m_d_exp))


def mixup_term(disc, params, z_mix, y_mix):
    """``-mean log[(1 - y) D(z) + y (1 - D(z))]`` for mixed samples."""
    _nonempty(z_mix)
    y = np.asarray(y_mix, dtype=np.float64)
    d = ops.sigmoid(disc.logits(params, z_mix))
    return -ops.mean(ops.log((1.0 - y) * d + y * (1.0 - d)))


def mixup_disc_loss(disc, params, z_agent, z_expert, weights, z_mix, y_mix, mix_weight: float = 1.0):
    base = weighted_disc_loss(disc, params, z_agent, z_expert, weights)
    if mix_weight == 0.0:
        return base
    return base + mix_weight * mixup_term(disc, params, z_mix, y_mix)
