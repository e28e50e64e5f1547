"""Discriminator inputs and the per-iteration adversarial update."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ..diffcore import AdamState, ParamSet, Tape, adam_step, ops
from ..reprlearn.model import RepresentationModel
from .discriminator import Discriminator, discriminate, gail_disc_loss, mixup_disc_loss, reward, weighted_disc_loss
from .mixup import manifold_mixup

log = logging.getLogger(__name__)

MODES = ("plain", "weighted", "mixup")


@dataclass(frozen=True)
class Featurizer:
    """Maps raw ``(s, a)`` to discriminator input.

    ``encoded``: ``SE(s) ⊕ AE(a)`` (discrete: ``SE(s)``, optionally with the
    one-hot action appended). ``raw``: ``s ⊕ a`` (discrete: one-hot action).
    """

    model: RepresentationModel
    encoded: bool = True
    discrete_append_action: bool = False

    @property
    def width(self) -> int:
        m = self.model
        if not self.encoded:
            return m.state_dim + (m.n_actions if m.discrete else m.action_dim)
        if m.discrete:
            return m.state_repr_dim + (m.n_actions if self.discrete_append_action else 0)
        return m.state_repr_dim + m.action_repr_dim

    def _onehot(self, a):
        return np.eye(self.model.n_actions)[np.asarray(a, dtype=np.int64).reshape(-1)]

    def __call__(self, params, s, a):
        m = self.model
        s = np.asarray(s, dtype=np.float64)
        if not self.encoded:
            act = self._onehot(a) if m.discrete else np.asarray(a, dtype=np.float64).reshape(len(s), -1)
            return np.concatenate([s, act], axis=1)
        zs = m.encode_state(params, s)
        if m.discrete:
            return ops.concat([zs, self._onehot(a)], axis=1) if self.discrete_append_action else zs
        return ops.concat([zs, m.encode_action(params, a)], axis=1)

    def trainable_prefixes(self) -> tuple[str, ...]:
        if not self.encoded:
            return ()
        return ("se.",) if self.model.discrete else ("se.", "ae.")


@dataclass
class ExpertSide:
    """Demonstration pairs offered to the discriminator, with optional confidences.

    ``optimal_mask`` (from the GMM split) is only used in mixup mode.
    """

    states: np.ndarray
    actions: np.ndarray
    confidence: np.ndarray | None = None
    optimal_mask: np.ndarray | None = None

    def __len__(self):
        return len(self.states)

    @property
    def weights(self) -> np.ndarray | None:
        """``y / epsilon`` with ``epsilon`` the mean confidence over the set."""
        if self.confidence is None:
            return None
        eps = float(np.mean(self.confidence))
        if not eps > 0:
            raise ValueError("mean confidence must be positive to weight the discriminator")
        return self.confidence / eps


@dataclass
class GailDiag:
    disc_loss: float = 0.0
    mean_D_agent: float = 0.0
    mean_D_expert: float = 0.0
    mixup_lambda: float = float("nan")
    extra: dict = field(default_factory=dict)


def split_encoder_params(featurizer: Featurizer, rparams: ParamSet | None) -> ParamSet:
    if rparams is None or not featurizer.encoded:
        return ParamSet()
    prefixes = featurizer.trainable_prefixes()
    return ParamSet({k: v for k, v in rparams.items() if k.startswith(prefixes)})


def disc_reward(disc: Discriminator, dparams, featurizer: Featurizer, rparams, s, a) -> np.ndarray:
    """``-log D`` on encoded pairs, off-tape."""
    z = featurizer(rparams, s, a)
    return reward(disc, dparams, z)


def _loss(disc, pv, featurizer, s_agent, a_agent, expert: ExpertSide, mode, rng, alpha, lam=None):
    """Build the discriminator loss on a tape; returns ``(loss, z_agent, z_expert, lam)``."""
    n = len(s_agent)
    z_agent = featurizer(pv, s_agent, a_agent)
    # encode each demonstration once, then index with replacement
    z_demo = featurizer(pv, expert.states, expert.actions)
    pick = rng.integers(0, len(expert), size=n)
    z_exp = ops.getitem(z_demo, pick)
    weights = None
    if mode in ("weighted", "mixup") and expert.confidence is not None:
        weights = expert.weights[pick]
    lam_used = float("nan")
    if mode == "plain":
        loss = gail_disc_loss(disc, pv, z_agent, z_exp)
    elif mode == "weighted":
        loss = weighted_disc_loss(disc, pv, z_agent, z_exp, weights)
    else:
        mask = expert.optimal_mask
        if mask is None:
            raise ValueError("mixup mode needs a GMM split (optimal_mask)")
        opt, non = np.flatnonzero(mask), np.flatnonzero(~mask)
        if len(opt) == 0 or len(non) == 0:
            log.warning("GMM split left one side empty (%d/%d); mixup term skipped", len(opt), len(non))
            loss = weighted_disc_loss(disc, pv, z_agent, z_exp, weights)
        else:
            io = opt[rng.integers(0, len(opt), size=n)]
            inn = non[rng.integers(0, len(non), size=n)]
            y = expert.confidence if expert.confidence is not None else mask.astype(np.float64)
            z_mix, y_mix, lam_used = manifold_mixup(ops.getitem(z_demo, io), y[io], ops.getitem(z_demo, inn),
                                                    y[inn], alpha, rng, lam)
            loss = mixup_disc_loss(disc, pv, z_agent, z_exp, weights, z_mix, y_mix)
    return loss, z_agent, z_exp, lam_used


def gail_update(disc: Discriminator, dparams: ParamSet, featurizer: Featurizer, rparams: ParamSet | None,
                state: AdamState, s_agent, a_agent, expert: ExpertSide, mode: str,
                rng: np.random.Generator, alpha: float = 4.0):
    """One Adam step on the discriminator and (when encoded) SE/AE.

    The expert side is resampled with replacement to the agent batch size.
    Returns ``(dparams, rparams, GailDiag)``; ``rparams`` keeps its forward-model
    entries untouched.
    """
    if mode not in MODES:
        raise ValueError(f"unknown GAIL mode {mode!r}; expected one of {MODES}")
    if len(s_agent) == 0 or len(expert) == 0:
        raise ValueError("GAIL update on an empty batch")
    enc = split_encoder_params(featurizer, rparams)
    joint = dparams.merge(enc)
    tape = Tape()
    pv = tape.watch(joint)
    loss, z_agent, z_exp, lam = _loss(disc, pv, featurizer, s_agent, a_agent, expert, mode, rng, alpha)
    diag = GailDiag(
        disc_loss=float(loss.value),
        mean_D_agent=float(np.mean(discriminate(disc, dparams, z_agent.value if hasattr(z_agent, "value") else z_agent))),
        mean_D_expert=float(np.mean(discriminate(disc, dparams, z_exp.value if hasattr(z_exp, "value") else z_exp))),
        mixup_lambda=lam,
    )
    joint = adam_step(joint, tape.gradient(loss, pv), state)
    new_d = joint.subset("d.")
    new_r = rparams
    if len(enc):
        new_r = rparams.replace({k: joint[k] for k in enc})
    return new_d, new_r, diag
