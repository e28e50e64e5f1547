"""State/action encoders, forward-dynamics model and the REPR update."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..diffcore import MLP, AdamState, ConvActionEncoder, ParamSet, Tape, adam_step, ops
from .corruption import corrupt, n_corrupt
from .losses import barlow_twins, infonce_forward, state_mse, total_loss


@dataclass(frozen=True)
class CorruptionConfig:
    method: str = "swapping"
    state_rate: float = 0.2
    action_rate: float = 0.2


@dataclass(frozen=True)
class SSLWeights:
    forward: float = 1.0
    state: float = 100.0
    action: float = 1.0
    tau: float = 0.1
    noise_dim: int = 6

    def __post_init__(self):
        if self.tau <= 0 or min(self.forward, self.state, self.action) < 0 or self.noise_dim < 0:
            raise ValueError("SSL weights must be >= 0, tau > 0, noise_dim >= 0")


@dataclass(frozen=True)
class ReprConfig:
    batch_size: int = 256
    lr: float = 1e-3
    barlow_center: bool = True
    barlow_paper_sign: bool = False


@dataclass(frozen=True)
class RepresentationModel:
    """SE, AE and F sharing one ParamSet (prefixes ``se.``, ``ae.``, ``fw.``).

    In discrete mode there is no action encoder: the forward model reads the
    one-hot action instead of ``z^a``.
    """

    state_dim: int
    action_dim: int
    state_repr_dim: int = 100
    action_repr_dim: int = 8
    noise_dim: int = 6
    discrete: bool = False
    n_actions: int = 0
    hidden: tuple[int, ...] = (100, 100, 100)
    forward_hidden: int = 114
    conv_channels: tuple[int, ...] = (64, 64, 64, 128, 256, 256)

    @property
    def se(self) -> MLP:
        return MLP(self.state_dim, self.hidden, self.state_repr_dim, "tanh", prefix="se.")

    @property
    def ae(self) -> ConvActionEncoder:
        return ConvActionEncoder(self.action_dim, self.conv_channels, self.action_repr_dim, prefix="ae.")

    @property
    def za_dim(self) -> int:
        return self.n_actions if self.discrete else self.action_repr_dim

    @property
    def fw(self) -> MLP:
        width = self.state_repr_dim + self.za_dim + self.noise_dim
        return MLP(width, (self.forward_hidden,), self.state_repr_dim, "relu", prefix="fw.")

    def init(self, rng: np.random.Generator) -> ParamSet:
        p = self.se.init(rng)
        if not self.discrete:
            p = p.merge(self.ae.init(rng))
        return p.merge(self.fw.init(rng))

    def encode_state(self, params, s):
        return self.se(params, s)

    def encode_action(self, params, a):
        if self.discrete:
            return np.eye(self.n_actions)[np.asarray(a, dtype=np.int64).reshape(-1)]
        return self.ae(params, a)

    def forward_predict(self, params, zs, za, rng: np.random.Generator | None = None, noise=None):
        """``F(z^s ⊕ z^a ⊕ N)`` with fresh N(0, 1) noise per row unless ``noise`` is pinned."""
        n = (zs.value if hasattr(zs, "value") else np.asarray(zs)).shape[0]
        if noise is None:
            noise = rng.standard_normal((n, self.noise_dim)) if self.noise_dim else np.zeros((n, 0))
        noise = np.asarray(noise, dtype=np.float64)
        if noise.shape != (n, self.noise_dim):
            raise ValueError(f"noise must have shape {(n, self.noise_dim)}, got {noise.shape}")
        return self.fw(params, ops.concat([zs, za, noise], axis=1))


def ssl_losses(model: RepresentationModel, params, s, a, s_next, s_corr, a_corr, weights: SSLWeights,
               rng: np.random.Generator, cfg: ReprConfig = ReprConfig(), noise=None):
    """Return ``(total, L_F, L_SC, L_AC)`` built from ``params`` (tape vars or arrays)."""
    zs = model.encode_state(params, s)
    zs_next = model.encode_state(params, s_next)
    za = model.encode_action(params, a)
    pred = model.forward_predict(params, zs, za, rng, noise)
    l_f = infonce_forward(pred, zs, zs_next, weights.tau)
    l_sc = state_mse(zs, model.encode_state(params, s_corr))
    if model.discrete:
        l_ac = 0.0
    else:
        l_ac = barlow_twins(za, model.encode_action(params, a_corr),
                            center=cfg.barlow_center, paper_sign=cfg.barlow_paper_sign)
    return total_loss(l_f, l_sc, l_ac, (weights.forward, weights.state, weights.action)), l_f, l_sc, l_ac


def _scalar(x) -> float:
    return float(getattr(x, "value", x))


def repr_update(model: RepresentationModel, params: ParamSet, state: AdamState, states, actions,
                next_states, corruption: CorruptionConfig, weights: SSLWeights,
                rng: np.random.Generator, cfg: ReprConfig = ReprConfig(),
                noise_rng: np.random.Generator | None = None):
    """One pass of minibatch updates of SE, AE and F on a rollout set.

    The set is shuffled and cut into ``max(1, N // batch_size)`` minibatches.
    Each minibatch gets fresh corrupted copies of its raw states and actions
    (separately), then one joint Adam step on the total loss. Forward-model
    noise is drawn from ``noise_rng`` (default: ``rng``). Returns
    ``(params, diagnostics)`` with the losses of the last minibatch.
    """
    n = len(states)
    diag = {"L_F": 0.0, "L_SC": 0.0, "L_AC": 0.0, "L_SS": 0.0}
    if weights.forward == weights.state == weights.action == 0.0:
        return params, diag
    n_batches = max(1, n // cfg.batch_size)
    perm = rng.permutation(n)
    q_s = n_corrupt(corruption.state_rate, model.state_dim)
    q_a = 0 if model.discrete else n_corrupt(corruption.action_rate, model.action_dim)
    mean_s, mean_a = states.mean(axis=0), actions.mean(axis=0)
    for b in range(n_batches):
        idx = perm[b * cfg.batch_size : (b + 1) * cfg.batch_size] if n_batches > 1 else perm
        s, a, s2 = states[idx], actions[idx], next_states[idx]
        s_corr = corrupt(corruption.method, s, q_s, rng, mean_vector=mean_s)
        a_corr = a if model.discrete else corrupt(corruption.method, a, q_a, rng, mean_vector=mean_a)
        tape = Tape()
        pv = tape.watch(params)
        total, l_f, l_sc, l_ac = ssl_losses(model, pv, s, a, s2, s_corr, a_corr, weights,
                                           rng if noise_rng is None else noise_rng, cfg)
        params = adam_step(params, tape.gradient(total, pv), state)
        diag = {"L_F": _scalar(l_f), "L_SC": _scalar(l_sc), "L_AC": _scalar(l_ac), "L_SS": _scalar(total)}
    return params, diag
