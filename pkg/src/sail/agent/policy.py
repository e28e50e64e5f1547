"""Stochastic policies and the value function.

Both policy classes expose the same surface: ``log_prob`` and ``kl`` build
tape expressions (used by TRPO), ``sample``/``mode`` run plain numpy, and
``fisher_vector`` returns the exact Fisher (Gauss-Newton) product
``J^T M J v / n`` where ``J`` is the Jacobian of the distribution parameters
w.r.t. the network weights.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..diffcore import MLP, ParamSet, Tape, ops

LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class GaussianPolicy:
    state_dim: int
    action_dim: int
    hidden: tuple[int, ...] = (100, 100, 100)
    init_log_std: float = 0.0

    discrete = False

    @property
    def net(self) -> MLP:
        return MLP(self.state_dim, self.hidden, self.action_dim, "tanh", prefix="pi.", out_scale=0.1)

    def init(self, rng: np.random.Generator) -> ParamSet:
        return self.net.init(rng).merge({"pi.log_std": np.full(self.action_dim, self.init_log_std)})

    def dist_params(self, params, states):
        """Numpy ``(mean, log_std)`` for a batch."""
        mean = self.net(params, np.asarray(states, dtype=np.float64))
        return mean, np.asarray(params["pi.log_std"])

    def log_prob(self, params, states, actions):
        mean = self.net(params, states)
        log_std = params["pi.log_std"]
        z = (actions - mean) * ops.exp(-log_std)
        per_dim = -0.5 * ops.square(z) - log_std - 0.5 * LOG_2PI
        return ops.vsum(per_dim, axis=1)

    def kl(self, old, params, states):
        """Mean KL(old || new); ``old`` is a ``(mean, log_std)`` numpy snapshot."""
        old_mean, old_log_std = old
        mean = self.net(params, states)
        log_std = params["pi.log_std"]
        var_ratio = ops.exp(2.0 * (old_log_std - log_std))
        maha = ops.square(old_mean - mean) * ops.exp(-2.0 * log_std)
        per_dim = log_std - old_log_std + 0.5 * (var_ratio + maha) - 0.5
        return ops.mean(ops.vsum(per_dim, axis=1))

    def sample(self, params, states, rng):
        mean, log_std = self.dist_params(params, states)
        std = np.exp(log_std)
        a = mean + std * rng.standard_normal(mean.shape)
        logp = np.sum(-0.5 * ((a - mean) / std) ** 2 - log_std - 0.5 * LOG_2PI, axis=1)
        return a, logp

    def mode(self, params, states):
        return self.dist_params(params, states)[0]

    def entropy(self, params, states=None) -> float:
        log_std = np.asarray(params["pi.log_std"])
        return float(np.sum(log_std + 0.5 * (LOG_2PI + 1.0)))

    def fisher_vector(self, params, states, vec: ParamSet) -> ParamSet:
        n = len(states)
        net_params = {k: v for k, v in params.items() if k != "pi.log_std"}
        net_vec = {k: v for k, v in vec.items() if k != "pi.log_std"}
        _, jv = self.net.jvp(net_params, states, net_vec)
        inv_var = np.exp(-2.0 * np.asarray(params["pi.log_std"]))
        u = jv * inv_var / n
        tape = Tape()
        pv = tape.watch(net_params)
        out = self.net(pv, states)
        jtu = tape.gradient(ops.vsum(out * u), pv)
        jtu["pi.log_std"] = 2.0 * np.asarray(vec["pi.log_std"])
        return ParamSet(jtu)


@dataclass(frozen=True)
class CategoricalPolicy:
    """Softmax policy for discrete actions; actions are stored as float indices, shape (n, 1)."""

    state_dim: int
    n_actions: int
    hidden: tuple[int, ...] = (100, 100, 100)

    discrete = True

    @property
    def action_dim(self) -> int:
        return 1

    @property
    def net(self) -> MLP:
        return MLP(self.state_dim, self.hidden, self.n_actions, "tanh", prefix="pi.", out_scale=0.1)

    def init(self, rng):
        return self.net.init(rng)

    def _logp_all(self, params, states):
        logits = self.net(params, states)
        return logits - ops.logsumexp(logits, axis=1, keepdims=True)

    def dist_params(self, params, states):
        lp = self._logp_all(params, np.asarray(states, dtype=np.float64))
        return (lp,)

    def log_prob(self, params, states, actions):
        lp = self._logp_all(params, states)
        onehot = np.eye(self.n_actions)[np.asarray(actions, dtype=np.int64).reshape(-1)]
        return ops.vsum(lp * onehot, axis=1)

    def kl(self, old, params, states):
        (old_lp,) = old
        lp = self._logp_all(params, states)
        return ops.mean(ops.vsum(np.exp(old_lp) * (old_lp - lp), axis=1))

    def sample(self, params, states, rng):
        (lp,) = self.dist_params(params, states)
        p = np.exp(lp)
        u = rng.random((len(p), 1))
        a = np.minimum((np.cumsum(p, axis=1) < u).sum(axis=1), self.n_actions - 1)
        return a[:, None].astype(np.float64), lp[np.arange(len(a)), a]

    def mode(self, params, states):
        (lp,) = self.dist_params(params, states)
        return np.argmax(lp, axis=1)[:, None].astype(np.float64)

    def entropy(self, params, states=None) -> float:
        if states is None:
            return float("nan")
        (lp,) = self.dist_params(params, states)
        return float(np.mean(-np.sum(np.exp(lp) * lp, axis=1)))

    def fisher_vector(self, params, states, vec: ParamSet) -> ParamSet:
        n = len(states)
        logits, jv = self.net.jvp(params, states, vec)
        lp = logits - np.max(logits, axis=1, keepdims=True)
        p = np.exp(lp)
        p /= p.sum(axis=1, keepdims=True)
        u = (p * jv - p * np.sum(p * jv, axis=1, keepdims=True)) / n
        tape = Tape()
        pv = tape.watch(params)
        out = self.net(pv, states)
        return ParamSet(tape.gradient(ops.vsum(out * u), pv))


def make_policy(env_spec, hidden=(100, 100, 100)):
    if env_spec.discrete:
        return CategoricalPolicy(env_spec.state_dim, env_spec.n_actions, hidden)
    return GaussianPolicy(env_spec.state_dim, env_spec.action_dim, hidden)


def value_net(state_dim: int, hidden=(100, 100, 100)) -> MLP:
    return MLP(state_dim, hidden, 1, "tanh", prefix="vf.")
