from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..envs.core import Env


@dataclass
class RolloutBatch:
    """On-policy transitions, ordered env-major: each environment's steps are contiguous.

    ``segment_end`` marks the last row of each environment's segment (where
    GAE must bootstrap even if the episode has not ended).
    """

    states: np.ndarray
    actions: np.ndarray
    next_states: np.ndarray
    dones: np.ndarray
    terminals: np.ndarray
    t: np.ndarray
    logp: np.ndarray
    env_rewards: np.ndarray
    segment_end: np.ndarray
    episode_returns: np.ndarray
    rewards: np.ndarray | None = None
    advantages: np.ndarray | None = None
    value_targets: np.ndarray | None = None
    extra: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.states)


def collect(env: Env, policy, params, n_steps: int, rng: np.random.Generator) -> RolloutBatch:
    """Sample exactly ``n_steps`` transitions from ``ceil(n_steps / horizon)`` parallel envs.

    Environments auto-reset when an episode ends. Returns of episodes that
    completed inside the batch are reported in ``episode_returns``.
    """
    H = env.spec.horizon
    n_envs = max(1, math.ceil(n_steps / H))
    per_env = math.ceil(n_steps / n_envs)
    s = env.reset_batch(n_envs, rng)
    t = np.zeros(n_envs, dtype=np.int64)
    ep_ret = np.zeros(n_envs)
    finished = []
    cols = {k: [] for k in ("s", "a", "s2", "done", "term", "t", "logp", "r")}
    for _ in range(per_env):
        a, logp = policy.sample(params, s, rng)
        a = env.check_actions(a)
        s2, r, term = env.step_batch(s, a, 0, rng)
        done = term | (t + 1 >= H)
        for k, v in (("s", s), ("a", a), ("s2", s2), ("done", done), ("term", term),
                     ("t", t.copy()), ("logp", logp), ("r", r)):
            cols[k].append(v)
        ep_ret += r
        for i in np.flatnonzero(done):
            finished.append((len(cols["s"]), i, ep_ret[i]))
        if done.any():
            fresh = env.reset_batch(int(done.sum()), rng)
            s2 = s2.copy()
            s2[done] = fresh
            ep_ret[done] = 0.0
            t[done] = 0
        t[~done] += 1
        s = s2

    def env_major(key):
        arr = np.stack(cols[key], axis=1)  # (n_envs, per_env, ...)
        return arr.reshape(n_envs * per_env, *arr.shape[2:])[:n_steps]

    seg_end = np.zeros((n_envs, per_env), dtype=bool)
    seg_end[:, -1] = True
    seg_end = seg_end.reshape(-1)[:n_steps]
    seg_end[-1] = True
    # episode returns in completion order, ties broken by env index
    finished.sort(key=lambda x: (x[0], x[1]))
    return RolloutBatch(
        states=env_major("s"),
        actions=env_major("a"),
        next_states=env_major("s2"),
        dones=env_major("done"),
        terminals=env_major("term"),
        t=env_major("t"),
        logp=env_major("logp"),
        env_rewards=env_major("r"),
        segment_end=seg_end,
        episode_returns=np.array([x[2] for x in finished]),
    )
