"""Demonstration sets: generation, optimal/non-optimal mixtures, labeling, file I/O."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .core import Env, EnvError

OPTIMAL = 0
UNKNOWN = -1


@dataclass(frozen=True)
class MixtureSpec:
    psi: float
    v: tuple[float, ...] = ()
    n: int = 4

    @classmethod
    def uniform(cls, psi: float, n: int = 4) -> "MixtureSpec":
        return cls(psi, tuple([(1.0 - psi) / n] * n), n)

    def validate(self, imperfect: bool = True):
        if len(self.v) != self.n:
            raise ValueError(f"expected {self.n} non-expert weights, got {len(self.v)}")
        if self.psi < 0 or any(w < 0 for w in self.v):
            raise ValueError("mixture weights must be non-negative")
        total = self.psi + math.fsum(self.v)
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"mixture weights sum to {total!r}, expected 1")
        if imperfect and not 0.0 < self.psi < 1.0:
            raise ValueError("imperfect mixtures need 0 < psi < 1")

    @property
    def weights(self) -> np.ndarray:
        return np.array([self.psi, *self.v])


@dataclass
class DemonstrationSet:
    """State-action pairs.

    ``source``: 0 for optimal, i for the i-th suboptimal policy, -1 unknown.
    ``successor``: index of the pair holding the next state, or -1.
    """

    env_name: str
    states: np.ndarray
    actions: np.ndarray
    source: np.ndarray
    successor: np.ndarray
    confidence: np.ndarray | None = None
    mixture: MixtureSpec | None = None
    seed: int | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.states = np.asarray(self.states, dtype=np.float64)
        self.actions = np.asarray(self.actions, dtype=np.float64)
        if self.actions.ndim == 1:
            self.actions = self.actions[:, None]
        self.source = np.asarray(self.source, dtype=np.int64)
        self.successor = np.asarray(self.successor, dtype=np.int64)
        n = len(self.states)
        if not (len(self.actions) == len(self.source) == len(self.successor) == n):
            raise ValueError("demonstration arrays have inconsistent lengths")

    def __len__(self):
        return len(self.states)

    @property
    def pairs(self) -> np.ndarray:
        return np.concatenate([self.states, self.actions], axis=1)

    def take(self, idx) -> "DemonstrationSet":
        idx = np.asarray(idx, dtype=np.int64)
        remap = -np.ones(len(self), dtype=np.int64)
        remap[idx] = np.arange(len(idx))
        succ = self.successor[idx]
        succ = np.where(succ >= 0, remap[np.maximum(succ, 0)], -1)
        conf = None if self.confidence is None else self.confidence[idx]
        return replace(self, states=self.states[idx], actions=self.actions[idx],
                       source=self.source[idx], successor=succ, confidence=conf)


def _rollout_pairs(env: Env, policy: Callable, n_episodes: int, rng: np.random.Generator):
    """Episodes as a list of (states, actions) arrays, in episode order."""
    H = env.spec.horizon
    s = env.reset_batch(n_episodes, rng)
    alive = np.ones(n_episodes, dtype=bool)
    S, A, alive_hist = [], [], []
    for t in range(H):
        a = np.asarray(policy(s, rng), dtype=np.float64).reshape(n_episodes, -1)
        s2, _, term = env.step_batch(s, a, t, rng)
        S.append(s)
        A.append(env.check_actions(a))
        alive_hist.append(alive.copy())
        alive &= ~term
        s = s2
        if not alive.any():
            break
    S, A, M = np.stack(S, 1), np.stack(A, 1), np.stack(alive_hist, 1)
    return [(S[e][M[e]], A[e][M[e]]) for e in range(n_episodes)]


def generate_demonstrations(env: Env, policy: Callable, n_pairs: int, rng: np.random.Generator,
                            iid: bool = False, source: int = OPTIMAL) -> DemonstrationSet:
    """Exactly ``n_pairs`` (s, a) pairs from rollouts of ``policy(states, rng)``.

    Default: a contiguous prefix of consecutive episodes (a single episode
    when ``n_pairs`` is at most the horizon). With ``iid`` the pairs are a
    uniform subsample without replacement from several episodes.
    """
    if n_pairs < 1:
        raise ValueError("n_pairs must be >= 1")
    H = env.spec.horizon
    n_ep = max(1, math.ceil(n_pairs / H))
    if iid:
        n_ep = n_ep * 5
    S_list, A_list, succ_list = [], [], []
    total = 0
    while total < n_pairs:
        for S, A in _rollout_pairs(env, policy, n_ep, rng):
            k = len(S)
            succ = np.arange(total + 1, total + k + 1)
            succ[-1] = -1
            S_list.append(S)
            A_list.append(A)
            succ_list.append(succ)
            total += k
    S, A, succ = np.concatenate(S_list), np.concatenate(A_list), np.concatenate(succ_list)
    full = DemonstrationSet(env.spec.name, S, A, np.full(len(S), source), succ)
    if iid:
        idx = np.sort(rng.choice(len(S), size=n_pairs, replace=False))
        return full.take(idx)
    return full.take(np.arange(n_pairs))


def mix_demonstrations(optimal: DemonstrationSet, suboptimals: Sequence[DemonstrationSet],
                       spec: MixtureSpec, rng: np.random.Generator, n_pairs: int | None = None,
                       allow_pure: bool = False) -> DemonstrationSet:
    """Draw each output pair's component independently with probabilities (psi, v_1..v_n).

    Pairs are taken in order from each component set, so every component must
    hold at least as many pairs as are drawn from it. Source labels are kept.
    """
    spec.validate(imperfect=not allow_pure)
    comps = [optimal, *suboptimals]
    if len(comps) != spec.n + 1:
        raise ValueError(f"mixture has {spec.n} non-experts but {len(suboptimals)} sets were given")
    if any(len(c) == 0 for c in comps):
        raise ValueError("mixture components must be non-empty")
    n = len(optimal) if n_pairs is None else n_pairs
    draws = rng.choice(len(comps), size=n, p=spec.weights)
    used = np.zeros(len(comps), dtype=np.int64)
    S, A, src = [], [], []
    for k in draws:
        c = comps[k]
        if used[k] >= len(c):
            raise ValueError(f"component {k} exhausted ({len(c)} pairs)")
        S.append(c.states[used[k]])
        A.append(c.actions[used[k]])
        src.append(c.source[used[k]])
        used[k] += 1
    return DemonstrationSet(optimal.env_name, np.array(S), np.array(A), np.array(src),
                            -np.ones(n, dtype=np.int64), mixture=spec)


def label_subset(demos: DemonstrationSet, ratio: float, rng: np.random.Generator):
    """Split into (labeled, unlabeled); labeled pairs carry y=1 for optimal, 0 otherwise.

    ``N_L = ceil(ratio * N)``. The labeled set stores y in ``confidence``.
    """
    if not 0.0 < ratio < 1.0:
        raise ValueError("labeled ratio must lie in (0, 1)")
    if np.any(demos.source == UNKNOWN):
        raise ValueError("cannot label pairs of unknown source")
    n = len(demos)
    # round first so 0.4 * 100 = 40.000000000000004 does not become 41
    n_l = math.ceil(round(ratio * n, 9))
    perm = rng.permutation(n)
    lab_idx, unl_idx = np.sort(perm[:n_l]), np.sort(perm[n_l:])
    labeled = demos.take(lab_idx)
    labeled.confidence = (labeled.source == OPTIMAL).astype(np.float64)
    unlabeled = demos.take(unl_idx)
    unlabeled.confidence = None
    return labeled, unlabeled


def suboptimal_policy(env: Env, level: int, scales=(0.1, 0.2, 0.35, 0.5), eps=(0.2, 0.4, 0.6, 0.8)):
    """Expert plus zero-mean noise; ``level`` in 1..4, larger is worse.

    Continuous: Gaussian noise with std ``scales[level-1] * action_bound``.
    Discrete: epsilon-uniform actions with ``eps[level-1]``.
    """
    if not 1 <= level <= len(scales):
        raise ValueError("suboptimal level must be in 1..4")

    if env.spec.discrete:
        e = eps[level - 1]

        def pol(s, rng):
            a = env.expert_batch(s)
            rand = rng.integers(0, env.spec.n_actions, size=a.shape)
            return np.where(rng.random(a.shape) < e, rand, a).astype(np.float64)
    else:
        std = scales[level - 1] * env.spec.action_bound

        def pol(s, rng):
            a = env.expert_batch(s)
            return a + rng.normal(0.0, std, size=a.shape)

    return pol


def expert_sampler(env: Env):
    return lambda s, rng: env.expert_batch(s)


# --------------------------------------------------------------------------
# file format


def save_demos(demos: DemonstrationSet, path) -> None:
    """Columnar text: ``#``-prefixed header then one CSV row per pair.

    Floats are written with ``repr`` so loading is bit-exact.
    """
    d_s, d_a = demos.states.shape[1], demos.actions.shape[1]
    mix = demos.mixture
    lines = [
        "# sail-demos v1",
        f"# env={demos.env_name}",
        f"# state_dim={d_s}",
        f"# action_dim={d_a}",
        f"# psi={'' if mix is None else repr(mix.psi)}",
        f"# v={'' if mix is None else ','.join(repr(x) for x in mix.v)}",
        f"# N={len(demos)}",
        f"# seed={'' if demos.seed is None else demos.seed}",
        ",".join([f"s{i}" for i in range(d_s)] + [f"a{i}" for i in range(d_a)] + ["source", "successor"]),
    ]
    for s, a, src, succ in zip(demos.states, demos.actions, demos.source, demos.successor):
        lines.append(",".join([repr(float(x)) for x in s] + [repr(float(x)) for x in a]
                              + [str(int(src)), str(int(succ))]))
    Path(path).write_text("\n".join(lines) + "\n")


def load_demos(path, env_spec=None) -> DemonstrationSet:
    header = {}
    rows = []
    colnames = None
    for line in Path(path).read_text().splitlines():
        if line.startswith("#"):
            body = line[1:].strip()
            if "=" in body:
                k, v = body.split("=", 1)
                header[k.strip()] = v.strip()
            continue
        if colnames is None:
            colnames = line.split(",")
            continue
        if line.strip():
            rows.append(line.split(","))
    d_s, d_a = int(header["state_dim"]), int(header["action_dim"])
    if env_spec is not None:
        want_a = env_spec.action_dim
        if header["env"] != env_spec.name or d_s != env_spec.state_dim or d_a != want_a:
            raise EnvError(
                f"demo file is for {header['env']} ({d_s}, {d_a}); "
                f"expected {env_spec.name} ({env_spec.state_dim}, {want_a})"
            )
    if len(colnames) != d_s + d_a + 2:
        raise EnvError("demo file column count does not match its header dims")
    n = int(header["N"])
    if len(rows) != n:
        raise EnvError(f"demo file declares N={n} but holds {len(rows)} rows")
    data = np.array([[float(x) for x in r[: d_s + d_a]] for r in rows]).reshape(n, d_s + d_a)
    src = np.array([int(r[d_s + d_a]) for r in rows], dtype=np.int64)
    succ = np.array([int(r[d_s + d_a + 1]) for r in rows], dtype=np.int64)
    mixture = None
    if header.get("psi"):
        v = tuple(float(x) for x in header["v"].split(",")) if header.get("v") else ()
        mixture = MixtureSpec(float(header["psi"]), v, len(v))
    seed = int(header["seed"]) if header.get("seed") else None
    return DemonstrationSet(header["env"], data[:, :d_s], data[:, d_s:], src, succ,
                            mixture=mixture, seed=seed)
