from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..envs.core import Env, rollout_returns


def iqm(values) -> float:
    """Interquartile mean: mean of the middle half of the sorted values.

    Fewer than 4 values fall back to the plain mean. Otherwise a quarter is
    trimmed from each end, with fractional end points weighted pro rata.
    """
    x = np.sort(np.asarray(values, dtype=np.float64))
    n = len(x)
    if n == 0:
        raise ValueError("IQM of an empty set")
    if n < 4:
        return float(x.mean())
    lo, hi = n / 4.0, 3.0 * n / 4.0
    # weight of element i covering [i, i+1) intersected with [lo, hi)
    edges = np.arange(n)
    w = np.clip(np.minimum(edges + 1, hi) - np.maximum(edges, lo), 0.0, 1.0)
    return float(np.sum(w * x) / np.sum(w))


def stderr(values) -> float:
    x = np.asarray(values, dtype=np.float64)
    return float(x.std() / math.sqrt(len(x))) if len(x) else float("nan")


@dataclass
class EvalReport:
    returns: np.ndarray
    iteration: int = -1
    seed: int = -1
    extra: dict = field(default_factory=dict)

    @property
    def mean(self) -> float:
        return float(np.mean(self.returns))

    @property
    def stderr(self) -> float:
        return stderr(self.returns)

    @property
    def iqm(self) -> float:
        return iqm(self.returns)

    def as_dict(self) -> dict:
        return {"iteration": self.iteration, "seed": self.seed, "episodes": len(self.returns),
                "mean": self.mean, "stderr": self.stderr, "iqm": self.iqm}


def eval_policy(policy, params, env: Env, episodes: int, rng: np.random.Generator, iteration: int = -1,
                seed: int = -1) -> EvalReport:
    """Score the deterministic (mode) action policy on the true environment reward."""
    if episodes < 1:
        raise ValueError("episodes must be >= 1")

    def act(s):
        return env.check_actions(policy.mode(params, s))

    return EvalReport(rollout_returns(env, act, episodes, rng), iteration, seed)


def aggregate(reports) -> dict:
    """Mean and standard error across seeds of per-seed mean returns."""
    means = np.array([r.mean for r in reports])
    return {"mean": float(means.mean()), "stderr": stderr(means), "iqm": iqm(means), "n": len(means)}
