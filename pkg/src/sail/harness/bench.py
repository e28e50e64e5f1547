from __future__ import annotations

import numpy as np

from ..envs import expert_sampler, generate_demonstrations, make_env
from ..metrics import corrupted_variance, lof
from ..reprlearn import corrupt, n_corrupt


def observed_states(env_name: str, n_observed: int, rng: np.random.Generator) -> np.ndarray:
    """Expert rollout states (consecutive episodes) used as the LOF reference set."""
    env = make_env(env_name)
    return generate_demonstrations(env, expert_sampler(env), n_observed, rng).states


def corruption_bench(env_name: str, methods, rates, seeds, n_samples: int = 1000, n_observed: int = 2000,
                     k: int = 10, threshold: float = 1.5) -> list[dict]:
    """One row per (seed, rate, method): variance and LOF-flagged percentage of corrupted states.

    Per seed, ``n_samples`` observed states are drawn without replacement and
    corrupted with each method; LOF is computed against the full observed set.
    """
    rows = []
    for seed in seeds:
        rng = np.random.default_rng(seed)
        obs = observed_states(env_name, n_observed, rng)
        if n_samples > len(obs):
            raise ValueError("more corrupted samples requested than observed states")
        sub = obs[rng.choice(len(obs), size=n_samples, replace=False)]
        for c in rates:
            q = n_corrupt(c, obs.shape[1])
            for m in methods:
                x = corrupt(m, sub, q, rng, mean_vector=obs.mean(axis=0))
                rep = lof(x, obs, k=k, threshold=threshold)
                rows.append({"method": m, "c": float(c), "variance": corrupted_variance(x),
                             "lof_percent": rep.percent, "threshold": float(threshold), "seed": int(seed)})
    return rows
