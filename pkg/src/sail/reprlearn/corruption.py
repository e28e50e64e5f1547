"""Feature corruption operators for tabular state/action batches.

All four share one convention: a single index set ``I`` of ``q`` columns is
drawn without replacement and applied to every row of the batch; columns
outside ``I`` are returned bit-identical. The input array is never modified.
"""

from __future__ import annotations

import math

import numpy as np

METHODS = ("swapping", "random", "mean", "each-dim")


def n_corrupt(rate: float, dim: int) -> int:
    """``q = floor(rate * dim)``, robust to float noise such as 0.29 * 100."""
    if not 0.0 <= rate <= 1.0:
        raise ValueError("corruption rate must lie in [0, 1]")
    return int(math.floor(round(rate * dim, 9)))


def _check(X, q):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("corruption expects a 2-D batch")
    if not 0 <= q <= X.shape[1]:
        raise ValueError(f"cannot corrupt q={q} of {X.shape[1]} columns")
    return X


def _columns(X, q, rng, idx):
    if idx is not None:
        idx = np.asarray(idx, dtype=np.int64)
        if len(idx) != q or len(np.unique(idx)) != q:
            raise ValueError("pinned index set must hold q distinct columns")
        return idx
    return np.sort(rng.choice(X.shape[1], size=q, replace=False))


def corrupt_swapping(X, q: int, rng: np.random.Generator | None = None, perm=None, idx=None):
    """Replace columns ``I`` of every row with those of a randomly permuted partner row."""
    X = _check(X, q)
    out = X.copy()
    if q == 0:
        return out
    cols = _columns(X, q, rng, idx)
    if perm is None:
        perm = rng.permutation(X.shape[0])
    out[:, cols] = X[np.asarray(perm)][:, cols]
    return out


def corrupt_random(X, q: int, rng: np.random.Generator, idx=None):
    """Replace columns ``I`` with independent N(0, 1) draws."""
    X = _check(X, q)
    out = X.copy()
    if q == 0:
        return out
    cols = _columns(X, q, rng, idx)
    out[:, cols] = rng.standard_normal((X.shape[0], q))
    return out


def corrupt_mean(X, q: int, mean_vector, rng: np.random.Generator | None = None, idx=None):
    """Replace columns ``I`` with the given per-dimension mean (of the current rollout set)."""
    X = _check(X, q)
    out = X.copy()
    if q == 0:
        return out
    mean_vector = np.asarray(mean_vector, dtype=np.float64)
    if mean_vector.shape != (X.shape[1],):
        raise ValueError("mean vector width does not match the batch")
    cols = _columns(X, q, rng, idx)
    out[:, cols] = mean_vector[cols]
    return out


def corrupt_each_dim(X, q: int, rng: np.random.Generator, idx=None, donors=None):
    """Replace each entry in columns ``I`` by that column's value in an independently drawn donor row."""
    X = _check(X, q)
    out = X.copy()
    if q == 0:
        return out
    cols = _columns(X, q, rng, idx)
    if donors is None:
        donors = rng.integers(0, X.shape[0], size=(X.shape[0], q))
    out[:, cols] = X[donors, cols[None, :]]
    return out


def corrupt(method: str, X, q: int, rng: np.random.Generator, mean_vector=None):
    if method == "swapping":
        return corrupt_swapping(X, q, rng)
    if method == "random":
        return corrupt_random(X, q, rng)
    if method == "mean":
        if mean_vector is None:
            mean_vector = np.mean(X, axis=0)
        return corrupt_mean(X, q, mean_vector, rng)
    if method == "each-dim":
        return corrupt_each_dim(X, q, rng)
    raise ValueError(f"unknown corruption method {method!r}; choose from {METHODS}")
