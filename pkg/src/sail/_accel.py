"""Numeric kernels with an optional numba path.

Every kernel exists twice: a ``@njit`` version and a pure-numpy version with
identical semantics. Set ``SAIL_NO_NUMBA=1`` to force the numpy path (useful
for debugging and for the comparison benchmark in ``bench/``).
"""

from __future__ import annotations

import os

import numpy as np

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False


def numba_enabled() -> bool:
    return HAVE_NUMBA and os.environ.get("SAIL_NO_NUMBA", "0") not in ("1", "true", "yes")


def _njit(fn):
    if not HAVE_NUMBA:
        return fn
    return numba.njit(cache=True)(fn)


# --------------------------------------------------------------------------
# GAE(lambda)


def _gae_py(rewards, values, dones, gamma, lam):
    n = rewards.shape[0]
    adv = np.zeros(n)
    last = 0.0
    for t in range(n - 1, -1, -1):
        nonterminal = 1.0 - dones[t]
        delta = rewards[t] + gamma * values[t + 1] * nonterminal - values[t]
        last = delta + gamma * lam * nonterminal * last
        adv[t] = last
    return adv


_gae_nb = _njit(_gae_py)


def _gae_numpy(rewards, values, dones, gamma, lam):
    # Same recursion; the loop is inherently sequential, numpy only vectorizes the deltas.
    nonterminal = 1.0 - dones
    deltas = rewards + gamma * values[1:] * nonterminal - values[:-1]
    adv = np.zeros_like(deltas)
    last = 0.0
    decay = gamma * lam * nonterminal
    for t in range(deltas.shape[0] - 1, -1, -1):
        last = deltas[t] + decay[t] * last
        adv[t] = last
    return adv


def gae_kernel(rewards, values, dones, gamma, lam):
    rewards = np.ascontiguousarray(rewards, dtype=np.float64)
    values = np.ascontiguousarray(values, dtype=np.float64)
    dones = np.ascontiguousarray(dones, dtype=np.float64)
    if numba_enabled():
        return _gae_nb(rewards, values, dones, float(gamma), float(lam))
    return _gae_numpy(rewards, values, dones, float(gamma), float(lam))


# --------------------------------------------------------------------------
# k-nearest neighbours (Euclidean) against a reference set


def _knn_py(queries, refs, k, exclude_self):
    nq = queries.shape[0]
    nr = refs.shape[0]
    d = queries.shape[1]
    dist = np.empty((nq, k))
    idx = np.empty((nq, k), dtype=np.int64)
    best = np.empty(k)
    bidx = np.empty(k, dtype=np.int64)
    for i in range(nq):
        filled = 0
        for j in range(nr):
            if exclude_self and j == i:
                continue
            acc = 0.0
            for c in range(d):
                diff = queries[i, c] - refs[j, c]
                acc += diff * diff
            if filled == k and acc >= best[k - 1]:
                continue
            # insert after any equal entries so ties keep index order
            pos = filled if filled < k else k - 1
            while pos > 0 and best[pos - 1] > acc:
                if pos < k:
                    best[pos] = best[pos - 1]
                    bidx[pos] = bidx[pos - 1]
                pos -= 1
            best[pos] = acc
            bidx[pos] = j
            if filled < k:
                filled += 1
        for m in range(k):
            idx[i, m] = bidx[m]
            dist[i, m] = np.sqrt(best[m])
    return dist, idx


_knn_nb = _njit(_knn_py)


def _knn_numpy(queries, refs, k, exclude_self):
    sq = (
        np.sum(queries**2, axis=1)[:, None]
        + np.sum(refs**2, axis=1)[None, :]
        - 2.0 * queries @ refs.T
    )
    # Expanded form loses exact zeros; recompute exactly on the selected neighbours below.
    np.maximum(sq, 0.0, out=sq)
    if exclude_self:
        np.fill_diagonal(sq, np.inf)
    idx = np.argsort(sq, axis=1, kind="mergesort")[:, :k]
    diff = queries[:, None, :] - refs[idx]
    dist = np.sqrt(np.sum(diff * diff, axis=2))
    return dist, idx.astype(np.int64)


def knn(queries, refs, k: int, exclude_self: bool = False):
    """Return ``(distances, indices)`` of the ``k`` nearest rows of ``refs``.

    With ``exclude_self`` the queries are the reference set itself and a point
    is never its own neighbour.
    """
    queries = np.ascontiguousarray(queries, dtype=np.float64)
    refs = np.ascontiguousarray(refs, dtype=np.float64)
    if numba_enabled():
        return _knn_nb(queries, refs, int(k), bool(exclude_self))
    return _knn_numpy(queries, refs, int(k), bool(exclude_self))


# --------------------------------------------------------------------------
# One EM sweep for a two-component 1-D Gaussian mixture


def _em_step_py(x, w, mu, var):
    n = x.shape[0]
    resp = np.empty((n, 2))
    loglik = 0.0
    for i in range(n):
        tot = 0.0
        for k in range(2):
            diff = x[i] - mu[k]
            p = w[k] * np.exp(-0.5 * diff * diff / var[k]) / np.sqrt(2.0 * np.pi * var[k])
            resp[i, k] = p
            tot += p
        if tot <= 0.0:
            tot = 1e-300
        loglik += np.log(tot)
        for k in range(2):
            resp[i, k] /= tot
    new_w = np.empty(2)
    new_mu = np.empty(2)
    new_var = np.empty(2)
    for k in range(2):
        nk = 0.0
        s = 0.0
        for i in range(n):
            nk += resp[i, k]
            s += resp[i, k] * x[i]
        m = s / nk if nk > 0.0 else mu[k]
        v = 0.0
        for i in range(n):
            diff = x[i] - m
            v += resp[i, k] * diff * diff
        new_w[k] = nk / n
        new_mu[k] = m
        new_var[k] = v / nk if nk > 0.0 else 0.0
    return new_w, new_mu, new_var, resp, loglik


_em_step_nb = _njit(_em_step_py)


def _em_step_numpy(x, w, mu, var):
    diff = x[:, None] - mu[None, :]
    dens = w[None, :] * np.exp(-0.5 * diff**2 / var[None, :]) / np.sqrt(2.0 * np.pi * var[None, :])
    tot = np.maximum(dens.sum(axis=1), 1e-300)
    loglik = float(np.sum(np.log(tot)))
    resp = dens / tot[:, None]
    nk = resp.sum(axis=0)
    safe = np.where(nk > 0.0, nk, 1.0)
    new_mu = np.where(nk > 0.0, (resp * x[:, None]).sum(axis=0) / safe, mu)
    new_var = np.where(nk > 0.0, (resp * (x[:, None] - new_mu[None, :]) ** 2).sum(axis=0) / safe, 0.0)
    return nk / x.shape[0], new_mu, new_var, resp, loglik


def em_step(x, w, mu, var):
    args = [np.ascontiguousarray(a, dtype=np.float64) for a in (x, w, mu, var)]
    if numba_enabled():
        return _em_step_nb(*args)
    return _em_step_numpy(*args)
