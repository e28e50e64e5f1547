from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .. import _accel
from ..diffcore import ops

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class MixupConfig:
    alpha: float = 4.0
    gmm_threshold: float = 0.5
    gmm_components: int = 2

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError("mixup alpha must be positive")


@dataclass
class GMMResult:
    optimal_mask: np.ndarray
    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray
    posterior_optimal: np.ndarray
    iterations: int
    fallback: bool


def _kmeanspp_1d(x, rng):
    c0 = x[rng.integers(len(x))]
    d2 = (x - c0) ** 2
    if d2.sum() == 0:
        return np.array([c0, c0])
    c1 = x[rng.choice(len(x), p=d2 / d2.sum())]
    return np.array([c0, c1])


def fit_gmm_1d(x, rng: np.random.Generator, max_iter: int = 200, tol: float = 1e-6):
    """Two-component EM on scalars with k-means++ initialization.

    Returns ``(weights, means, variances, responsibilities, iterations)``;
    raises ``ValueError`` if a component collapses to zero variance or zero
    weight.
    """
    x = np.asarray(x, dtype=np.float64)
    if len(np.unique(x)) < 2:
        raise ValueError("GMM needs at least two distinct values")
    mu = _kmeanspp_1d(x, rng)
    assign = np.argmin((x[:, None] - mu[None, :]) ** 2, axis=1)
    w = np.array([np.mean(assign == k) for k in range(2)])
    var = np.array([np.var(x[assign == k]) if np.any(assign == k) else 0.0 for k in range(2)])
    prev = -np.inf
    it = 0
    resp = None
    for it in range(1, max_iter + 1):
        if np.any(var < 1e-12) or np.any(w * len(x) < 1.0):
            raise ValueError("GMM component collapsed")
        w, mu, var, resp, loglik = _accel.em_step(x, w, mu, var)
        if abs(loglik - prev) < tol * max(1.0, abs(loglik)):
            break
        prev = loglik
    if np.any(var < 1e-12) or np.any(w * len(x) < 1.0):
        raise ValueError("GMM component collapsed")
    # responsibilities under the final parameters
    diff = x[:, None] - mu[None, :]
    dens = w * np.exp(-0.5 * diff**2 / var) / np.sqrt(2 * np.pi * var)
    resp = dens / np.maximum(dens.sum(axis=1, keepdims=True), 1e-300)
    return w, mu, var, resp, it


def gmm_split(confidences, rng: np.random.Generator, threshold: float = 0.5) -> GMMResult:
    """Split demonstrations into likely-optimal and likely-non-optimal by their confidence.

    A pair is optimal when its posterior under the higher-mean component
    exceeds ``threshold``. Degenerate fits fall back to ``confidence > threshold``.
    """
    c = np.asarray(confidences, dtype=np.float64)
    try:
        w, mu, var, resp, it = fit_gmm_1d(c, rng)
    except ValueError as exc:
        log.warning("GMM split degenerate (%s); thresholding raw confidence at %.2f", exc, threshold)
        mask = c > threshold
        return GMMResult(mask, np.array([np.nan, np.nan]), np.array([np.nan, np.nan]),
                         np.array([np.nan, np.nan]), mask.astype(float), 0, True)
    hi = int(np.argmax(mu))
    post = resp[:, hi]
    return GMMResult(post > threshold, w, mu, var, post, it, False)


def mixup_coefficient(alpha: float, rng: np.random.Generator) -> float:
    lam = rng.beta(alpha, alpha)
    return max(lam, 1.0 - lam)


def manifold_mixup(z_o, y_o, z_n, y_n, alpha: float = 4.0, rng: np.random.Generator | None = None,
                   lam: float | None = None):
    """Interpolate optimal-side and non-optimal-side features, biased to the optimal side.

    ``lam' = max(lam, 1 - lam)`` with ``lam ~ Beta(alpha, alpha)`` unless
    ``lam`` is pinned. Works on tape variables (gradients reach both sides).
    Returns ``(z_mix, y_mix, lam')``.
    """
    if lam is None:
        lam_p = mixup_coefficient(alpha, rng)
    else:
        lam_p = max(lam, 1.0 - lam)
    zo_shape = z_o.value.shape if hasattr(z_o, "value") else np.shape(z_o)
    zn_shape = z_n.value.shape if hasattr(z_n, "value") else np.shape(z_n)
    if zo_shape != zn_shape or np.shape(y_o) != np.shape(y_n):
        raise ValueError("mixup inputs must have matching shapes")
    z_mix = ops.add(ops.mul(z_o, lam_p), ops.mul(z_n, 1.0 - lam_p))
    y_mix = lam_p * np.asarray(y_o, dtype=np.float64) + (1.0 - lam_p) * np.asarray(y_n, dtype=np.float64)
    return z_mix, y_mix, lam_p
