"""Diversity and outlier statistics for corrupted states."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import _accel

DIST_FLOOR = 1e-12


def corrupted_variance(samples) -> float:
    """Sum over dimensions of the per-dimension population variance."""
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim != 2 or len(x) == 0:
        raise ValueError("expected a non-empty (n, dim) array")
    return float(np.sum((x - x.mean(axis=0)) ** 2) / len(x))


@dataclass
class LofReport:
    scores: np.ndarray
    k: int
    threshold: float

    @property
    def flagged(self) -> np.ndarray:
        return self.scores > self.threshold

    @property
    def percent(self) -> float:
        return float(100.0 * np.mean(self.flagged))


def lof(queries, observed, k: int = 10, threshold: float = 1.5) -> LofReport:
    """Local outlier factor of each query against the observed reference set.

    Reference k-distances and densities come from the observed set alone
    (a reference point is not its own neighbour). Distances are floored at
    ``1e-12`` so duplicated points keep finite densities.
    """
    q = np.asarray(queries, dtype=np.float64)
    ref = np.asarray(observed, dtype=np.float64)
    if len(ref) <= k:
        raise ValueError(f"LOF needs more than k={k} observed points, got {len(ref)}")
    if q.shape[1] != ref.shape[1]:
        raise ValueError("queries and observed points differ in dimension")
    rd, ri = _accel.knn(ref, ref, k, exclude_self=True)
    rd = np.maximum(rd, DIST_FLOOR)
    kdist = rd[:, -1]
    lrd_ref = 1.0 / np.mean(np.maximum(kdist[ri], rd), axis=1)
    qd, qi = _accel.knn(q, ref, k, exclude_self=False)
    qd = np.maximum(qd, DIST_FLOOR)
    lrd_q = 1.0 / np.mean(np.maximum(kdist[qi], qd), axis=1)
    scores = np.mean(lrd_ref[qi], axis=1) / lrd_q
    return LofReport(scores, k, threshold)
