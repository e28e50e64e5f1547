from __future__ import annotations

from typing import Callable, Mapping

import numpy as np

from .tape import Tape


def numeric_grad(fn: Callable[[dict], float], arrays: Mapping[str, np.ndarray], h: float = 1e-5):
    """Central finite differences of a scalar function of named arrays."""
    base = {k: np.array(v, dtype=np.float64) for k, v in arrays.items()}
    out = {}
    for name, a in base.items():
        g = np.zeros_like(a)
        flat = a.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + h
            fp = fn(base)
            flat[i] = old - h
            fm = fn(base)
            flat[i] = old
            gflat[i] = (fp - fm) / (2.0 * h)
        out[name] = g
    return out


def check_gradients(loss_fn, arrays: Mapping[str, np.ndarray], h: float = 1e-5):
    """Compare tape gradients with central differences.

    ``loss_fn(vars_dict)`` must build a scalar from tape variables (or plain
    arrays, for the numeric side). Returns the worst relative error, using
    ``|a - n| / max(|a|, |n|, 1e-8)`` per entry.
    """
    tape = Tape()
    vs = {k: tape.var(v) for k, v in arrays.items()}
    loss = loss_fn(vs)
    analytic = tape.gradient(loss, vs)

    def scalar(d):
        val = loss_fn(d)
        return float(np.asarray(getattr(val, "value", val)))

    numeric = numeric_grad(scalar, arrays, h)
    worst = 0.0
    for k in analytic:
        a, n = analytic[k], numeric[k]
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-8)
        worst = max(worst, float(np.max(np.abs(a - n) / denom)) if a.size else 0.0)
    return worst, analytic, numeric
