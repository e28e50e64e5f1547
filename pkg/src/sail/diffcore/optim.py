from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .params import ParamSet
from .tape import DiffError


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def to_arrays(self, prefix: str) -> dict[str, np.ndarray]:
        out = {f"{prefix}step": np.array([float(self.step)])}
        for k in self.m:
            out[f"{prefix}m/{k}"] = self.m[k]
            out[f"{prefix}v/{k}"] = self.v[k]
        return out

    @classmethod
    def from_arrays(cls, arrays, prefix: str, lr: float) -> "AdamState":
        st = cls(lr=lr, step=int(arrays[f"{prefix}step"][0]))
        for key, val in arrays.items():
            if key.startswith(f"{prefix}m/"):
                st.m[key[len(prefix) + 2 :]] = np.array(val)
            elif key.startswith(f"{prefix}v/"):
                st.v[key[len(prefix) + 2 :]] = np.array(val)
        return st


def adam_step(params: ParamSet, grads, state: AdamState) -> ParamSet:
    """One bias-corrected Adam update; mutates ``state`` and returns new params.

    Gradients missing from ``grads`` are treated as zero.
    """
    for name in grads:
        if name not in params:
            raise DiffError(f"gradient for unknown parameter {name!r}")
        g = grads[name]
        if np.shape(g) != params[name].shape:
            raise DiffError(f"gradient shape {np.shape(g)} does not match {name} {params[name].shape}")
        if not np.all(np.isfinite(g)):
            raise DiffError(f"non-finite gradient for parameter {name!r}")

    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    new = {}
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p)
        m = state.m.get(name, np.zeros_like(p))
        v = state.v.get(name, np.zeros_like(p))
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * g * g
        state.m[name], state.v[name] = m, v
        new[name] = p - state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return ParamSet(new)
