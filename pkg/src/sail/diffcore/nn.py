"""Network descriptions used by every model in the package.

A network is a small frozen description (widths, activation) plus a
``ParamSet``; calling ``net(params, x)`` on tape variables records the
forward pass. Parameter names are ``<prefix><layer>.<W|b>``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from . import tape as T
from .params import ParamSet
from .tape import DiffError, Var

ACTIVATIONS = {
    "tanh": T.tanh,
    "relu": T.relu,
    "leaky_relu": T.leaky_relu,
    "identity": lambda x: x,
}


def _uniform_init(rng: np.random.Generator, fan_in: int, shape, scale: float = 1.0):
    # variance 1/fan_in, bias handled by caller
    bound = scale * np.sqrt(3.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


def _width(x) -> int:
    return (x.value if isinstance(x, Var) else np.asarray(x)).shape[-1]


@dataclass(frozen=True)
class MLP:
    """Fully connected net: ``in -> hidden... -> out`` with a shared activation.

    The output layer is linear. ``out_scale`` shrinks the initial output
    weights (used for policy heads).
    """

    in_dim: int
    hidden: tuple[int, ...]
    out_dim: int
    activation: str = "tanh"
    prefix: str = ""
    out_scale: float = 1.0

    @property
    def sizes(self) -> tuple[int, ...]:
        return (self.in_dim, *self.hidden, self.out_dim)

    def _name(self, i: int, kind: str) -> str:
        return f"{self.prefix}l{i}.{kind}"

    def init(self, rng: np.random.Generator) -> ParamSet:
        sizes = self.sizes
        out = {}
        last = len(sizes) - 2
        for i, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
            scale = self.out_scale if i == last else 1.0
            out[self._name(i, "W")] = _uniform_init(rng, a, (a, b), scale)
            out[self._name(i, "b")] = np.zeros(b)
        return ParamSet(out)

    def __call__(self, params: Mapping, x):
        if _width(x) != self.in_dim:
            raise DiffError(
                f"{self.prefix or 'MLP'} layer 0: expected input width {self.in_dim}, got {_width(x)}"
            )
        act = ACTIVATIONS[self.activation]
        h = x
        n = len(self.sizes) - 1
        for i in range(n):
            h = h @ params[self._name(i, "W")] + params[self._name(i, "b")]
            if i < n - 1:
                h = act(h)
        return h

    def jvp(self, params: Mapping[str, np.ndarray], x: np.ndarray, tangent: Mapping[str, np.ndarray]):
        """Forward-mode product: output and d(output)/d(params) . tangent.

        Only tanh/identity activations are needed (policy networks).
        """
        if self.activation != "tanh":
            raise NotImplementedError("jvp implemented for tanh MLPs only")
        h = np.asarray(x, dtype=np.float64)
        dh = np.zeros_like(h)
        n = len(self.sizes) - 1
        for i in range(n):
            W, b = params[self._name(i, "W")], params[self._name(i, "b")]
            dW, db = tangent[self._name(i, "W")], tangent[self._name(i, "b")]
            pre = h @ W + b
            dpre = dh @ W + h @ dW + db
            if i < n - 1:
                h = np.tanh(pre)
                dh = (1.0 - h * h) * dpre
            else:
                h, dh = pre, dpre
        return h, dh


@dataclass(frozen=True)
class ConvActionEncoder:
    """Action encoder: the action vector is read as a length-dim(A), 1-channel signal.

    Six kernel-3 same-padded convolutions with LeakyReLU, global average over
    the length axis, then a linear head to ``out_dim``.
    """

    action_dim: int
    channels: tuple[int, ...] = (64, 64, 64, 128, 256, 256)
    out_dim: int = 8
    slope: float = 0.01
    prefix: str = "ae."

    def init(self, rng: np.random.Generator) -> ParamSet:
        out = {}
        cin = 1
        for i, cout in enumerate(self.channels):
            out[f"{self.prefix}c{i}.W"] = _uniform_init(rng, 3 * cin, (3, cin, cout))
            out[f"{self.prefix}c{i}.b"] = np.zeros(cout)
            cin = cout
        out[f"{self.prefix}head.W"] = _uniform_init(rng, cin, (cin, self.out_dim))
        out[f"{self.prefix}head.b"] = np.zeros(self.out_dim)
        return ParamSet(out)

    def __call__(self, params: Mapping, a):
        if _width(a) != self.action_dim:
            raise DiffError(
                f"action encoder conv0: expected action width {self.action_dim}, got {_width(a)}"
            )
        n = (a.value if isinstance(a, Var) else np.asarray(a)).shape[0]
        h = T.reshape(a, (n, self.action_dim, 1))
        for i in range(len(self.channels)):
            h = T.conv1d_same3(h, params[f"{self.prefix}c{i}.W"], params[f"{self.prefix}c{i}.b"])
            h = T.leaky_relu(h, self.slope)
        h = T.mean(h, axis=1)
        return h @ params[f"{self.prefix}head.W"] + params[f"{self.prefix}head.b"]


def evaluate(net, params: Mapping[str, np.ndarray], x: np.ndarray) -> np.ndarray:
    """Run a network outside any tape (plain numpy in, numpy out)."""
    out = net(params, np.asarray(x, dtype=np.float64))
    return out.value if isinstance(out, Var) else out

