"""Reverse-mode autodiff over dense float64 arrays.

A :class:`Tape` records primitive ops in execution order. Values flowing
through the graph are :class:`Var` handles; plain numpy arrays mixed into an
op are treated as constants. ``tape.gradient(loss, params)`` walks the
records once in reverse.
"""

from __future__ import annotations

from typing import Callable, Mapping, Sequence

import numpy as np


class DiffError(ValueError):
    """Raised for shape errors, non-scalar losses and non-finite values."""


class Var:
    __slots__ = ("value", "tape", "idx", "__weakref__")

    # make numpy defer to our reflected operators
    __array_ufunc__ = None

    def __init__(self, value: np.ndarray, tape: "Tape", idx: int):
        self.value = value
        self.tape = tape
        self.idx = idx

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    def __repr__(self):
        return f"Var(shape={self.value.shape}, idx={self.idx})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __pow__(self, p):
        if p == 2:
            return square(self)
        return power(self, p)

    def __getitem__(self, key):
        return getitem(self, key)

    @property
    def T(self):
        return transpose(self)

    def sum(self, axis=None, keepdims=False):
        return vsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


class Tape:
    """Ordered record of primitive ops.

    Each record is ``(out_idx, parent_idxs, vjp)`` where ``vjp(g)`` maps the
    output cotangent to one cotangent per parent. Parents always have smaller
    indices than the output, so reverse record order is a valid topological
    order.
    """

    def __init__(self, check_finite: bool = True):
        self.records: list[tuple[int, tuple[int, ...], Callable]] = []
        self._n = 0
        self.check_finite = check_finite

    def __len__(self):
        return len(self.records)

    def _new(self, value: np.ndarray) -> Var:
        v = Var(value, self, self._n)
        self._n += 1
        return v

    def var(self, value) -> Var:
        """Register a leaf (a parameter or an input we want gradients for)."""
        return self._new(np.array(value, dtype=np.float64))

    def watch(self, params: Mapping[str, np.ndarray]) -> dict[str, Var]:
        return {name: self.var(params[name]) for name in sorted(params)}

    def record(self, value: np.ndarray, parents: Sequence[Var], vjp: Callable) -> Var:
        if self.check_finite and not np.all(np.isfinite(value)):
            raise DiffError("non-finite value produced on tape")
        out = self._new(value)
        self.records.append((out.idx, tuple(p.idx for p in parents), vjp))
        return out

    def backward(self, loss: Var) -> dict[int, np.ndarray]:
        if not isinstance(loss, Var) or loss.tape is not self:
            raise DiffError("loss is not recorded on this tape")
        if loss.value.size != 1:
            raise DiffError(f"loss must be a scalar, got shape {loss.value.shape}")
        grads: dict[int, np.ndarray] = {loss.idx: np.ones_like(loss.value)}
        for out_idx, parents, vjp in reversed(self.records):
            if out_idx > loss.idx:
                continue
            g = grads.pop(out_idx, None)
            if g is None:
                continue
            for pidx, pg in zip(parents, vjp(g)):
                if pg is None:
                    continue
                if pidx in grads:
                    grads[pidx] = grads[pidx] + pg
                else:
                    grads[pidx] = pg
        return grads

    def gradient(self, loss: Var, wrt: Mapping[str, Var] | Sequence[Var] | Var):
        """Gradients of a scalar ``loss`` w.r.t. leaves.

        Leaves that do not influence the loss get a zero array.
        """
        grads = self.backward(loss)

        def one(v: Var) -> np.ndarray:
            g = grads.get(v.idx)
            if g is None:
                return np.zeros_like(v.value)
            return np.asarray(g, dtype=np.float64).reshape(v.value.shape)

        if isinstance(wrt, Var):
            return one(wrt)
        if isinstance(wrt, Mapping):
            return {name: one(wrt[name]) for name in sorted(wrt)}
        return [one(v) for v in wrt]


# --------------------------------------------------------------------------
# helpers


def _tape_of(*xs) -> Tape | None:
    for x in xs:
        if isinstance(x, Var):
            return x.tape
    return None


def _val(x) -> np.ndarray:
    if isinstance(x, Var):
        return x.value
    return np.asarray(x, dtype=np.float64)


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _binary(a, b, value, ga, gb):
    tape = _tape_of(a, b)
    if tape is None:
        return value
    parents, fns = [], []
    if isinstance(a, Var):
        parents.append(a)
        fns.append(ga)
    if isinstance(b, Var):
        parents.append(b)
        fns.append(gb)
    return tape.record(value, parents, lambda g: tuple(f(g) for f in fns))


def _unary(x: Var, value, gx):
    if not isinstance(x, Var):
        return value
    return x.tape.record(value, (x,), lambda g: (gx(g),))


# --------------------------------------------------------------------------
# elementwise


def add(a, b):
    av, bv = _val(a), _val(b)
    return _binary(
        a, b, av + bv,
        lambda g: _unbroadcast(g, av.shape),
        lambda g: _unbroadcast(g, bv.shape),
    )


def sub(a, b):
    av, bv = _val(a), _val(b)
    return _binary(
        a, b, av - bv,
        lambda g: _unbroadcast(g, av.shape),
        lambda g: _unbroadcast(-g, bv.shape),
    )


def mul(a, b):
    av, bv = _val(a), _val(b)
    return _binary(
        a, b, av * bv,
        lambda g: _unbroadcast(g * bv, av.shape),
        lambda g: _unbroadcast(g * av, bv.shape),
    )


def div(a, b):
    av, bv = _val(a), _val(b)
    out = av / bv
    return _binary(
        a, b, out,
        lambda g: _unbroadcast(g / bv, av.shape),
        lambda g: _unbroadcast(-g * out / bv, bv.shape),
    )


def neg(x):
    return _unary(x, -_val(x), lambda g: -g)


def square(x):
    xv = _val(x)
    return _unary(x, xv * xv, lambda g: 2.0 * g * xv)


def power(x, p: float):
    xv = _val(x)
    return _unary(x, xv**p, lambda g: g * p * xv ** (p - 1))


def sqrt(x):
    out = np.sqrt(_val(x))
    return _unary(x, out, lambda g: 0.5 * g / out)


def exp(x):
    out = np.exp(_val(x))
    return _unary(x, out, lambda g: g * out)


def log(x):
    xv = _val(x)
    if np.any(xv <= 0):
        raise DiffError("log of a non-positive value")
    return _unary(x, np.log(xv), lambda g: g / xv)


def tanh(x):
    out = np.tanh(_val(x))
    return _unary(x, out, lambda g: g * (1.0 - out * out))


def relu(x):
    xv = _val(x)
    mask = xv > 0
    return _unary(x, np.where(mask, xv, 0.0), lambda g: g * mask)


def leaky_relu(x, slope: float = 0.01):
    xv = _val(x)
    mask = xv > 0
    return _unary(x, np.where(mask, xv, slope * xv), lambda g: np.where(mask, g, slope * g))


def sigmoid(x):
    xv = _val(x)
    out = _stable_sigmoid(xv)
    return _unary(x, out, lambda g: g * out * (1.0 - out))


def _stable_sigmoid(xv):
    out = np.empty_like(xv)
    pos = xv >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-xv[pos]))
    e = np.exp(xv[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def log_sigmoid(x):
    """``log(sigmoid(x))`` without overflow."""
    xv = _val(x)
    out = -np.logaddexp(0.0, -xv)
    sig = _stable_sigmoid(xv)
    return _unary(x, out, lambda g: g * (1.0 - sig))


def softplus(x):
    xv = _val(x)
    sig = _stable_sigmoid(xv)
    return _unary(x, np.logaddexp(0.0, xv), lambda g: g * sig)


def clip(x, lo: float, hi: float):
    """Clamp; gradient is passed only where the input lies strictly inside."""
    xv = _val(x)
    inside = (xv > lo) & (xv < hi)
    return _unary(x, np.clip(xv, lo, hi), lambda g: g * inside)


# --------------------------------------------------------------------------
# reductions and shape ops


def vsum(x, axis=None, keepdims=False):
    xv = _val(x)
    out = np.sum(xv, axis=axis, keepdims=keepdims)

    def gx(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return np.broadcast_to(g, xv.shape).copy()

    return _unary(x, np.asarray(out, dtype=np.float64), gx)


def mean(x, axis=None, keepdims=False):
    xv = _val(x)
    n = xv.size if axis is None else np.prod([xv.shape[a] for a in np.atleast_1d(axis)])
    return mul(vsum(x, axis=axis, keepdims=keepdims), 1.0 / n)


def logsumexp(x, axis=-1, keepdims=False):
    xv = _val(x)
    m = np.max(xv, axis=axis, keepdims=True)
    e = np.exp(xv - m)
    s = np.sum(e, axis=axis, keepdims=True)
    out = np.log(s) + m
    soft = e / s

    def gx(g):
        if not keepdims:
            g = np.expand_dims(g, axis)
        return g * soft

    return _unary(x, out if keepdims else np.squeeze(out, axis=axis), gx)


def reshape(x, shape):
    xv = _val(x)
    return _unary(x, xv.reshape(shape), lambda g: g.reshape(xv.shape))


def transpose(x, axes=None):
    xv = _val(x)
    inv = None if axes is None else np.argsort(axes)
    return _unary(x, np.transpose(xv, axes), lambda g: np.transpose(g, inv))


def getitem(x, key):
    xv = _val(x)

    fancy = any(isinstance(k, (np.ndarray, list)) for k in (key if isinstance(key, tuple) else (key,)))

    def gx(g):
        out = np.zeros_like(xv)
        if fancy:
            np.add.at(out, key, g)
        else:
            out[key] = g
        return out

    return _unary(x, xv[key], gx)


def concat(xs: Sequence, axis: int = -1):
    vals = [_val(x) for x in xs]
    out = np.concatenate(vals, axis=axis)
    tape = _tape_of(*xs)
    if tape is None:
        return out
    bounds = np.cumsum([0] + [v.shape[axis] for v in vals])
    parents = []
    slots = []
    for i, x in enumerate(xs):
        if isinstance(x, Var):
            parents.append(x)
            slots.append((bounds[i], bounds[i + 1]))

    def vjp(g):
        res = []
        for lo, hi in slots:
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(lo, hi)
            res.append(g[tuple(sl)])
        return tuple(res)

    return tape.record(out, parents, vjp)


# --------------------------------------------------------------------------
# linear algebra


def matmul(a, b):
    av, bv = _val(a), _val(b)
    if av.shape[-1] != bv.shape[-2 if bv.ndim > 1 else 0]:
        raise DiffError(f"matmul shape mismatch: {av.shape} @ {bv.shape}")

    def ga(g):
        return _unbroadcast(g @ np.swapaxes(bv, -1, -2), av.shape)

    def gb(g):
        return _unbroadcast(np.swapaxes(av, -1, -2) @ g, bv.shape)

    return _binary(a, b, av @ bv, ga, gb)


def conv1d_same3(x, w, b):
    """1-D convolution, kernel 3, stride 1, zero 'same' padding.

    ``x``: (B, L, Cin); ``w``: (3, Cin, Cout); ``b``: (Cout,). Returns (B, L, Cout).
    Output position ``l`` reads inputs ``l-1, l, l+1``.
    """
    xv, wv, bv = _val(x), _val(w), _val(b)
    if xv.ndim != 3 or wv.shape[0] != 3 or xv.shape[2] != wv.shape[1]:
        raise DiffError(f"conv1d shape mismatch: input {xv.shape}, kernel {wv.shape}")
    B, L, cin = xv.shape
    cout = wv.shape[2]
    pad = np.zeros((B, L + 2, cin))
    pad[:, 1:-1] = xv
    cols = np.concatenate([pad[:, 0:L], pad[:, 1 : L + 1], pad[:, 2 : L + 2]], axis=2)
    wflat = wv.reshape(3 * cin, cout)
    out = cols.reshape(B * L, 3 * cin) @ wflat
    out = out.reshape(B, L, cout) + bv

    tape = _tape_of(x, w, b)
    if tape is None:
        return out
    parents, which = [], []
    for tag, t in (("x", x), ("w", w), ("b", b)):
        if isinstance(t, Var):
            parents.append(t)
            which.append(tag)

    def vjp(g):
        g2 = g.reshape(B * L, cout)
        res = []
        for tag in which:
            if tag == "x":
                gcols = (g2 @ wflat.T).reshape(B, L, 3, cin)
                gpad = np.zeros((B, L + 2, cin))
                gpad[:, 0:L] += gcols[:, :, 0]
                gpad[:, 1 : L + 1] += gcols[:, :, 1]
                gpad[:, 2 : L + 2] += gcols[:, :, 2]
                res.append(gpad[:, 1:-1])
            elif tag == "w":
                res.append((cols.reshape(B * L, 3 * cin).T @ g2).reshape(3, cin, cout))
            else:
                res.append(g2.sum(axis=0))
        return tuple(res)

    return tape.record(out, parents, vjp)
