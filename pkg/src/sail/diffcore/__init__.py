"""Tiny reverse-mode autodiff, layers and Adam, all float64."""

from . import tape as ops
from .checkpoint import CheckpointError
from .nn import MLP, ConvActionEncoder, evaluate
from .optim import AdamState, adam_step
from .params import ParamSet
from .tape import DiffError, Tape, Var


def forward(net, params, x, tape: Tape):
    """Record ``net(params, x)`` on ``tape``; returns ``(out, param_vars)``."""
    pv = tape.watch(params)
    xv = x if isinstance(x, Var) else tape.var(x)
    return net(pv, xv), pv


def backward(tape: Tape, loss: Var, param_vars) -> ParamSet:
    return ParamSet(tape.gradient(loss, param_vars))


__all__ = [
    "AdamState",
    "CheckpointError",
    "ConvActionEncoder",
    "DiffError",
    "MLP",
    "ParamSet",
    "Tape",
    "Var",
    "adam_step",
    "backward",
    "evaluate",
    "forward",
    "ops",
]
