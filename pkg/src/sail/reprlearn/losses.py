"""Self-supervised losses on representation batches.

Each loss accepts tape variables or plain arrays; on arrays it simply
evaluates. All inputs are ``(batch, dim)``.
"""

from __future__ import annotations

import numpy as np

from ..diffcore import ops
from ..diffcore.tape import DiffError, Var


def _v(x):
    return x.value if isinstance(x, Var) else np.asarray(x, dtype=np.float64)


def _unit_rows(z, name: str):
    norms = np.sqrt(np.sum(_v(z) ** 2, axis=1))
    if np.any(norms < 1e-12):
        raise DiffError(f"cosine similarity on a zero-norm row of {name}")
    return z / ops.sqrt(ops.vsum(ops.square(z), axis=1, keepdims=True))


def cosine_matrix(a, b):
    return _unit_rows(a, "a") @ ops.transpose(_unit_rows(b, "b"))


def infonce_forward(z_pred_next, z_t, z_next, tau: float = 0.1):
    """Forward-dynamics InfoNCE.

    Positive: ``cs(pred_i, next_i)``. Denominator: the ``2(BS-1)`` negatives
    ``cs(pred_i, z_t_j)`` and ``cs(pred_i, next_j)`` for ``j != i``. The
    positive itself is left out of the denominator, so the loss can go
    below zero.
    """
    bs = _v(z_pred_next).shape[0]
    if bs < 2:
        raise DiffError("InfoNCE needs a batch of at least 2")
    if tau <= 0:
        raise ValueError("temperature must be positive")
    if not (_v(z_t).shape == _v(z_next).shape == _v(z_pred_next).shape):
        raise DiffError("InfoNCE inputs must share one shape")
    unit_pred = _unit_rows(z_pred_next, "predicted next state")
    s_cur = unit_pred @ ops.transpose(_unit_rows(z_t, "current state"))
    s_next = unit_pred @ ops.transpose(_unit_rows(z_next, "next state"))
    positive = ops.vsum(s_next * np.eye(bs), axis=1) / tau
    # j == i entries are pushed to exp(-1e9) == 0 exactly
    mask = np.where(np.eye(bs, dtype=bool), -1e9, 0.0)
    logits = ops.concat([s_cur / tau + mask, s_next / tau + mask], axis=1)
    log_zeta = ops.logsumexp(logits, axis=1)
    return -ops.mean(positive - log_zeta)


def state_mse(z, z_corrupt):
    """Mean over the batch of the squared Euclidean distance between rows."""
    if _v(z).shape != _v(z_corrupt).shape:
        raise DiffError(f"state MSE shape mismatch {_v(z).shape} vs {_v(z_corrupt).shape}")
    return ops.mean(ops.vsum(ops.square(z - z_corrupt), axis=1))


def barlow_twins(za, za_corrupt, center: bool = True, paper_sign: bool = False):
    """Cross-correlation loss driving ``C`` toward the identity.

    Columns are (optionally) centered over the batch and scaled to unit
    norm, ``C = Za^T Za'``, loss ``sum_i (1 - C_ii)^2 + sum_{i!=j} C_ij^2``.
    ``paper_sign`` flips the off-diagonal term to a subtraction.
    """
    a, b = _v(za), _v(za_corrupt)
    if a.shape != b.shape:
        raise DiffError("Barlow views must have equal shapes")
    if a.shape[0] < 2:
        raise DiffError("Barlow loss needs a batch of at least 2")

    def norm_cols(z, raw):
        if center:
            raw = raw - raw.mean(axis=0)
            z = z - ops.mean(z, axis=0, keepdims=True)
        if np.any(np.sqrt(np.sum(raw**2, axis=0)) < 1e-12):
            raise DiffError("Barlow loss: a representation dimension has zero batch variance")
        return z / ops.sqrt(ops.vsum(ops.square(z), axis=0, keepdims=True))

    C = ops.transpose(norm_cols(za, a)) @ norm_cols(za_corrupt, b)
    d = C.shape[0] if isinstance(C, Var) else np.shape(C)[0]
    eye = np.eye(d)
    on = ops.vsum(ops.square(1.0 - C * eye) * eye)
    off = ops.vsum(ops.square(C * (1.0 - eye)))
    return on - off if paper_sign else on + off


def total_loss(l_forward, l_state, l_action, weights=(1.0, 100.0, 1.0)):
    lf, ls, la = weights
    return lf * l_forward + ls * l_state + la * l_action
