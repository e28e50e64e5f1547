"""GAE, conjugate gradient and the TRPO update."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .. import _accel
from ..diffcore import AdamState, ParamSet, Tape, adam_step, ops
from ..diffcore.tape import DiffError
from .rollout import RolloutBatch

log = logging.getLogger(__name__)


class NumericError(ArithmeticError):
    pass


@dataclass(frozen=True)
class TRPOConfig:
    gamma: float = 0.995
    gae_lambda: float = 0.97
    max_kl: float = 0.01
    cg_iters: int = 10
    cg_damping: float = 0.1
    backtrack_coeff: float = 0.8
    max_backtracks: int = 10
    batch_steps: int = 5000
    value_lr: float = 3e-4
    value_epochs: int = 5
    value_minibatch: int = 128
    normalize_advantages: bool = True
    fisher: str = "exact"  # or "finite-diff"

    def __post_init__(self):
        if not (0 < self.gamma <= 1 and 0 < self.gae_lambda <= 1 and self.max_kl > 0):
            raise ValueError("TRPOConfig needs 0<gamma<=1, 0<lambda<=1, max_kl>0")


def compute_gae(rewards, values, dones, gamma: float, lam: float):
    """GAE(lambda) over one segment.

    ``values`` has one more entry than ``rewards``: the bootstrap value of the
    state after the last step. ``dones[t]`` cuts the recursion after step t.
    Returns ``(advantages, value_targets)``.
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    dones = np.asarray(dones, dtype=np.float64)
    if values.shape[0] != rewards.shape[0] + 1 or dones.shape != rewards.shape:
        raise ValueError(
            f"compute_gae length mismatch: rewards {rewards.shape}, values {values.shape}, dones {dones.shape}"
        )
    adv = _accel.gae_kernel(rewards, values, dones, gamma, lam)
    return adv, adv + values[:-1]


def batch_gae(batch: RolloutBatch, values_s, values_s2, gamma, lam):
    """GAE for an env-major rollout batch, one episode piece at a time.

    A piece ends at an episode end or a segment end. Time-limit cuts and
    segment ends bootstrap from ``V(s')``; only true terminals use zero.
    """
    n = len(batch)
    adv = np.empty(n)
    ends = np.flatnonzero(batch.segment_end | batch.dones)
    start = 0
    for end in ends:
        sl = slice(start, end + 1)
        boot = 0.0 if batch.terminals[end] else values_s2[end]
        vals = np.append(values_s[sl], boot)
        adv[sl], _ = compute_gae(batch.rewards[sl], vals, np.zeros(end + 1 - start), gamma, lam)
        start = end + 1
    return adv, adv + values_s


def conjugate_gradient(avp, b, iters: int = 10, tol: float = 1e-10):
    """Solve ``A x = b`` for symmetric positive-definite ``A`` given as a product function.

    Stops when ``||r|| <= tol * ||b||``. Returns ``(x, relative_residual)``
    where the residual is recomputed as ``||A x - b|| / ||b||``.
    """
    b = np.asarray(b, dtype=np.float64)
    x = np.zeros_like(b)
    r = b.copy()
    p = r.copy()
    rr = float(r @ r)
    bnorm = float(np.sqrt(b @ b))
    if bnorm == 0.0:
        return x, 0.0
    for _ in range(iters):
        if np.sqrt(rr) <= tol * bnorm:
            break
        Ap = avp(p)
        pAp = float(p @ Ap)
        if pAp <= 0 or not np.isfinite(pAp):
            raise NumericError("conjugate gradient: operator is not positive definite")
        alpha = rr / pAp
        x = x + alpha * p
        r = r - alpha * Ap
        if not np.all(np.isfinite(x)):
            raise NumericError("conjugate gradient produced a non-finite iterate")
        rr_new = float(r @ r)
        p = r + (rr_new / rr) * p
        rr = rr_new
    resid = float(np.linalg.norm(avp(x) - b) / bnorm)
    if resid > tol:
        log.debug("CG stopped with relative residual %.3e", resid)
    return x, resid


def surrogate_and_kl(policy, params, old, batch_states, batch_actions, old_logp, advantages):
    """Numpy surrogate ``mean(exp(logp - logp_old) * A)`` and mean KL(old || new)."""
    logp = policy.log_prob(params, batch_states, batch_actions)
    ratio = np.exp(logp - old_logp)
    if not np.all(np.isfinite(ratio)):
        bad = int(np.flatnonzero(~np.isfinite(ratio))[0])
        raise NumericError(f"non-finite importance ratio at sample {bad}")
    surr = float(np.mean(ratio * advantages))
    kl = float(policy.kl(old, params, batch_states))
    return surr, kl


def _surrogate_grad(policy, params, states, actions, old_logp, adv):
    tape = Tape()
    pv = tape.watch(params)
    logp = policy.log_prob(pv, states, actions)
    surr = ops.mean(ops.exp(logp - old_logp) * adv)
    return ParamSet(tape.gradient(surr, pv))


def _kl_grad(policy, old, params, states):
    tape = Tape()
    pv = tape.watch(params)
    return ParamSet(tape.gradient(policy.kl(old, pv, states), pv)).flat()


def fisher_product_fn(policy, params: ParamSet, old, states, cfg: TRPOConfig):
    """Damped Fisher-vector product on flat vectors."""
    if cfg.fisher == "exact":
        def fvp(v):
            return policy.fisher_vector(params, states, params.unflat(v)).flat() + cfg.cg_damping * v
    elif cfg.fisher == "finite-diff":
        flat0 = params.flat()

        def fvp(v):
            eps = 1e-5 / max(1.0, float(np.linalg.norm(v)))
            gp = _kl_grad(policy, old, params.unflat(flat0 + eps * v), states)
            gm = _kl_grad(policy, old, params.unflat(flat0 - eps * v), states)
            return (gp - gm) / (2 * eps) + cfg.cg_damping * v
    else:
        raise ValueError(f"unknown fisher mode {cfg.fisher!r}")
    return fvp


@dataclass
class TRPOInfo:
    surrogate_before: float = 0.0
    surrogate: float = 0.0
    kl: float = 0.0
    accepted: bool = False
    backtracks: int = 0
    cg_residual: float = 0.0
    entropy: float = 0.0
    value_loss: float = 0.0
    extra: dict = field(default_factory=dict)


def trpo_step(policy, params: ParamSet, batch: RolloutBatch, cfg: TRPOConfig):
    """Natural-gradient step with backtracking line search.

    ``batch.advantages`` must be set. Returns ``(new_params, TRPOInfo)``;
    params are returned unchanged when no candidate passes the line search.
    """
    states, actions = batch.states, batch.actions
    adv = np.asarray(batch.advantages, dtype=np.float64)
    if cfg.normalize_advantages and adv.size > 1 and adv.std() > 0:
        adv = (adv - adv.mean()) / adv.std()
    old_logp = np.asarray(policy.log_prob(params, states, actions))
    old = policy.dist_params(params, states)
    info = TRPOInfo(entropy=policy.entropy(params, states))
    surr0 = float(np.mean(adv))
    info.surrogate_before = info.surrogate = surr0

    g = _surrogate_grad(policy, params, states, actions, old_logp, adv).flat()
    if not np.any(g):
        log.info("TRPO: zero policy gradient, policy unchanged")
        return params, info
    fvp = fisher_product_fn(policy, params, old, states, cfg)
    direction, info.cg_residual = conjugate_gradient(fvp, g, cfg.cg_iters)
    dAd = float(direction @ fvp(direction))
    if not dAd > 0:
        raise NumericError("non-positive curvature along the TRPO step direction")
    full_step = np.sqrt(2.0 * cfg.max_kl / dAd) * direction
    flat0 = params.flat()
    for k in range(cfg.max_backtracks):
        cand = params.unflat(flat0 + cfg.backtrack_coeff**k * full_step)
        surr, kl = surrogate_and_kl(policy, cand, old, states, actions, old_logp, adv)
        if surr > surr0 and kl <= cfg.max_kl:
            info.surrogate, info.kl, info.accepted, info.backtracks = surr, kl, True, k
            return cand, info
    log.info("TRPO: line search found no acceptable step, policy unchanged")
    info.backtracks = cfg.max_backtracks
    return params, info


def fit_value(vnet, vparams: ParamSet, state: AdamState, states, targets, cfg: TRPOConfig,
              rng: np.random.Generator):
    """Adam regression of the value net on GAE targets; returns ``(params, last_loss)``."""
    n = len(states)
    targets = np.asarray(targets, dtype=np.float64)[:, None]
    loss_val = 0.0
    for _ in range(cfg.value_epochs):
        perm = rng.permutation(n)
        for lo in range(0, n, cfg.value_minibatch):
            idx = perm[lo : lo + cfg.value_minibatch]
            tape = Tape()
            pv = tape.watch(vparams)
            pred = vnet(pv, states[idx])
            loss = ops.mean(ops.square(pred - targets[idx]))
            loss_val = float(loss.value)
            vparams = adam_step(vparams, tape.gradient(loss, pv), state)
    return vparams, loss_val


def trpo_update(policy, params, vnet, vparams, vstate, batch, cfg: TRPOConfig, rng):
    """Full RL inner step: GAE from ``batch.rewards``, TRPO on the policy, then value fitting."""
    if batch.rewards is None:
        raise ValueError("batch.rewards must be set before trpo_update")
    try:
        v_s = vnet(vparams, batch.states)[:, 0]
        v_s2 = vnet(vparams, batch.next_states)[:, 0]
        batch.advantages, batch.value_targets = batch_gae(batch, v_s, v_s2, cfg.gamma, cfg.gae_lambda)
        new_params, info = trpo_step(policy, params, batch, cfg)
        vparams, info.value_loss = fit_value(vnet, vparams, vstate, batch.states, batch.value_targets, cfg, rng)
    except DiffError as exc:
        raise NumericError(str(exc)) from exc
    return new_params, vparams, info
