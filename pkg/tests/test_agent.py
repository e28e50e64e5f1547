import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sail.agent import (
    CategoricalPolicy,
    GaussianPolicy,
    NumericError,
    TRPOConfig,
    collect,
    compute_gae,
    conjugate_gradient,
    surrogate_and_kl,
    trpo_step,
    trpo_update,
    value_net,
)
from sail.agent.rollout import RolloutBatch
from sail.agent.trpo import batch_gae, fisher_product_fn
from sail.diffcore import AdamState
from sail.envs import make_env


@given(st.integers(1, 50), st.integers(0, 2**31 - 1))
def test_cg_matches_direct_solve(n, seed):
    rng = np.random.default_rng(seed)
    M = rng.normal(size=(n, n))
    A = M @ M.T + n * np.eye(n)
    b = rng.normal(size=n)
    x, resid = conjugate_gradient(lambda v: A @ v, b, iters=n + 5, tol=1e-12)
    ref = np.linalg.solve(A, b)
    assert np.linalg.norm(x - ref) <= 1e-6 * np.linalg.norm(ref)
    assert resid < 1e-6


def test_cg_rejects_indefinite():
    with pytest.raises(NumericError):
        conjugate_gradient(lambda v: -v, np.ones(3))


def test_gae_hand_case():
    # gamma=0.5, lambda=1: A_t is the discounted return minus V(s_t)
    r = np.array([1.0, 2.0, 3.0])
    v = np.array([0.5, 0.0, 1.0, 4.0])
    adv, tgt = compute_gae(r, v, np.zeros(3, bool), 0.5, 1.0)
    ret = np.array([1 + 0.5 * 2 + 0.25 * 3 + 0.125 * 4, 2 + 0.5 * 3 + 0.25 * 4, 3 + 0.5 * 4])
    np.testing.assert_allclose(tgt, ret)
    np.testing.assert_allclose(adv, ret - v[:3])
    # a done flag stops bootstrapping
    adv_d, _ = compute_gae(r, v, np.array([False, False, True]), 0.5, 1.0)
    assert adv_d[2] == pytest.approx(3 - 1.0)
    with pytest.raises(ValueError):
        compute_gae(r, v[:3], np.zeros(3, bool), 0.5, 1.0)


def _tiny_batch(dones, terminals, seg_end):
    n = len(dones)
    z = np.zeros((n, 1))
    return RolloutBatch(z, z, z, np.array(dones), np.array(terminals), np.arange(n), np.zeros(n), np.zeros(n),
                        np.array(seg_end), np.zeros(0), rewards=np.array([1.0, 2.0, 3.0, 4.0]))


def test_batch_gae_bootstraps_time_limits_only():
    v_s = np.array([0.5, 1.0, 2.0, 3.0])
    v_s2 = np.array([1.0, 7.0, 3.0, 5.0])
    # step 1 is a time-limit cut, step 3 a segment end: both bootstrap from V(s')
    b = _tiny_batch([False, True, False, False], [False, False, False, False], [False, False, False, True])
    adv, tgt = batch_gae(b, v_s, v_s2, 0.5, 1.0)
    np.testing.assert_allclose(tgt, [1 + 0.5 * 2 + 0.25 * 7, 2 + 0.5 * 7, 3 + 0.5 * 4 + 0.25 * 5, 4 + 0.5 * 5])
    np.testing.assert_allclose(adv, tgt - v_s)
    # a true terminal uses a zero bootstrap
    b = _tiny_batch([False, True, False, False], [False, True, False, False], [False, False, False, True])
    _, tgt = batch_gae(b, v_s, v_s2, 0.5, 1.0)
    assert tgt[1] == pytest.approx(2.0) and tgt[0] == pytest.approx(1 + 0.5 * 2)


def _fisher_dense(policy, params, states):
    """Explicit J^T M J / n via finite-difference Jacobians of the distribution parameters."""
    flat0 = params.flat()
    h = 1e-6

    def dist(flat):
        return policy.dist_params(params.unflat(flat), states)

    cols = []
    for i in range(len(flat0)):
        e = np.zeros_like(flat0)
        e[i] = h
        cols.append([(a - b) / (2 * h) for a, b in zip(dist(flat0 + e), dist(flat0 - e))])
    n = len(states)
    F = np.zeros((len(flat0), len(flat0)))
    if isinstance(policy, GaussianPolicy):
        _, log_std = dist(flat0)
        inv_var = np.exp(-2 * log_std)
        Jm = np.stack([c[0] for c in cols], axis=-1)  # (n, k, P)
        Js = np.stack([c[1] for c in cols], axis=-1)  # (k, P)
        F = np.einsum("nkp,k,nkq->pq", Jm, inv_var, Jm) / n + 2 * Js.T @ Js
    else:
        (lp,) = dist(flat0)
        p = np.exp(lp)
        J = np.stack([c[0] for c in cols], axis=-1)  # d log p / d theta, (n, A, P)
        for i in range(n):
            F += J[i].T @ np.diag(p[i]) @ J[i] / n
    return F


@pytest.mark.parametrize("kind", ["gauss", "cat"])
def test_exact_fisher_matches_dense_oracle(kind):
    rng = np.random.default_rng(0)
    pol = GaussianPolicy(3, 2, hidden=(4,)) if kind == "gauss" else CategoricalPolicy(3, 3, hidden=(4,))
    params = pol.init(rng)
    params = params.unflat(params.flat() + 0.3 * rng.normal(size=params.size))
    states = rng.normal(size=(7, 3))
    F = _fisher_dense(pol, params, states)
    cfg = TRPOConfig(cg_damping=0.0)
    old = pol.dist_params(params, states)
    for fisher in ("exact", "finite-diff"):
        fvp = fisher_product_fn(pol, params, old, states, TRPOConfig(cg_damping=0.0, fisher=fisher))
        for _ in range(3):
            v = rng.normal(size=params.size)
            np.testing.assert_allclose(fvp(v), F @ v, rtol=1e-4, atol=1e-6)
    assert cfg.cg_damping == 0.0


def test_kl_zero_at_identity_and_positive_elsewhere():
    rng = np.random.default_rng(1)
    pol = GaussianPolicy(3, 2, hidden=(5,))
    p = pol.init(rng)
    s = rng.normal(size=(10, 3))
    old = pol.dist_params(p, s)
    assert abs(float(pol.kl(old, p, s))) < 1e-14
    q = p.replace({"pi.log_std": p["pi.log_std"] + 0.1})
    # KL of equal means, std ratio e^0.1 per dim: log(s2/s1) + s1^2/(2 s2^2) - 1/2
    expect = 2 * (0.1 + 0.5 * np.exp(-0.2) - 0.5)
    assert float(pol.kl(old, q, s)) == pytest.approx(expect, rel=1e-12)


def test_collect_env_major_layout():
    env = make_env("PointMass2D")
    pol = GaussianPolicy(4, 2, hidden=(8,))
    p = pol.init(np.random.default_rng(0))
    batch = collect(env, pol, p, 250, np.random.default_rng(1))
    assert len(batch) == 250
    # within an env segment, next_states chain into states until an episode ends
    for i in range(len(batch) - 1):
        if not batch.segment_end[i] and not batch.dones[i]:
            np.testing.assert_array_equal(batch.next_states[i], batch.states[i + 1])
    assert batch.segment_end[-1]
    lp = pol.log_prob(p, batch.states, batch.actions)
    np.testing.assert_allclose(np.asarray(lp), batch.logp, atol=1e-10)


def test_trpo_step_respects_trust_region():
    env = make_env("PointMass2D")
    pol = GaussianPolicy(4, 2, hidden=(16,))
    vnet = value_net(4, hidden=(16,))
    rng = np.random.default_rng(2)
    p, vp = pol.init(rng), vnet.init(rng)
    cfg = TRPOConfig()
    vstate = AdamState(lr=cfg.value_lr)
    for _ in range(5):
        batch = collect(env, pol, p, 400, rng)
        batch.rewards = batch.env_rewards
        old = pol.dist_params(p, batch.states)
        new, vp, info = trpo_update(pol, p, vnet, vp, vstate, batch, cfg, rng)
        if info.accepted:
            _, kl = surrogate_and_kl(pol, new, old, batch.states, batch.actions, batch.logp,
                                     batch.advantages)
            assert kl <= cfg.max_kl
            assert info.surrogate > info.surrogate_before
        else:
            assert new.equal(p)
        p = new


def test_trpo_zero_advantage_leaves_policy():
    env = make_env("PointMass2D")
    pol = GaussianPolicy(4, 2, hidden=(8,))
    p = pol.init(np.random.default_rng(0))
    batch = collect(env, pol, p, 100, np.random.default_rng(0))
    batch.advantages = np.zeros(len(batch))
    new, info = trpo_step(pol, p, batch, TRPOConfig())
    assert new.equal(p) and not info.accepted
