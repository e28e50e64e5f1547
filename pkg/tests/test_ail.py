import math
from fractions import Fraction

import numpy as np
import pytest
from sklearn.metrics import roc_auc_score

from sail.ail import (
    LOGIT_CLAMP,
    Discriminator,
    ExpertSide,
    Featurizer,
    auc,
    beta_ratio,
    discriminate,
    epsilon_ratio,
    fit_gmm_1d,
    gail_disc_loss,
    gail_update,
    gmm_split,
    iwil_risk,
    manifold_mixup,
    mixup_coefficient,
    mixup_disc_loss,
    mixup_term,
    reward,
    train_classifier,
    weighted_disc_loss,
)
from sail.ail.update import _loss
from sail.diffcore import AdamState, DiffError, ParamSet, Tape
from sail.diffcore.gradcheck import check_gradients
from sail.reprlearn import RepresentationModel


def _disc(in_dim=3, hidden=(5,)):
    return Discriminator(in_dim, hidden)


def _zero_head(params):
    last = sorted(k for k in params if k.startswith("d."))[-2:]
    return params.replace({k: np.zeros_like(params[k]) for k in last})


def test_half_discriminator_loss_and_reward():
    rng = np.random.default_rng(0)
    d = _disc()
    p = _zero_head(d.init(rng))
    z = rng.normal(size=(7, 3))
    np.testing.assert_allclose(discriminate(d, p, z), 0.5)
    assert float(gail_disc_loss(d, p, z, z[:4])) == pytest.approx(2 * math.log(2), abs=1e-12)
    np.testing.assert_allclose(reward(d, p, z), math.log(2), atol=1e-12)


def test_logit_clamp():
    rng = np.random.default_rng(1)
    d = _disc()
    p = d.init(rng)
    bias = sorted(k for k in p if k.startswith("d."))[-1]
    hi = p.replace({bias: np.full_like(p[bias], 1e4)})
    lo = p.replace({bias: np.full_like(p[bias], -1e4)})
    z = rng.normal(size=(4, 3))
    np.testing.assert_array_equal(d.logits(hi, z), LOGIT_CLAMP)
    np.testing.assert_array_equal(d.logits(lo, z), -LOGIT_CLAMP)
    r = reward(d, lo, z)
    assert np.all(np.isfinite(r)) and r[0] == pytest.approx(30.0, abs=1e-9)
    assert np.isfinite(float(gail_disc_loss(d, hi, z, z)))
    with pytest.raises(DiffError):
        d.logits(p, np.zeros((2, 4)))
    with pytest.raises(DiffError):
        gail_disc_loss(d, p, np.zeros((0, 3)), z)


def test_risk_hand_case_and_ratios():
    g_l, g_u = np.zeros(4), np.zeros(6)
    y = np.array([1.0, 0.0, 1.0, 0.0])
    assert float(iwil_risk(g_l, y, g_u, 0.6)) == pytest.approx(0.693147, abs=1e-6)
    assert beta_ratio(40, 60) == Fraction(3, 5)
    assert beta_ratio(1, 2) == Fraction(2, 3)
    assert epsilon_ratio([1, 0, 1]) == Fraction(2, 3)
    with pytest.raises(ValueError):
        epsilon_ratio([0, 0])
    with pytest.raises(DiffError):
        iwil_risk(np.zeros(0), np.zeros(0), g_u, 0.5)
    # y = 1 labeled with large positive margin has near-zero labeled risk part
    r = float(iwil_risk(np.full(3, 20.0), np.ones(3), np.zeros(0), 0.0))
    assert r == pytest.approx(0.0, abs=1e-8)


@pytest.mark.parametrize("seed", range(10))
def test_risk_gradients(seed):
    rng = np.random.default_rng(seed)
    y = rng.uniform(size=5)
    arrays = {"l": rng.normal(size=5), "u": rng.normal(size=7)}
    assert check_gradients(lambda v: iwil_risk(v["l"], y, v["u"], 7 / 12), arrays)[0] < 1e-5


def test_auc_matches_sklearn():
    rng = np.random.default_rng(3)
    s = np.round(rng.normal(size=200), 1)
    lab = rng.uniform(size=200) < 0.4
    assert auc(s, lab) == pytest.approx(roc_auc_score(lab, s), abs=1e-12)


def test_classifier_ranks_unlabeled_optimal_pairs():
    rng = np.random.default_rng(4)
    n = 600
    opt = rng.uniform(size=n) < 0.5
    x = np.where(opt[:, None], rng.normal(1.0, 0.6, size=(n, 3)), rng.normal(-1.0, 0.6, size=(n, 3)))
    n_l = int(0.4 * n)
    pred, _, hist = train_classifier(x[:n_l], opt[:n_l].astype(float), x[n_l:], rng, steps=300,
                                     lr=1e-2, hidden=(16, 16))
    assert hist[-1] < hist[0]
    assert auc(pred(x[n_l:]), opt[n_l:]) >= 0.9


def test_gmm_split_misassignment():
    rng = np.random.default_rng(5)
    truth = rng.uniform(size=2000) < 0.5
    c = np.where(truth, rng.normal(0.8, 0.05, 2000), rng.normal(0.2, 0.05, 2000))
    res = gmm_split(c, rng)
    assert not res.fallback
    assert np.mean(res.optimal_mask != truth) <= 0.02
    np.testing.assert_allclose(np.sort(res.means), [0.2, 0.8], atol=0.01)


def test_gmm_degenerate_falls_back():
    rng = np.random.default_rng(6)
    c = np.full(50, 0.7)
    res = gmm_split(c, rng)
    assert res.fallback and res.optimal_mask.all()
    with pytest.raises(ValueError):
        fit_gmm_1d(c, rng)


def test_mixup_formulas():
    zo, zn = np.ones((3, 2)), np.zeros((3, 2))
    yo, yn = np.array([0.9, 0.8, 1.0]), np.array([0.1, 0.0, 0.2])
    z, y, lam = manifold_mixup(zo, yo, zn, yn, lam=0.3)
    assert lam == 0.7
    np.testing.assert_allclose(z, 0.7)
    np.testing.assert_allclose(y, 0.7 * yo + 0.3 * yn)
    rng = np.random.default_rng(7)
    lams = [mixup_coefficient(4.0, rng) for _ in range(2000)]
    assert min(lams) >= 0.5 and max(lams) <= 1.0
    # E[max(L, 1-L)] for Beta(4, 4) via the scipy oracle
    from scipy import integrate, stats
    expect = integrate.quad(lambda t: max(t, 1 - t) * stats.beta(4, 4).pdf(t), 0, 1)[0]
    assert np.mean(lams) == pytest.approx(expect, abs=0.01)
    with pytest.raises(ValueError):
        manifold_mixup(zo, yo, zn[:2], yn[:2], lam=0.5)


def test_mixup_term_hand_values():
    d = _disc()
    p = _zero_head(d.init(np.random.default_rng(8)))
    z = np.zeros((2, 3))
    assert float(mixup_term(d, p, z, np.array([0.3, 0.9]))) == pytest.approx(math.log(2), abs=1e-12)


def test_reduction_identities_bit_exact():
    rng = np.random.default_rng(9)
    d = _disc()
    p = d.init(rng)
    za, ze = rng.normal(size=(6, 3)), rng.normal(size=(6, 3))
    plain = float(gail_disc_loss(d, p, za, ze))
    assert float(weighted_disc_loss(d, p, za, ze, np.ones(6))) == plain
    w = rng.uniform(0.5, 1.5, size=6)
    base = float(weighted_disc_loss(d, p, za, ze, w))
    assert float(mixup_disc_loss(d, p, za, ze, w, za, np.ones(6), mix_weight=0.0)) == base


@pytest.mark.parametrize("seed", range(5))
def test_disc_loss_gradients(seed):
    rng = np.random.default_rng(seed)
    d = _disc()
    p = dict(d.init(rng))
    za, ze = rng.normal(size=(5, 3)), rng.normal(size=(5, 3))
    w = rng.uniform(0.5, 1.5, size=5)
    y = rng.uniform(size=5)
    assert check_gradients(lambda v: gail_disc_loss(d, v, za, ze), p)[0] < 1e-4
    assert check_gradients(lambda v: mixup_disc_loss(d, v, za, ze, w, 0.5 * (za + ze), y), p)[0] < 1e-4
    arrays = {"za": za, "ze": ze}
    assert check_gradients(lambda v: gail_disc_loss(d, ParamSet(p), v["za"], v["ze"]), arrays)[0] < 1e-4


def _setup(seed, encoded=True):
    rng = np.random.default_rng(seed)
    model = RepresentationModel(4, 2, state_repr_dim=6, action_repr_dim=3, noise_dim=2, hidden=(8,),
                                forward_hidden=7, conv_channels=(4, 4))
    rparams = model.init(rng)
    feat = Featurizer(model, encoded=encoded)
    disc = Discriminator(feat.width, (8, 8))
    dparams = disc.init(rng)
    s, a = rng.normal(size=(32, 4)), rng.normal(size=(32, 2))
    conf = rng.uniform(0.05, 1.0, size=24)
    expert = ExpertSide(rng.normal(1.0, 1.0, size=(24, 4)), rng.normal(size=(24, 2)), conf, conf > 0.5)
    return rng, model, rparams, feat, disc, dparams, s, a, expert


def _loss_at(disc, dparams, feat, rparams, s, a, expert, mode, seed):
    from sail.ail.update import split_encoder_params
    joint = dparams.merge(split_encoder_params(feat, rparams))
    loss, *_ = _loss(disc, joint, feat, s, a, expert, mode, np.random.default_rng(seed), 4.0)
    return float(loss.value if hasattr(loss, "value") else loss)


@pytest.mark.parametrize("seed", range(20))
@pytest.mark.parametrize("mode", ["plain", "weighted", "mixup"])
def test_update_descends(seed, mode):
    _, _, rparams, feat, disc, dparams, s, a, expert = _setup(seed)
    before = _loss_at(disc, dparams, feat, rparams, s, a, expert, mode, 100 + seed)
    nd, nr, diag = gail_update(disc, dparams, feat, rparams, AdamState(lr=1e-4), s, a, expert, mode,
                               np.random.default_rng(100 + seed))
    assert diag.disc_loss == pytest.approx(before, abs=1e-12)
    assert _loss_at(disc, nd, feat, nr, s, a, expert, mode, 100 + seed) < before
    for k in rparams:
        if k.startswith("fw."):
            assert nr[k] is rparams[k] or np.array_equal(nr[k], rparams[k])


def test_update_reductions_bit_exact():
    _, _, rparams, feat, disc, dparams, s, a, expert = _setup(0)
    plain = gail_update(disc, dparams, feat, rparams, AdamState(), s, a, expert, "plain", np.random.default_rng(1))
    unw = ExpertSide(expert.states, expert.actions)
    weighted = gail_update(disc, dparams, feat, rparams, AdamState(), s, a, unw, "weighted",
                           np.random.default_rng(1))
    assert plain[0].equal(weighted[0]) and plain[1].equal(weighted[1])
    uniform = ExpertSide(expert.states, expert.actions, np.ones(24))
    w1 = gail_update(disc, dparams, feat, rparams, AdamState(), s, a, uniform, "weighted", np.random.default_rng(1))
    assert plain[0].equal(w1[0])


def test_raw_featurizer_leaves_encoder_alone():
    _, _, rparams, feat, disc, dparams, s, a, expert = _setup(3, encoded=False)
    nd, nr, _ = gail_update(disc, dparams, feat, rparams, AdamState(), s, a, expert, "plain",
                            np.random.default_rng(0))
    assert nr.equal(rparams) and not nd.equal(dparams)
    with pytest.raises(ValueError):
        gail_update(disc, dparams, feat, rparams, AdamState(), s, a, expert, "nope", np.random.default_rng(0))
