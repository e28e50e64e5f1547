import numpy as np
import pytest

from sail import _accel


def _gae_loop(r, v, d, gamma, lam):
    adv = np.zeros(len(r))
    running = 0.0
    for t in reversed(range(len(r))):
        nonterm = 0.0 if d[t] else 1.0
        delta = r[t] + gamma * v[t + 1] * nonterm - v[t]
        running = delta + gamma * lam * nonterm * running
        adv[t] = running
    return adv


@pytest.mark.parametrize("flag", ["0", "1"])
def test_gae_paths_match_loop(monkeypatch, flag):
    monkeypatch.setenv("SAIL_NO_NUMBA", flag)
    rng = np.random.default_rng(0)
    r, v = rng.normal(size=50), rng.normal(size=51)
    d = rng.random(50) < 0.1
    np.testing.assert_allclose(_accel.gae_kernel(r, v, d, 0.99, 0.95), _gae_loop(r, v, d, 0.99, 0.95), atol=1e-12)


def test_flag_selects_path(monkeypatch):
    monkeypatch.setenv("SAIL_NO_NUMBA", "1")
    assert not _accel.numba_enabled()
    monkeypatch.setenv("SAIL_NO_NUMBA", "0")
    assert _accel.numba_enabled()


def test_knn_paths_agree(monkeypatch):
    rng = np.random.default_rng(1)
    ref, q = rng.normal(size=(60, 3)), rng.normal(size=(15, 3))
    out = {}
    for flag in ("0", "1"):
        monkeypatch.setenv("SAIL_NO_NUMBA", flag)
        out[flag] = (_accel.knn(q, ref, 5), _accel.knn(ref, ref, 5, exclude_self=True))
    for a, b in zip(out["0"], out["1"]):
        np.testing.assert_allclose(a[0], b[0], atol=1e-12)
        np.testing.assert_array_equal(a[1], b[1])
    brute = np.sort(np.linalg.norm(q[:, None] - ref[None], axis=2), axis=1)[:, :5]
    np.testing.assert_allclose(out["1"][0][0], brute, atol=1e-12)
    assert not np.any(out["1"][1][1] == np.arange(60)[:, None])


def test_em_step_paths_agree(monkeypatch):
    rng = np.random.default_rng(2)
    x = np.concatenate([rng.normal(0, 1, 40), rng.normal(5, 1, 60)])
    args = (x, np.array([0.5, 0.5]), np.array([0.0, 4.0]), np.array([1.0, 2.0]))
    res = {}
    for flag in ("0", "1"):
        monkeypatch.setenv("SAIL_NO_NUMBA", flag)
        res[flag] = _accel.em_step(*args)
    for a, b in zip(res["0"], res["1"]):
        np.testing.assert_allclose(a, b, rtol=1e-10, atol=1e-12)
    w, mu, var, resp, _ = res["1"]
    np.testing.assert_allclose(resp.sum(axis=1), 1.0)
    np.testing.assert_allclose(w, resp.mean(axis=0))
    np.testing.assert_allclose(mu, resp.T @ x / resp.sum(axis=0))
