import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sail.diffcore import MLP, AdamState, ConvActionEncoder, DiffError, ParamSet, Tape, adam_step, ops
from sail.diffcore import checkpoint as ckpt
from sail.diffcore.gradcheck import check_gradients

TOL = 1e-6

UNARY = {
    "tanh": ops.tanh,
    "exp": ops.exp,
    "sigmoid": ops.sigmoid,
    "log_sigmoid": ops.log_sigmoid,
    "softplus": ops.softplus,
    "square": ops.square,
    "neg": ops.neg,
    "leaky_relu": lambda x: ops.leaky_relu(x, 0.1),
    "relu": ops.relu,
    "mean_axis0": lambda x: ops.mean(x, axis=0),
    "logsumexp": lambda x: ops.logsumexp(x, axis=1),
    "transpose": ops.transpose,
    "getitem_fancy": lambda x: ops.getitem(x, np.array([0, 2, 0, 1])),
    "getitem_slice": lambda x: x[1:, ::2],
}


@pytest.mark.parametrize("name", sorted(UNARY))
def test_unary_gradients(name):
    rng = np.random.default_rng(hash(name) % 2**32)
    # keep away from relu / leaky-relu kinks
    x = rng.normal(size=(3, 4))
    x = np.where(np.abs(x) < 0.05, 0.3, x)
    err, _, _ = check_gradients(lambda d: ops.vsum(ops.square(UNARY[name](d["x"])) + UNARY[name](d["x"])), {"x": x})
    assert err < TOL


def test_positive_domain_ops():
    rng = np.random.default_rng(1)
    x = rng.uniform(0.5, 2.0, size=(4, 3))
    for fn in (ops.log, ops.sqrt, lambda v: ops.power(v, 1.7), lambda v: 1.0 / v):
        err, _, _ = check_gradients(lambda d: ops.vsum(fn(d["x"])), {"x": x})
        assert err < TOL


def test_binary_broadcast_gradients():
    rng = np.random.default_rng(2)
    a, b = rng.normal(size=(4, 3)), rng.uniform(0.5, 2, size=(3,))
    for fn in (ops.add, ops.sub, ops.mul, ops.div):
        err, _, _ = check_gradients(lambda d: ops.vsum(ops.square(fn(d["a"], d["b"]))), {"a": a, "b": b})
        assert err < TOL


def test_matmul_concat_reshape_gradients():
    rng = np.random.default_rng(3)
    arrays = {"a": rng.normal(size=(3, 4)), "b": rng.normal(size=(4, 2)), "c": rng.normal(size=(3, 5))}

    def loss(d):
        h = ops.concat([d["a"] @ d["b"], d["c"]], axis=1)
        return ops.vsum(ops.tanh(ops.reshape(h, (7, 3))))

    assert check_gradients(loss, arrays)[0] < TOL


def test_clip_gradient_only_inside():
    tape = Tape()
    x = tape.var(np.array([-2.0, 0.0, 2.0]))
    g = tape.gradient(ops.vsum(ops.clip(x, -1.0, 1.0)), x)
    np.testing.assert_array_equal(g, [0.0, 1.0, 0.0])


def _conv_reference(x, w, b):
    # independent loop implementation of a same-padded kernel-3 convolution
    B, L, _ = x.shape
    out = np.zeros((B, L, w.shape[2]))
    xp = np.pad(x, ((0, 0), (1, 1), (0, 0)))
    for n in range(B):
        for t in range(L):
            for k in range(3):
                out[n, t] += xp[n, t + k] @ w[k]
    return out + b


def test_conv1d_matches_loop_reference():
    rng = np.random.default_rng(4)
    x, w, b = rng.normal(size=(2, 5, 3)), rng.normal(size=(3, 3, 4)), rng.normal(size=4)
    np.testing.assert_allclose(ops.conv1d_same3(x, w, b), _conv_reference(x, w, b), atol=1e-12)
    err, _, _ = check_gradients(lambda d: ops.vsum(ops.square(ops.conv1d_same3(d["x"], d["w"], d["b"]))),
                                {"x": x, "w": w, "b": b})
    assert err < TOL


def test_mlp_and_encoder_parameter_gradients():
    rng = np.random.default_rng(5)
    net = MLP(3, (5, 4), 2, "tanh", prefix="m.")
    enc = ConvActionEncoder(2, channels=(4, 6), out_dim=3)
    p = net.init(rng).merge(enc.init(rng))
    x, a = rng.normal(size=(6, 3)), rng.normal(size=(6, 2))

    def loss(d):
        return ops.vsum(ops.square(net(d, x))) + ops.vsum(ops.square(enc(d, a)))

    err, _, _ = check_gradients(loss, dict(p))
    assert err < 1e-5


def test_mlp_jvp_matches_finite_difference():
    rng = np.random.default_rng(6)
    net = MLP(3, (5, 5), 2, "tanh")
    p = net.init(rng)
    x = rng.normal(size=(4, 3))
    t = {k: rng.normal(size=v.shape) for k, v in p.items()}
    out, jv = net.jvp(p, x, t)
    h = 1e-6
    plus = net(ParamSet({k: p[k] + h * t[k] for k in p}), x)
    minus = net(ParamSet({k: p[k] - h * t[k] for k in p}), x)
    np.testing.assert_allclose(out, net(p, x), atol=1e-14)
    np.testing.assert_allclose(jv, (plus - minus) / (2 * h), rtol=1e-6, atol=1e-8)


def test_shape_errors_name_the_layer():
    net = MLP(3, (4,), 1, "tanh", prefix="q.")
    with pytest.raises(DiffError, match="q"):
        net(net.init(np.random.default_rng(0)), np.zeros((2, 5)))


def test_backward_requires_scalar_and_finite():
    tape = Tape()
    x = tape.var(np.ones(3))
    with pytest.raises(DiffError):
        tape.gradient(x * 2.0, x)
    with pytest.raises(DiffError):
        ops.log(tape.var(np.array([0.0])))


def test_unused_leaf_gets_zero_gradient():
    tape = Tape()
    a, b = tape.var(np.ones(2)), tape.var(np.ones(3))
    g = tape.gradient(ops.vsum(a * 3.0), {"a": a, "b": b})
    np.testing.assert_array_equal(g["b"], np.zeros(3))
    np.testing.assert_array_equal(g["a"], [3.0, 3.0])


def test_adam_matches_hand_update():
    p = ParamSet({"w": np.array([1.0, -2.0])})
    g = {"w": np.array([0.5, 0.25])}
    st_ = AdamState(lr=0.1)
    new = adam_step(p, g, st_)
    # first step: m_hat = g, v_hat = g^2, update = lr * g / (|g| + eps)
    np.testing.assert_allclose(new["w"], p["w"] - 0.1 * g["w"] / (np.abs(g["w"]) + 1e-8), rtol=1e-12)
    m = 0.1 * g["w"]
    v = 0.001 * g["w"] ** 2
    g2 = {"w": np.array([-1.0, 2.0])}
    new2 = adam_step(new, g2, st_)
    m = 0.9 * m + 0.1 * g2["w"]
    v = 0.999 * v + 0.001 * g2["w"] ** 2
    expect = new["w"] - 0.1 * (m / (1 - 0.9**2)) / (np.sqrt(v / (1 - 0.999**2)) + 1e-8)
    np.testing.assert_allclose(new2["w"], expect, rtol=1e-12)


def test_adam_rejects_nan_naming_parameter():
    p = ParamSet({"layer.W": np.zeros(2)})
    with pytest.raises(DiffError, match="layer.W"):
        adam_step(p, {"layer.W": np.array([np.nan, 0.0])}, AdamState())


def test_paramset_flat_roundtrip_and_immutability():
    rng = np.random.default_rng(7)
    p = ParamSet({"b": rng.normal(size=(2, 3)), "a": rng.normal(size=4)})
    assert list(p) == ["a", "b"]
    q = p.unflat(p.flat())
    assert q.equal(p)
    with pytest.raises(ValueError):
        p.merge({"a": np.zeros(4)})
    with pytest.raises(ValueError):
        p.replace({"a": np.zeros(5)})


@given(st.lists(st.integers(1, 4), min_size=1, max_size=3), st.integers(0, 2**31 - 1))
def test_checkpoint_roundtrip_bit_exact(shape, seed):
    rng = np.random.default_rng(seed)
    arrays = {"x.W": rng.normal(size=shape), "y": rng.normal(size=(2,)) * 1e-300}
    blob = ckpt.dumps(arrays, {"k": 1})
    back, meta = ckpt.loads(blob)
    assert meta == {"k": 1}
    for k in arrays:
        assert back[k].tobytes() == arrays[k].tobytes()
    assert ckpt.dumps(back, meta) == blob


def test_checkpoint_rejects_garbage(tmp_path):
    with pytest.raises(ckpt.CheckpointError):
        ckpt.loads(b"not a checkpoint at all")
    path = tmp_path / "c.sail"
    h = ckpt.save(path, {"a": np.arange(3.0)})
    assert h == ckpt.file_hash(path)
    blob = path.read_bytes()
    with pytest.raises(ckpt.CheckpointError):
        ckpt.loads(blob[:-5])
