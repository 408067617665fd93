import json
import os
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from flowturbo import _kernels_py, kernels, net as netmod
from flowturbo.errors import (
    CheckpointError,
    ConditionIndexError,
    DimensionError,
    ParameterBudgetError,
    StateError,
)
from flowturbo.net import RefinerNet, VelocityNet

GOLDEN = Path(__file__).parent / "data" / "golden_forward.json"


def _golden_cases():
    v = VelocityNet(2, num_classes=3, hidden=(16, 16), seed=1234)
    r = RefinerNet(2, num_classes=3, hidden=(8,), seed=99)
    # a zero-output refiner is a useless golden; perturb its last layer deterministically
    r.layers[-1][0][...] = np.linspace(-0.5, 0.5, r.layers[-1][0].size).reshape(r.layers[-1][0].shape)
    r.snap_to_float32()
    x = np.linspace(-1.5, 1.5, 12).reshape(6, 2)
    vp = np.cos(x)
    y = np.array([0, 1, 2, 3, 0, 1])
    return v, r, x, vp, 0.37, y


def _regen_golden():
    v, r, x, vp, t, y = _golden_cases()
    GOLDEN.parent.mkdir(exist_ok=True)
    GOLDEN.write_text(json.dumps({
        "velocity": v.forward(x, t, y).tolist(),
        "refiner": r.forward(x, vp, t, y).tolist(),
    }, indent=1))


if os.environ.get("FLOWTURBO_REGEN_GOLDEN"):
    _regen_golden()


def test_golden_forward():
    v, r, x, vp, t, y = _golden_cases()
    golden = json.loads(GOLDEN.read_text())
    # golden was frozen from one backend; the other differs only in exp() rounding
    np.testing.assert_allclose(v.forward(x, t, y), golden["velocity"], rtol=1e-12, atol=1e-15)
    np.testing.assert_allclose(r.forward(x, vp, t, y), golden["refiner"], rtol=1e-12, atol=1e-15)


def test_zero_output_layer_gives_zero(rng):
    v = VelocityNet(2, 2, seed=3)
    v.layers[-1][0][...] = 0.0
    out = v.forward(rng.normal(size=(7, 2)), 0.4, 1)
    assert np.array_equal(out, np.zeros((7, 2)))


def test_untrained_refiner_is_identity_refinement(rng):
    r = RefinerNet(2, 2, seed=5)
    x, vp = rng.normal(size=(9, 2)), rng.normal(size=(9, 2))
    offset = r.forward(x, vp, 0.2, 0)
    assert np.array_equal(offset + vp, vp)


@pytest.mark.parametrize("kind", ["velocity", "refiner"])
def test_batch_independence(kind, rng):
    net = VelocityNet(2, 2, seed=8) if kind == "velocity" else RefinerNet(2, 2, seed=8)
    if kind == "refiner":
        net.layers[-1][0][...] = rng.normal(size=net.layers[-1][0].shape)
    x, vp = rng.normal(size=(2, 2)), rng.normal(size=(2, 2))
    y = np.array([0, 2])

    def f(sl):
        return net.forward(x[sl], 0.6, y[sl]) if kind == "velocity" else net.forward(x[sl], vp[sl], 0.6, y[sl])

    stacked = np.vstack([f(slice(0, 1)), f(slice(1, 2))])
    assert np.array_equal(f(slice(0, 2)), stacked)


def test_forward_deterministic(rng):
    v = VelocityNet(2, 2, seed=11)
    x = rng.normal(size=(32, 2))
    assert np.array_equal(v.forward(x, 0.5, 1), v.forward(x.copy(), 0.5, 1))


def test_condition_index_errors(rng):
    v = VelocityNet(2, num_classes=2)
    x = rng.normal(size=(3, 2))
    with pytest.raises(ConditionIndexError):
        v.forward(x, 0.5, 3)
    with pytest.raises(ConditionIndexError):
        v.forward(x, 0.5, [-1, 0, 0])
    with pytest.raises(DimensionError):
        v.forward(x, 0.5, [0, 1])
    with pytest.raises(DimensionError):
        v.forward(rng.normal(size=(3, 3)), 0.5, 0)


def test_refiner_parameter_budget():
    base = VelocityNet(2, 2, hidden=(192, 192))
    RefinerNet(2, 2, hidden=(48, 48), paired=base)
    with pytest.raises(ParameterBudgetError):
        RefinerNet(2, 2, hidden=(64, 64), paired=base)


# -- gradients ---------------------------------------------------------------


def _fd_gradient(net, loss, h=1e-4):
    """Central differences over every parameter, computed independently of backward()."""
    base = net.params.copy()
    grad = np.empty_like(base)
    for i in range(base.size):
        p = base.copy()
        p[i] += h
        net.set_params(p)
        up = loss()
        p[i] -= 2 * h
        net.set_params(p)
        down = loss()
        grad[i] = (up - down) / (2 * h)
    net.set_params(base)
    return grad


def _rel_err(a, b):
    return np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-3))


def _random_case(rng):
    hidden = tuple(int(h) for h in rng.integers(3, 9, size=rng.integers(1, 4)))
    C = int(rng.integers(0, 4))
    if rng.random() < 0.5:
        net = VelocityNet(2, C, hidden=hidden, seed=int(rng.integers(1 << 30)))
    else:
        net = RefinerNet(2, C, hidden=hidden, seed=int(rng.integers(1 << 30)))
    # give every parameter a non-trivial value, including the zero-initialised ones
    net.set_params(net.params + rng.normal(0, 0.3, net.n_params))
    B = int(rng.integers(1, 6))
    state = rng.normal(size=(B, net.state_width))
    t = float(rng.random())
    y = rng.integers(0, C + 1, size=B)
    w = rng.normal(size=(B, net.dim))
    return net, state, t, y, w


def gradient_check(rng):
    net, state, t, y, w = _random_case(rng)

    def loss():
        out = net._run(state, net.first_layer_table(t), net._labels(y, len(y)))
        return 0.5 * np.sum(w * out**2)

    out, tape = net.forward_train(state, t, y)
    analytic = net.backward(tape, w * out)
    return _rel_err(analytic, _fd_gradient(net, loss))


def test_gradient_check_single(rng):
    assert gradient_check(rng) < 1e-4


def test_train_forward_matches_inference(rng):
    net, state, t, y, _ = _random_case(rng)
    out, _ = net.forward_train(state, t, y)
    ref = net._run(state, net.first_layer_table(t), net._labels(y, len(y)))
    np.testing.assert_allclose(out, ref, rtol=1e-13, atol=1e-14)


def test_zero_loss_zero_gradient(rng):
    net, state, t, y, _ = _random_case(rng)
    _, tape = net.forward_train(state, t, y)
    assert not net.backward(tape, np.zeros((len(y), net.dim))).any()


def test_gradient_linear_in_batch(rng):
    net, state, t, y, w = _random_case(rng)
    _, tape = net.forward_train(state, t, y)
    total = net.backward(tape, w)
    parts = 0.0
    for i in range(len(y)):
        _, tp = net.forward_train(state[i : i + 1], t, y[i : i + 1])
        parts = parts + net.backward(tp, w[i : i + 1])
    np.testing.assert_allclose(total, parts, rtol=1e-10, atol=1e-12)


def test_backward_is_bit_reproducible(rng):
    net, state, t, y, w = _random_case(rng)
    _, t1 = net.forward_train(state, t, y)
    _, t2 = net.forward_train(state, t, y)
    assert np.array_equal(net.backward(t1, w), net.backward(t2, w))


def test_stale_tape_rejected(rng):
    net, state, t, y, w = _random_case(rng)
    _, tape = net.forward_train(state, t, y)
    net.set_params(net.params * 1.0)
    with pytest.raises(StateError):
        net.backward(tape, w)
    other = net.copy()
    _, tape = net.forward_train(state, t, y)
    with pytest.raises(StateError):
        other.backward(tape, w)


# -- checkpoints ---------------------------------------------------------------


@pytest.mark.parametrize("kind", ["velocity", "refiner"])
def test_checkpoint_roundtrip_bit_exact(kind, tmp_path):
    base = VelocityNet(2, 2, seed=1)
    net = base if kind == "velocity" else RefinerNet(2, 2, seed=2, paired=base)
    path = tmp_path / "net.ftrb"
    netmod.save(net, path, extra={"note": "x"})
    loaded = netmod.load(path)
    assert type(loaded) is type(net)
    assert np.array_equal(loaded.params, net.params)
    assert loaded.extra == {"note": "x"}
    assert loaded.to_bytes({"note": "x"}) == path.read_bytes()


def test_checkpoint_layout(tmp_path):
    net = VelocityNet(2, 1, hidden=(4,))
    data = net.to_bytes()
    assert data[:4] == b"FTRB"
    version = int.from_bytes(data[4:8], "little")
    meta_len = int.from_bytes(data[8:12], "little")
    meta = json.loads(data[12 : 12 + meta_len])
    assert version == 1 and meta["kind"] == "velocity" and meta["dim"] == 2
    params = np.frombuffer(data[12 + meta_len :], dtype="<f4")
    assert params.size == net.n_params
    # declaration order: first layer weight first
    assert np.array_equal(params[: net.layers[0][0].size], net.layers[0][0].ravel().astype(np.float32))


@pytest.mark.parametrize("blob", [b"XXXX", b"FTRB\x02\x00\x00\x00\x00\x00\x00\x00", b"FTRB\x01\x00\x00\x00\x05\x00\x00\x00{bad}"])
def test_checkpoint_corrupt(blob):
    with pytest.raises(CheckpointError):
        netmod.from_bytes(blob)


def test_checkpoint_truncated_params():
    data = VelocityNet(2, 1, hidden=(4,)).to_bytes()
    with pytest.raises(CheckpointError):
        netmod.from_bytes(data[:-4])


# -- kernel backends ---------------------------------------------------------


def _backends():
    out = [_kernels_py]
    try:
        from flowturbo import _ext

        out.append(_ext)
    except ImportError:
        pass
    return out


@pytest.mark.parametrize("mod", _backends(), ids=lambda m: m.__name__.rsplit(".", 1)[-1])
def test_kernels_match_reference(mod, rng):
    def silu(z):
        return z / (1 + np.exp(-z))

    x = rng.normal(size=(33, 3)) * 4
    W = rng.normal(size=(3, 17))
    table = rng.normal(size=(4, 17))
    y = rng.integers(0, 4, size=33).astype(np.int64)
    out = np.empty((33, 17))
    mod.affine_table_silu(x, W, table, y, out)
    np.testing.assert_allclose(out, silu(x @ W + table[y]), rtol=1e-12, atol=1e-13)
    mod.affine_table(x, W, table, y, out)
    np.testing.assert_allclose(out, x @ W + table[y], rtol=1e-12, atol=1e-13)

    z = rng.normal(size=(33, 17)) * 5
    b = rng.normal(size=17)
    zz = z.copy()
    mod.bias_silu(zz, b)
    np.testing.assert_allclose(zz, silu(z + b), rtol=1e-12, atol=1e-13)
    zz, a = z.copy(), np.empty_like(z)
    mod.bias_silu_keep(zz, b, a)
    np.testing.assert_allclose(zz, z + b, rtol=1e-15)
    np.testing.assert_allclose(a, silu(z + b), rtol=1e-12, atol=1e-13)

    g = rng.normal(size=z.shape)
    gg = g.copy()
    mod.silu_backward(gg, z)
    s = 1 / (1 + np.exp(-z))
    np.testing.assert_allclose(gg, g * (s + z * s * (1 - s)), rtol=1e-12, atol=1e-13)

    u, c = rng.normal(size=(5, 2)), rng.normal(size=(5, 2))
    o = np.empty((5, 2))
    mod.cfg_combine(u, c, 1.5, o)
    np.testing.assert_allclose(o, -0.5 * u + 1.5 * c, rtol=1e-14)
    mod.euler_step(u, c, 0.1, o)
    np.testing.assert_allclose(o, u + 0.1 * c, rtol=1e-14)
    mod.heun_step(u, c, u, 0.05, o)
    np.testing.assert_allclose(o, u + 0.05 * (c + u), rtol=1e-14)


@pytest.mark.parametrize("mod", _backends(), ids=lambda m: m.__name__.rsplit(".", 1)[-1])
def test_silu_kernels_extreme_inputs(mod):
    z = np.array([[-800.0, -40.0, 0.0, 40.0, 800.0]])
    zz = z.copy()
    mod.bias_silu(zz, np.zeros(5))
    assert np.all(np.isfinite(zz))
    np.testing.assert_allclose(zz, [[0.0, -40 * np.exp(-40.0), 0.0, 40.0, 800.0]], atol=1e-14)
    g = np.ones_like(z)
    mod.silu_backward(g, z)
    assert np.all(np.isfinite(g))
    np.testing.assert_allclose(g[0, [0, 2, 4]], [0.0, 0.5, 1.0], atol=1e-14)


def test_backend_is_reported():
    assert kernels.BACKEND in ("cython", "python")


def test_gradient_check_hundred_nets():
    rng = np.random.default_rng(7)
    worst = max(gradient_check(rng) for _ in range(100))
    assert worst < 1e-4




@settings(max_examples=30, deadline=None)
@given(B=st.integers(1, 300), row=st.integers(0, 299), seed=st.integers(0, 2**16))
def test_rows_do_not_depend_on_batch(B, row, seed):
    r = np.random.default_rng(seed)
    net = VelocityNet(2, 2, hidden=(64, 64), seed=seed)
    net.layers[-1][0][...] = r.normal(size=net.layers[-1][0].shape)
    x = r.normal(size=(B, 2))
    y = r.integers(0, 3, size=B)
    i = row % B
    full = net.forward(x, 0.3, y)
    assert np.array_equal(full[i : i + 1], net.forward(x[i : i + 1], 0.3, y[i : i + 1]))
