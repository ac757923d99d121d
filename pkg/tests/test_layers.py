import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from dvae import autodiff as ad
from dvae.autodiff import Tensor
from dvae.errors import EmptySequenceError, ShapeError
from dvae.layers import DenseLayer, GatedTransition, GaussianHead, LstmCell, dense_forward, lstm_step, unroll

from _oracles import central_diff, lstm_reference, rel_err


def test_zero_dense_layer_outputs_zero():
    layer = DenseLayer(4, 3, "linear")
    layer.weight.data[:] = 0.0
    out = dense_forward(layer, Tensor(np.random.default_rng(0).normal(size=4)))
    assert np.all(out.data == 0.0)


def test_identity_dense_layer():
    layer = DenseLayer(3, 3, "linear")
    layer.weight.data = np.eye(3)
    x = np.array([0.5, -1.0, 2.0])
    np.testing.assert_array_equal(dense_forward(layer, Tensor(x)).data, x)


@pytest.mark.parametrize("act", ["linear", "tanh", "sigmoid", "softplus"])
def test_dense_matches_loop_reference(act):
    rng = np.random.default_rng(3)
    layer = DenseLayer(5, 4, act, rng)
    layer.bias.data = rng.normal(size=4)
    x = rng.normal(size=5)
    W, b = layer.weight.data, layer.bias.data
    pre = [b[i] + sum(W[i, j] * x[j] for j in range(5)) for i in range(4)]
    f = {"linear": lambda v: v, "tanh": np.tanh, "sigmoid": lambda v: 1 / (1 + np.exp(-v)),
         "softplus": lambda v: np.log1p(np.exp(v))}[act]
    np.testing.assert_allclose(dense_forward(layer, Tensor(x)).data, [f(p) for p in pre], rtol=0, atol=1e-12)


def test_dense_shape_error():
    with pytest.raises(ShapeError):
        DenseLayer(3, 2)(Tensor(np.ones(4)))


def test_parameter_counts():
    assert DenseLayer(7, 5).num_parameters() == 5 * 8
    D, H = 6, 9
    assert LstmCell(D, H).num_parameters() == 4 * (H * (D + H) + H)
    assert GaussianHead(3, 4, 2).num_parameters() == 4 * 4 + 2 * (2 * 5)


def test_lstm_init_conventions():
    cell = LstmCell(3, 4)
    assert np.all(cell.bias.data[4:8] == 1.0)
    assert np.all(cell.bias.data[:4] == 0.0) and np.all(cell.bias.data[8:] == 0.0)
    s = cell.initial_state()
    assert s.t == 0 and not s.h.data.any() and not s.c.data.any()


def test_zero_lstm_stays_at_zero():
    cell = LstmCell(3, 4, forget_bias=0.0)
    for p in cell.parameters():
        p.data[...] = 0.0
    s = lstm_step(cell, Tensor([1.0, -2.0, 3.0]), cell.initial_state())
    assert not s.h.data.any() and not s.c.data.any() and s.t == 1


@given(arrays(np.float64, (5, 3), elements=st.floats(-10, 10)))
@settings(max_examples=40, deadline=None)
def test_lstm_hidden_bounded(xs):
    cell = LstmCell(3, 4, np.random.default_rng(1))
    for s in unroll(cell, [Tensor(x) for x in xs]):
        assert np.all(np.abs(s.h.data) < 1.0)


def test_lstm_matches_scalar_loop():
    rng = np.random.default_rng(11)
    cell = LstmCell(3, 4, rng)
    cell.bias.data = rng.normal(size=16)
    xs = rng.normal(size=(5, 3))
    h_ref, c_ref = lstm_reference(cell.weight_x.data, cell.weight_h.data, cell.bias.data, xs, np.zeros(4), np.zeros(4))
    last = unroll(cell, [Tensor(x) for x in xs])[-1]
    np.testing.assert_allclose(last.h.data, h_ref, rtol=0, atol=1e-12)
    np.testing.assert_allclose(last.c.data, c_ref, rtol=0, atol=1e-12)


def test_lstm_step_leaves_input_state_alone():
    cell = LstmCell(2, 3, np.random.default_rng(0))
    s0 = cell.initial_state()
    s1 = lstm_step(cell, Tensor([1.0, 2.0]), s0)
    before = s1.h.data.copy()
    lstm_step(cell, Tensor([0.5, 0.5]), s1)
    np.testing.assert_array_equal(s1.h.data, before)


def test_batched_unroll_matches_unbatched():
    rng = np.random.default_rng(2)
    cell = LstmCell(3, 5, rng)
    xs = rng.normal(size=(4, 2, 3))   # T, B, D
    batched = unroll(cell, [Tensor(x) for x in xs])
    for b in range(2):
        single = unroll(cell, [Tensor(x[b]) for x in xs])
        for sb, ss in zip(batched, single):
            np.testing.assert_allclose(sb.h.data[b], ss.h.data, rtol=0, atol=1e-14)


def test_single_step_both_directions_agree():
    cell = LstmCell(2, 3, np.random.default_rng(0))
    x = [Tensor([0.3, -0.7])]
    f, b = unroll(cell, x, direction="forward"), unroll(cell, x, direction="backward")
    np.testing.assert_array_equal(f[0].h.data, b[0].h.data)


def test_empty_unroll():
    with pytest.raises(EmptySequenceError):
        unroll(LstmCell(2, 2), [])


@pytest.mark.parametrize("direction", ["forward", "backward"])
def test_unroll_causality(direction):
    rng = np.random.default_rng(4)
    cell = LstmCell(2, 3, rng)
    xs = rng.normal(size=(6, 2))
    base = unroll(cell, [Tensor(x) for x in xs], direction=direction)
    for t in range(6):
        for s in range(6):
            pert = xs.copy()
            pert[s] += 1.0
            st_ = unroll(cell, [Tensor(x) for x in pert], direction=direction)[t]
            same = np.array_equal(st_.h.data, base[t].h.data)
            seen = s <= t if direction == "forward" else s >= t
            assert same != seen, (t, s)


def test_unroll_gradient():
    rng = np.random.default_rng(5)
    cell = LstmCell(2, 3, rng)
    cell.bias.data = rng.normal(size=12)
    xs = rng.normal(size=(3, 2))
    params = [cell.weight_x, cell.weight_h, cell.bias]

    def loss():
        return ad.tsum(ad.square(unroll(cell, [Tensor(x) for x in xs])[-1].h))

    loss().backward()

    def f():
        with ad.no_grad():
            return float(loss().data)

    for p, n in zip(params, central_diff(f, [p.data for p in params])):
        assert rel_err(p.grad, n, floor=1e-6).max() < 1e-4


def test_gated_transition_closed_gate_is_identity():
    tr = GatedTransition(3, 5, rng=np.random.default_rng(0))
    tr.gate.bias.data[:] = -800.0   # sigmoid underflows to exactly 0
    z = np.random.default_rng(1).normal(size=(4, 3))
    mean, _ = tr(Tensor(z))
    np.testing.assert_array_equal(mean.data, z)


@given(st.integers(0, 10_000))
@settings(max_examples=10, deadline=None)
def test_gated_transition_gradients(seed):
    rng = np.random.default_rng(seed)
    tr = GatedTransition(2, 3, rng=rng)
    z = rng.normal(size=(2, 2))
    w = rng.normal(size=(2, 2))

    def loss():
        m, lv = tr(Tensor(z))
        return (m * Tensor(w)).sum() + lv.exp().sum()

    params = tr.parameters()
    for p in params:
        p.grad = None
    loss().backward()
    num = central_diff(lambda: float(loss().data), [p.data for p in params])
    for p, n in zip(params, num):
        assert rel_err(p.grad, n).max() < 1e-6
