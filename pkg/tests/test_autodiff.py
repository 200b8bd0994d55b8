import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

import gatraj.autodiff as ad
from gatraj.autodiff import Tensor, grad_check


def _param(rng, *shape, scale=1.0):
    return Tensor(rng.normal(scale=scale, size=shape), requires_grad=True)


# -- forward ----------------------------------------------------------------


def test_matmul_identity():
    a = Tensor([[1.0, 2.0], [3.0, 4.0]])
    out = a @ Tensor(np.eye(2))
    np.testing.assert_array_equal(out.data, [[1, 2], [3, 4]])


def test_sigmoid_zero():
    assert Tensor(0.0).sigmoid().item() == 0.5


def test_conv1d_preserves_length():
    rng = np.random.default_rng(0)
    x = Tensor(rng.normal(size=(2, 8, 3)))
    w = Tensor(rng.normal(size=(3, 3, 5)))
    assert ad.conv1d(x, w).shape == (2, 8, 5)


def test_conv1d_matches_direct_sum():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(1, 6, 2))
    w = rng.normal(size=(3, 2, 4))
    out = ad.conv1d(Tensor(x), Tensor(w)).data
    padded = np.pad(x, ((0, 0), (1, 1), (0, 0)))
    for t in range(6):
        expect = sum(padded[0, t + k] @ w[k] for k in range(3))
        np.testing.assert_allclose(out[0, t], expect, rtol=1e-13)


def test_shape_mismatch_names_op_and_shapes():
    with pytest.raises(ad.ShapeError, match=r"matmul.*\(2, 3\).*\(2, 3\)"):
        Tensor(np.ones((2, 3))) @ Tensor(np.ones((2, 3)))
    with pytest.raises(ad.ShapeError, match=r"add.*\(2, 3\).*\(4,\)"):
        Tensor(np.ones((2, 3))) + Tensor(np.ones(4))


def test_forward_is_bit_identical_on_repeat():
    rng = np.random.default_rng(2)
    x = Tensor(rng.normal(size=(3, 5)))
    w = Tensor(rng.normal(size=(5, 5)))

    def f():
        return ad.softmax((x @ w).tanh(), axis=-1).data

    assert np.array_equal(f(), f())


# -- softmax ----------------------------------------------------------------


def test_softmax_examples():
    np.testing.assert_allclose(ad.softmax(Tensor([1.0, 1.0, 1.0])).data, [1 / 3] * 3, atol=1e-15)
    np.testing.assert_allclose(ad.softmax(Tensor([0.0, math.log(2)])).data, [1 / 3, 2 / 3], atol=1e-15)
    big = ad.softmax(Tensor([1000.0, 0.0])).data
    assert np.all(np.isfinite(big))
    np.testing.assert_allclose(big, [1.0, 0.0], atol=1e-300)


def test_softmax_empty_axis():
    with pytest.raises(ad.ShapeError):
        ad.softmax(Tensor(np.zeros((2, 0))), axis=-1)


@settings(max_examples=200, deadline=None)
@given(arrays(np.float64, st.integers(1, 12), elements=st.floats(-700, 700)))
def test_softmax_on_simplex(x):
    p = ad.softmax(Tensor(x)).data
    assert np.all(p >= 0)
    assert abs(p.sum() - 1.0) <= 1e-12


# -- backward -----------------------------------------------------------------


def test_square_derivative():
    x = Tensor(3.0, requires_grad=True)
    (x * x).backward()
    assert x.grad == 6.0


def test_tanh_derivative_at_zero():
    x = Tensor(0.0, requires_grad=True)
    x.tanh().backward()
    assert x.grad == 1.0


def test_backward_rejects_non_scalar():
    x = Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(ad.ShapeError):
        (x * 2).backward()


def test_backward_returns_gradient_map_and_accumulates():
    x = Tensor(2.0, requires_grad=True)
    y = Tensor(5.0, requires_grad=True)
    grads = (x * y + x).backward()
    assert grads[x] == 6.0 and grads[y] == 2.0
    (x * 1.0).backward()
    assert x.grad == 7.0


def test_shared_subexpression_visited_once():
    x = Tensor(1.5, requires_grad=True)
    h = x.tanh()
    (h * h + h).backward()
    t = math.tanh(1.5)
    assert x.grad == pytest.approx((2 * t + 1) * (1 - t * t), rel=1e-14)


def test_no_grad_records_nothing():
    x = Tensor(1.0, requires_grad=True)
    with ad.no_grad():
        y = x * 3
    assert not y.requires_grad and y.op == "mul"


# -- grad_check -----------------------------------------------------------------


def test_grad_check_sum_of_squares():
    rng = np.random.default_rng(3)
    x = _param(rng, 7)
    assert grad_check(lambda: (x * x).sum(), [x]) <= 1e-7
    # The analytic gradient is 2x.
    np.testing.assert_allclose(x.grad, 2 * x.data, rtol=1e-15)


def test_grad_check_softmax_cross_entropy():
    rng = np.random.default_rng(4)
    logits = _param(rng, 4, 6)
    target = Tensor(np.eye(6)[rng.integers(0, 6, size=4)])
    err = grad_check(lambda: -(target * ad.softmax(logits).log()).sum(), [logits])
    assert err <= 1e-5


def test_grad_check_constant_is_zero():
    x = Tensor(np.ones(3), requires_grad=True)
    assert grad_check(lambda: Tensor(4.0) + x.sum() * 0.0, [x]) == 0.0


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_grad_check_non_finite_raises():
    x = Tensor(np.array([0.0]), requires_grad=True)
    with pytest.raises(ad.GradCheckError):
        grad_check(lambda: x.log().sum(), [x], eps=1e-3)


def test_grad_check_rejects_bad_eps():
    x = Tensor(np.ones(2), requires_grad=True)
    with pytest.raises(ValueError):
        grad_check(lambda: x.sum(), [x], eps=0)


UNARY = {
    "exp": lambda x: x.exp(),
    "log": lambda x: (x * x + 0.5).log(),
    "tanh": lambda x: x.tanh(),
    "sigmoid": lambda x: x.sigmoid(),
    "relu": lambda x: x.relu(),
    "softplus": lambda x: x.softplus(),
    "abs": lambda x: x.abs(),
    "sqrt": lambda x: (x * x + 1.0).sqrt(),
    "pow": lambda x: (x * x + 1.0) ** 1.5,
    "neg_div": lambda x: 1.0 / (x * x + 2.0) - x,
    "clamp_min": lambda x: x.clamp_min(0.1),
    "reshape_transpose": lambda x: x.reshape(2, 3).transpose() * Tensor(np.arange(6.0).reshape(3, 2)),
    "getitem": lambda x: x[1:4] * x[::2][:3],
    "mean": lambda x: x.mean() * x,
}


@pytest.mark.parametrize("name", sorted(UNARY))
@pytest.mark.parametrize("seed", range(10))
def test_primitive_gradients(name, seed):
    rng = np.random.default_rng(seed)
    x = _param(rng, 6)
    weights = Tensor(rng.normal(size=UNARY[name](Tensor(x.data)).shape))
    assert grad_check(lambda: (UNARY[name](x) * weights).sum(), [x]) <= 1e-4


@pytest.mark.parametrize("seed", range(10))
def test_broadcast_matmul_gradients(seed):
    rng = np.random.default_rng(seed)
    a = _param(rng, 2, 3, 4)
    b = _param(rng, 4, 5)
    bias = _param(rng, 5)
    w = Tensor(rng.normal(size=(2, 3, 5)))
    assert grad_check(lambda: ((a @ b + bias) * w).sum(), [a, b, bias]) <= 1e-4


@pytest.mark.parametrize("seed", range(10))
def test_structural_op_gradients(seed):
    rng = np.random.default_rng(seed)
    a = _param(rng, 3, 4)
    b = _param(rng, 3, 2)
    idx = np.array([2, 0, 2, 1])
    w1 = Tensor(rng.normal(size=(3, 6)))
    w2 = Tensor(rng.normal(size=(2, 3, 4)))
    w3 = Tensor(rng.normal(size=(4, 4)))

    def f():
        cat = (ad.concat([a, b], axis=1) * w1).sum()
        stk = (ad.stack([a, a * 2.0], axis=0) * w2).sum()
        gat = (ad.gather_rows(a, idx) * w3).sum()
        return cat + stk + gat

    assert grad_check(f, [a, b]) <= 1e-4


@pytest.mark.parametrize("seed", range(10))
def test_softmax_and_layer_norm_gradients(seed):
    rng = np.random.default_rng(seed)
    x = _param(rng, 3, 5)
    gain = _param(rng, 5)
    bias = _param(rng, 5)
    w = Tensor(rng.normal(size=(3, 5)))

    def f():
        return (ad.softmax(ad.layer_norm(x, gain, bias), axis=0) * w).sum()

    assert grad_check(f, [x, gain, bias]) <= 1e-4


@pytest.mark.parametrize("seed", range(10))
def test_conv1d_gradients(seed):
    rng = np.random.default_rng(seed)
    x = _param(rng, 2, 8, 3)
    w = _param(rng, 3, 3, 4)
    b = _param(rng, 4)
    target = Tensor(rng.normal(size=(2, 8, 4)))
    assert grad_check(lambda: (ad.conv1d(x, w, b) * target).sum(), [x, w, b]) <= 1e-4


@pytest.mark.parametrize("seed", range(10))
def test_segment_ops_gradients(seed):
    rng = np.random.default_rng(seed)
    scores = _param(rng, 7)
    values = _param(rng, 7, 3)
    seg = np.array([0, 0, 1, 3, 3, 3, 1])
    w = Tensor(rng.normal(size=(4, 3)))

    def f():
        alpha = ad.segment_softmax(scores, seg, 4)
        msg = ad.scatter_add_rows(values * alpha.reshape(7, 1), seg, 4)
        return (msg * w).sum()

    assert grad_check(f, [scores, values]) <= 1e-4


def test_segment_softmax_rows_sum_to_one():
    rng = np.random.default_rng(5)
    seg = rng.integers(0, 5, size=40)
    alpha = ad.segment_softmax(Tensor(rng.normal(size=40) * 50), seg, 5).data
    sums = np.bincount(seg, weights=alpha, minlength=5)
    present = np.bincount(seg, minlength=5) > 0
    np.testing.assert_allclose(sums[present], 1.0, atol=1e-12)


# -- lstm cell ----------------------------------------------------------------


def _lstm_params(rng, f, h, scale=0.5):
    return _param(rng, f, 4 * h, scale=scale), _param(rng, h, 4 * h, scale=scale), _param(rng, 4 * h, scale=scale)


def test_lstm_zero_weights_and_states():
    w_x, w_h, b = (Tensor(np.zeros(s)) for s in [(3, 8), (2, 8), (8,)])
    h, c = ad.lstm_cell(Tensor(np.zeros((4, 3))), Tensor(np.zeros((4, 2))), Tensor(np.zeros((4, 2))), w_x, w_h, b)
    assert np.all(h.data == 0) and np.all(c.data == 0)


def test_lstm_forget_saturation_preserves_memory():
    rng = np.random.default_rng(6)
    hid = 3
    w_x, w_h, b = _lstm_params(rng, 2, hid)
    bias = b.data.copy()
    bias[hid : 2 * hid] = 1e4
    x = Tensor(rng.normal(size=(5, 2)))
    h0 = Tensor(rng.normal(size=(5, hid)))
    c0 = Tensor(rng.normal(size=(5, hid)))
    _, c1 = ad.lstm_cell(x, h0, c0, w_x, w_h, Tensor(bias))
    pre = x.data @ w_x.data + h0.data @ w_h.data + bias
    i = 1 / (1 + np.exp(-pre[:, :hid]))
    g = np.tanh(pre[:, 2 * hid : 3 * hid])
    np.testing.assert_allclose(c1.data, c0.data + i * g, rtol=1e-12)


def test_lstm_matches_textbook_equations():
    rng = np.random.default_rng(7)
    hid = 4
    w_x, w_h, b = _lstm_params(rng, 3, hid)
    x, h0, c0 = (rng.normal(size=s) for s in [(2, 3), (2, hid), (2, hid)])
    h1, c1 = ad.lstm_cell(Tensor(x), Tensor(h0), Tensor(c0), w_x, w_h, b)
    z = x @ w_x.data + h0 @ w_h.data + b.data
    sig = lambda v: 1 / (1 + np.exp(-v))  # noqa: E731
    i, f, g, o = sig(z[:, :hid]), sig(z[:, hid : 2 * hid]), np.tanh(z[:, 2 * hid : 3 * hid]), sig(z[:, 3 * hid :])
    c_ref = f * c0 + i * g
    np.testing.assert_allclose(c1.data, c_ref, rtol=1e-13)
    np.testing.assert_allclose(h1.data, o * np.tanh(c_ref), rtol=1e-13)


def test_lstm_shape_mismatch():
    rng = np.random.default_rng(8)
    w_x, w_h, b = _lstm_params(rng, 3, 4)
    with pytest.raises(ad.ShapeError):
        ad.lstm_cell(Tensor(np.zeros((2, 3))), Tensor(np.zeros((3, 4))), Tensor(np.zeros((3, 4))), w_x, w_h, b)


@pytest.mark.parametrize("seed", range(10))
def test_lstm_twelve_step_gradients(seed):
    rng = np.random.default_rng(seed)
    hid = 4
    w_x, w_h, b = _lstm_params(rng, 3, hid)
    xs = _param(rng, 12, 2, 3)
    readout = Tensor(rng.normal(size=(2, hid)))

    def f():
        h = Tensor(np.zeros((2, hid)))
        c = Tensor(np.zeros((2, hid)))
        for t in range(12):
            h, c = ad.lstm_cell(xs[t], h, c, w_x, w_h, b)
        return (h * readout).sum() + (c * c).sum()

    assert grad_check(f, [w_x, w_h, b, xs]) <= 1e-4


@settings(max_examples=80, deadline=None)
@given(st.integers(1, 300), st.sampled_from([1, 2, 7, 32, 160]), st.sampled_from([1, 2, 64, 256]), st.integers(0, 2**31 - 1))
def test_matmul_rows_independent_of_position(m, k, n, seed):
    rng = np.random.default_rng(seed)
    x, w = rng.normal(size=(m, k)), Tensor(rng.normal(size=(k, n)))
    perm = rng.permutation(m)
    a = (Tensor(x) @ w).data
    b = (Tensor(x[perm]) @ w).data
    np.testing.assert_array_equal(a[perm], b)
