import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gatraj.autodiff import Tensor
from gatraj.losses import (
    best_mode,
    cls_loss,
    evaluate_predictions,
    format_metrics,
    gaussian_nll,
    laplace_nll,
    min_ade,
    min_fde,
    soft_target,
    total_loss,
)
from oracles import best_mode_ref, cls_loss_ref, laplace_nll_ref, min_ade_ref, min_fde_ref, soft_target_ref


def _simplex(rng, n, k):
    p = rng.dirichlet(np.ones(k), size=n)
    return p / p.sum(-1, keepdims=True)


# -- best mode ------------------------------------------------------------------


def test_best_mode_exact_match():
    y = np.random.default_rng(0).normal(size=(12, 2))
    assert best_mode(np.stack([y, y + 1.0]), y) == 0
    assert best_mode(np.stack([y + 1.0, y]), y) == 1


def test_best_mode_ties_lowest():
    y = np.zeros((4, 2))
    m = np.ones((4, 2))
    assert best_mode(np.stack([m, m, m]), y) == 0


def test_best_mode_by_distance():
    y = np.zeros((1, 2))
    modes = np.array([[[math.sqrt(5.0), 0.0]], [[math.sqrt(2.0), 0.0]], [[3.0, 0.0]]])
    assert best_mode(modes, y) == 1


def test_best_mode_matches_oracle_batched():
    rng = np.random.default_rng(1)
    for _ in range(100):
        k, t = int(rng.integers(1, 6)), int(rng.integers(1, 13))
        loc = rng.normal(size=(3, k, t, 2))
        y = rng.normal(size=(3, t, 2))
        got = best_mode(loc, y)
        assert got.tolist() == [best_mode_ref(loc[i].tolist(), y[i].tolist()) for i in range(3)]


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31 - 1), st.sampled_from([0.25, 0.5, 2.0, 4.0, 1024.0]))
def test_best_mode_scale_invariant(seed, c):
    # scaling the errors by a power of two keeps every comparison exact
    rng = np.random.default_rng(seed)
    y = rng.normal(size=(6, 2))
    err = rng.normal(size=(5, 6, 2))
    assert best_mode(y + err, y) == best_mode(y + c * err, y)


# -- Laplace / Gaussian NLL --------------------------------------------------------


def _t(x):
    return Tensor(np.asarray(x, dtype=float))


def test_laplace_perfect_fit_unit_scale():
    y = np.random.default_rng(0).normal(size=(3, 12, 2))
    v = laplace_nll(_t(y), _t(np.ones_like(y)), y).item()
    assert v == pytest.approx(2 * math.log(2), rel=1e-15)
    assert v == pytest.approx(1.3863, abs=1e-4)


def test_laplace_unit_offset_in_x():
    y = np.zeros((2, 12, 2))
    mu = y.copy()
    mu[..., 0] += 1.0
    v = laplace_nll(_t(mu), _t(np.ones_like(y)), y).item()
    assert v == pytest.approx(2 * math.log(2) + 1.0, rel=1e-15)
    assert v == pytest.approx(2.3863, abs=1e-4)


def test_laplace_matches_oracle():
    rng = np.random.default_rng(2)
    for _ in range(100):
        n, t = int(rng.integers(1, 5)), int(rng.integers(1, 13))
        mu, y = rng.normal(size=(n, t, 2)), rng.normal(size=(n, t, 2))
        b = rng.uniform(0.05, 3.0, size=(n, t, 2))
        got = laplace_nll(_t(mu), _t(b), y).item()
        assert abs(got - laplace_nll_ref(mu.tolist(), b.tolist(), y.tolist())) <= 1e-12


@pytest.mark.parametrize("bad", [0.0, -1.0])
def test_laplace_rejects_nonpositive_scale(bad):
    y = np.zeros((1, 2, 2))
    b = np.ones_like(y)
    b[0, 1, 0] = bad
    with pytest.raises(ValueError, match="positive"):
        laplace_nll(_t(y), _t(b), y)


def test_laplace_minimized_at_truth():
    rng = np.random.default_rng(3)
    y = rng.normal(size=(2, 12, 2))
    b = _t(rng.uniform(0.2, 2.0, size=y.shape))
    best = laplace_nll(_t(y), b, y).item()
    for _ in range(50):
        assert laplace_nll(_t(y + rng.normal(scale=1e-3, size=y.shape)), b, y).item() > best


def test_gaussian_perfect_fit():
    y = np.zeros((1, 4, 2))
    v = gaussian_nll(_t(y), _t(np.ones_like(y)), y).item()
    assert v == pytest.approx(math.log(2 * math.pi), rel=1e-15)
    with pytest.raises(ValueError):
        gaussian_nll(_t(y), _t(np.zeros_like(y)), y)


# -- soft target and classification ------------------------------------------------


def test_soft_target_equidistant_uniform():
    y = np.zeros((3, 2))
    modes = np.array([[[1.0, 0.0]] * 3, [[0.0, 1.0]] * 3, [[-1.0, 0.0]] * 3, [[0.0, -1.0]] * 3])
    np.testing.assert_allclose(soft_target(modes, y), 0.25, rtol=1e-15)


def test_soft_target_two_modes_closed_form():
    y = np.zeros((1, 2))
    modes = np.array([[[0.0, 0.0]], [[math.log(2), 0.0]]])
    np.testing.assert_allclose(soft_target(modes, y), [2 / 3, 1 / 3], rtol=1e-15)


def test_soft_target_limit():
    y = np.zeros((2, 2))
    prev = 0.0
    for far in (1.0, 10.0, 100.0, 1000.0):
        modes = np.stack([y, y + far, y - far])
        p = soft_target(modes, y)[0]
        assert p >= prev
        prev = p
    assert prev == pytest.approx(1.0, abs=1e-12)


def test_soft_target_matches_oracle():
    rng = np.random.default_rng(4)
    for _ in range(100):
        k, t = int(rng.integers(1, 7)), int(rng.integers(1, 13))
        modes, y = rng.normal(size=(k, t, 2)) * 3, rng.normal(size=(t, 2))
        np.testing.assert_allclose(soft_target(modes, y), soft_target_ref(modes.tolist(), y.tolist()), atol=1e-12)


def test_soft_target_carries_no_gradient():
    loc = Tensor(np.random.default_rng(0).normal(size=(2, 3, 4, 2)), requires_grad=True)
    assert isinstance(soft_target(loc, np.zeros((2, 4, 2))), np.ndarray)


def test_cls_uniform_and_onehot():
    u = np.full((2, 4), 0.25)
    assert cls_loss(u, _t(u)).item() == pytest.approx(math.log(4), rel=1e-15)
    onehot = np.array([[1.0, 0.0, 0.0]])
    assert cls_loss(onehot, _t(onehot)).item() == 0.0


def test_cls_clamps_zero_probability():
    v = cls_loss(np.array([[0.0, 1.0]]), _t([[1.0, 0.0]])).item()
    assert v == pytest.approx(-math.log(1e-12), rel=1e-15)


def test_cls_matches_oracle():
    rng = np.random.default_rng(5)
    for _ in range(100):
        n, k = int(rng.integers(1, 5)), int(rng.integers(1, 7))
        tgt, pred = _simplex(rng, n, k), _simplex(rng, n, k)
        assert abs(cls_loss(tgt, _t(pred)).item() - cls_loss_ref(tgt.tolist(), pred.tolist())) <= 1e-12


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 8), st.integers(0, 2**31 - 1))
def test_cls_gibbs_inequality(k, seed):
    rng = np.random.default_rng(seed)
    tgt = _simplex(rng, 1, k)
    tgt = np.maximum(tgt, 1e-6)
    tgt /= tgt.sum()
    entropy = -(tgt * np.log(tgt)).sum()
    assert abs(cls_loss(tgt, _t(tgt)).item() - entropy) <= 1e-9
    other = _simplex(rng, 1, k)
    assert cls_loss(tgt, _t(other)).item() >= entropy - 1e-9


def test_cls_gradient_reaches_probs_only():
    probs = Tensor(np.array([[0.2, 0.3, 0.5]]), requires_grad=True)
    cls_loss(np.array([[0.1, 0.6, 0.3]]), probs).backward()
    np.testing.assert_allclose(probs.grad, -np.array([[0.1, 0.6, 0.3]]) / probs.data, rtol=1e-15)


def test_total_loss_weights():
    assert total_loss(_t(1.0), _t(0.5)).item() == 1.5
    assert total_loss(_t(1.0), _t(0.5), cls_weight=0.0).item() == 1.0


# -- metrics ------------------------------------------------------------------


def test_ade_three_four_five():
    y = np.random.default_rng(0).normal(size=(1, 12, 2))
    pred = (y + np.array([3.0, 4.0]))[:, None]
    assert min_ade(pred, y) == pytest.approx(5.0, rel=1e-14)
    assert min_fde(pred, y) == pytest.approx(5.0, rel=1e-14)


def test_perfect_mode_gives_zero():
    rng = np.random.default_rng(1)
    y = rng.normal(size=(3, 12, 2))
    pred = np.concatenate([rng.normal(size=(3, 2, 12, 2)), y[:, None]], axis=1)
    assert min_ade(pred, y) == 0.0
    assert min_fde(pred, y) == 0.0


def test_fde_final_offset():
    y = np.zeros((1, 5, 2))
    pred = np.zeros((1, 1, 5, 2))
    pred[0, 0, -1] = (0.0, 2.0)
    assert min_fde(pred, y) == 2.0


def test_fde_bounded_by_each_agent():
    rng = np.random.default_rng(2)
    pred, y = rng.normal(size=(4, 3, 12, 2)), rng.normal(size=(4, 12, 2))
    per_agent = np.linalg.norm(pred[:, :, -1] - y[:, None, -1], axis=-1).min(axis=1)
    assert min_fde(pred, y) == pytest.approx(per_agent.mean(), rel=1e-15)
    assert min_fde(pred, y) <= per_agent.max()


def test_metrics_match_oracle():
    rng = np.random.default_rng(3)
    for _ in range(100):
        n, k, t = int(rng.integers(1, 4)), int(rng.integers(1, 4)), int(rng.integers(1, 13))
        pred, y = rng.normal(size=(n, k, t, 2)) * 4, rng.normal(size=(n, t, 2)) * 4
        assert abs(min_ade(pred, y) - min_ade_ref(pred.tolist(), y.tolist())) <= 1e-12
        assert abs(min_fde(pred, y) - min_fde_ref(pred.tolist(), y.tolist())) <= 1e-12


def test_metrics_per_agent_min():
    # agent 0 is matched by mode 0, agent 1 by mode 1: per-agent selection gives 0
    y = np.zeros((2, 3, 2))
    pred = np.zeros((2, 2, 3, 2))
    pred[0, 1] += 5.0
    pred[1, 0] += 5.0
    assert min_ade(pred, y) == 0.0


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 6), st.integers(0, 2**31 - 1))
def test_ade_monotone_in_k(k, seed):
    rng = np.random.default_rng(seed)
    pred, y = rng.normal(size=(3, k + 1, 12, 2)), rng.normal(size=(3, 12, 2))
    assert min_ade(pred, y) <= min_ade(pred[:, :k], y)
    assert min_fde(pred, y) <= min_fde(pred[:, :k], y)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_metrics_translation_invariant(seed):
    rng = np.random.default_rng(seed)
    # dyadic coordinates keep the shifted differences exact
    pred = rng.integers(-2048, 2048, size=(3, 2, 12, 2)) / 64.0
    y = rng.integers(-2048, 2048, size=(3, 12, 2)) / 64.0
    v = rng.integers(-8192, 8192, size=2) / 8.0
    assert min_ade(pred + v, y + v) == min_ade(pred, y)
    assert min_fde(pred + v, y + v) == min_fde(pred, y)


def test_metric_report_lines():
    y = np.zeros((2, 3, 2))
    pred = np.full((2, 4, 3, 2), 0.0)
    pred[..., 0] = 3.0
    pred[..., 1] = 4.0
    rep = evaluate_predictions(pred, y)
    assert (rep.k, rep.n_agents) == (4, 2)
    assert format_metrics([rep]) == "minADE 4 5.0\nminFDE 4 5.0\n"
