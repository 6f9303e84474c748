#!/usr/bin/env python3
"""
Tests for the comparator importance scores
"""
import sys

import numpy as np
import pytest
from numpy.testing import assert_allclose

from utils.baselines import (
    LassoPathConfig,
    MaldConfig,
    lasso_coefficients,
    lasso_entry_scores,
    mald_scores,
    single_shot_group_lasso,
)
from utils.errors import InvalidConfig
from utils.grip import BssConfig, RegularizationPrior
from utils.knockoffs import augment
from utils.neuralnet import NetConfig, NetParams, init_params


def _orthonormal_design(seed=0, n=256, p=16):
    rng = np.random.default_rng(seed)
    q, _ = np.linalg.qr(rng.standard_normal((n, p)))
    beta = 2.0 ** (-np.arange(p) / 2.0) * rng.choice([-1.0, 1.0], size=p)
    beta = beta[rng.permutation(p)]
    y = q @ beta
    half = p // 2
    return augment(q[:, :half], q[:, half:], y), q, y


def test_lasso_entry_order_on_orthonormal_design():
    data, q, y = _orthonormal_design()
    cfg = LassoPathConfig()
    scores = lasso_entry_scores(data, cfg)

    corr = np.abs(q.T @ y) / q.shape[0]
    np.testing.assert_array_equal(np.argsort(-scores), np.argsort(-corr))

    grid = cfg.grid_for(q, y)
    step = grid[1] / grid[0]
    assert np.all(scores <= corr * (1 + 1e-9))
    assert np.all(scores >= corr * step * (1 - 1e-9))


def test_lasso_noise_scores_bounded_by_grid():
    rng = np.random.default_rng(1)
    x = rng.standard_normal((400, 6))
    x = (x - x.mean(axis=0)) / x.std(axis=0)
    y = rng.standard_normal(400)
    data = augment(x[:, :3], x[:, 3:], y)
    scores = lasso_entry_scores(data, LassoPathConfig(n_lambdas=50))
    lam_max = np.max(np.abs(x.T @ y)) / 400
    assert np.all(scores >= 0)
    assert scores.max() <= lam_max


def test_lasso_explicit_grid():
    grid = [1.0, 0.5, 0.1]
    cfg = LassoPathConfig(lambda_grid=grid)
    assert_allclose(cfg.grid_for(np.ones((3, 2)), np.ones(3)), grid)
    with pytest.raises(InvalidConfig):
        LassoPathConfig(lambda_grid=[0.1, 0.5])


def test_mald_linear_network():
    rng = np.random.default_rng(2)
    x = rng.standard_normal((40, 1))
    data = augment(x, rng.standard_normal((40, 1)), rng.standard_normal(40))
    params = NetParams(
        w0=np.array([[3.0, -2.0]]),
        b0=np.array([100.0]),
        deep=[(np.array([[1.0]]), np.zeros(1))],
        head_w=np.array([1.0]),
        head_b=np.zeros(1),
    )
    net = NetConfig(input_dim=2, depth=1, width=1, learning_rate=0.0, batch_size=None, deep_l2=0.5)
    scores = mald_scores(data, net, train_steps=5, cfg=MaldConfig(), rng=0, params=params)
    assert_allclose(scores, [3.0, 2.0])


def test_mald_config_validation():
    with pytest.raises(InvalidConfig):
        MaldConfig(r=0.0)
    with pytest.raises(InvalidConfig):
        MaldConfig(eval_batches=0)


def test_single_shot_uses_one_regime():
    rng = np.random.default_rng(3)
    x = rng.standard_normal((100, 3))
    data = augment(x, rng.standard_normal((100, 3)), x[:, 0] + 0.1 * rng.standard_normal(100))
    net = NetConfig(input_dim=6, depth=1, width=4, batch_size=32)
    cfg = BssConfig(total_steps=50, block_size=10, prior=RegularizationPrior(1e-3, 1e-1), net=net)
    scores = single_shot_group_lasso(data, cfg, 0)
    assert scores.snapshots_used == 5
    assert len(set(scores.regimes)) == 1
    lam, a = scores.regimes[0]
    assert lam == pytest.approx(1e-2)
    assert a == 1.0

def test_lasso_satisfies_kkt_at_each_grid_point():
    rng = np.random.default_rng(4)
    x = rng.standard_normal((200, 10))
    x = (x - x.mean(axis=0)) / x.std(axis=0)
    y = 2.0 * x[:, 0] - x[:, 1] + 0.5 * rng.standard_normal(200)
    grid = np.array([0.5, 0.1, 0.02])
    coefs = lasso_coefficients(x, y, grid, LassoPathConfig(lambda_grid=grid, tol=1e-12, max_iters=20000))
    for k, lam in enumerate(grid):
        beta = coefs[:, k]
        corr = x.T @ (y - x @ beta) / 200
        active = np.abs(beta) > 0
        assert active.any()
        assert_allclose(corr[active], lam * np.sign(beta[active]), atol=1e-5)
        assert np.all(np.abs(corr[~active]) <= lam + 1e-5)


def _mald_setup(seed=5):
    rng = np.random.default_rng(seed)
    x, x_tilde = rng.standard_normal((60, 4)), rng.standard_normal((60, 4))
    y = x[:, 0] + rng.standard_normal(60)
    net = NetConfig(input_dim=8, depth=1, width=6, learning_rate=0.0, batch_size=None)
    return x, x_tilde, y, net, init_params(net, rng)


def test_mald_zero_column_scores_zero():
    x, x_tilde, y, net, params = _mald_setup()
    params.w0[:, 2] = 0.0
    scores = mald_scores(augment(x, x_tilde, y), net, train_steps=3, cfg=MaldConfig(), rng=0, params=params)
    assert scores[2] == 0.0
    assert scores.shape == (8,)
    assert np.all(scores >= 0)


def test_mald_scores_permute_with_inputs():
    x, x_tilde, y, net, params = _mald_setup(6)
    scores = mald_scores(augment(x, x_tilde, y), net, train_steps=3, cfg=MaldConfig(), rng=0, params=params)

    perm = np.array([2, 0, 3, 1])
    full = np.concatenate([perm, perm + 4])
    permuted = params.copy()
    permuted.w0 = params.w0[:, full]
    moved = mald_scores(augment(x[:, perm], x_tilde[:, perm], y), net, train_steps=3, cfg=MaldConfig(),
                        rng=0, params=permuted)
    assert_allclose(moved, scores[full], rtol=1e-10, atol=1e-14)



if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
